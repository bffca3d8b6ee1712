// mceend/features.cc

#include "mceend/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mceend/ops.h"

namespace mceend {

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct PlanDeleter {
  void operator()(fftw_plan_s *p) const { fftw_destroy_plan(p); }
};

std::size_t output_frames(std::size_t frames, const FeatureConfig &cfg) {
  return (frames + cfg.subsample - 1) / cfg.subsample;
}

}  // namespace

std::size_t FeatureConfig::frame_length(int rate) const {
  return static_cast<std::size_t>(std::lround(frame_length_ms * 1e-3 * rate));
}

std::size_t FeatureConfig::frame_shift(int rate) const {
  return static_cast<std::size_t>(std::lround(frame_shift_ms * 1e-3 * rate));
}

void FeatureConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("feature config: " + m); };
  if (n_mels == 0) fail("n_mels must be positive");
  if (!(frame_length_ms > 0) || !(frame_shift_ms > 0)) fail("frame length and shift must be positive");
  if (subsample == 0) fail("subsample must be positive");
  if (!(log_floor > 0)) fail("log_floor must be positive");
}

std::size_t num_frames(std::size_t samples, std::size_t frame_length, std::size_t frame_shift) {
  if (samples < frame_length) return 0;
  return (samples - frame_length) / frame_shift + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate) {
  const std::size_t bins = n_fft / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(top * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  }
  Tensor fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb.at(m, k) = w;
    }
  }
  return fb;
}

Tensor log_mel(const Waveform &w, const FeatureConfig &cfg) {
  cfg.validate();
  const std::size_t len = cfg.frame_length(w.sample_rate);
  const std::size_t shift = cfg.frame_shift(w.sample_rate);
  const std::size_t frames = num_frames(w.samples.size(), len, shift);
  if (frames == 0) {
    throw DataError("waveform of " + std::to_string(w.samples.size()) +
                    " samples is shorter than one " + std::to_string(len) + "-sample frame");
  }
  const std::size_t n_fft = next_pow2(len);
  const std::size_t bins = n_fft / 2 + 1;
  const Tensor fb = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate);

  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(len - 1));
  }
  double *in = fftw_alloc_real(n_fft);
  fftw_complex *out = fftw_alloc_complex(bins);
  std::unique_ptr<fftw_plan_s, PlanDeleter> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in, out, FFTW_ESTIMATE));

  Tensor feats({cfg.n_mels, frames});
  std::vector<double> mag(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(in, in + n_fft, 0.0);
    for (std::size_t i = 0; i < len; ++i) in[i] = w.samples[t * shift + i] * window[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb.at(m, k) * mag[k];
      feats.at(m, t) = std::log(std::max(e, cfg.log_floor));
    }
  }
  plan.reset();
  fftw_free(in);
  fftw_free(out);
  return feats;
}

Tensor splice_and_subsample(const Tensor &feats, const FeatureConfig &cfg) {
  const std::size_t d = feats.dim(0), frames = feats.dim(1);
  const std::size_t width = 2 * cfg.context + 1;
  const std::size_t out_frames = output_frames(frames, cfg);
  Tensor out({d * width, out_frames});
  for (std::size_t k = 0; k < out_frames; ++k) {
    const auto center = static_cast<std::ptrdiff_t>(k * cfg.subsample);
    for (std::size_t j = 0; j < width; ++j) {
      const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(
          center + static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(cfg.context), 0,
          static_cast<std::ptrdiff_t>(frames) - 1);
      for (std::size_t i = 0; i < d; ++i) {
        out.at(j * d + i, k) = feats.at(i, static_cast<std::size_t>(src));
      }
    }
  }
  return out;
}

Tensor context_average(const Tensor &feats, const FeatureConfig &cfg) {
  const std::size_t d = feats.dim(0);
  const std::size_t width = 2 * cfg.context + 1;
  Tensor spliced = splice_and_subsample(feats, cfg);
  Tensor out({d, spliced.dim(1)});
  for (std::size_t k = 0; k < spliced.dim(1); ++k)
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) acc += spliced.at(j * d + i, k);
      out.at(i, k) = acc / static_cast<double>(width);
    }
  return out;
}

std::vector<ChannelFeatures> extract_channel_features(std::span<const Waveform> channels,
                                                      const FeatureConfig &cfg) {
  if (channels.empty()) throw DataError("no input channels");
  std::size_t n = channels[0].samples.size();
  for (const auto &w : channels) {
    if (w.sample_rate != channels[0].sample_rate) throw DataError("channels differ in sample rate");
    n = std::min(n, w.samples.size());
  }
  std::vector<ChannelFeatures> out;
  for (const auto &w : channels) {
    Waveform cut{std::vector<double>(w.samples.begin(), w.samples.begin() + static_cast<std::ptrdiff_t>(n)),
                 w.sample_rate};
    Tensor lm = log_mel(cut, cfg);
    out.push_back({splice_and_subsample(lm, cfg), context_average(lm, cfg)});
  }
  return out;
}

namespace {

Tensor stack_columns(std::span<const ChannelFeatures> features, std::span<const std::size_t> selected,
                     Tensor ChannelFeatures::*field, std::size_t begin, std::size_t end) {
  const std::size_t rows = (features[selected[0]].*field).dim(0);
  const std::size_t width = end - begin;
  Tensor out({selected.size(), rows, width});
  auto dst = out.data();
  for (std::size_t c = 0; c < selected.size(); ++c) {
    const Tensor &src = features[selected[c]].*field;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.data().data() + r * src.dim(1) + begin, width,
                  dst.data() + (c * rows + r) * width);
    }
  }
  return out;
}

}  // namespace

ModelInput model_input_from_features(std::span<const ChannelFeatures> features,
                                     std::span<const std::size_t> selected, Variant variant,
                                     std::size_t begin, std::size_t end) {
  if (selected.empty()) throw DataError("no channels selected");
  for (std::size_t c : selected) {
    if (c >= features.size()) {
      throw DataError("channel " + std::to_string(c) + " requested but only " +
                      std::to_string(features.size()) + " available");
    }
    if (end > features[c].spliced.dim(1) || begin >= end) {
      throw DataError("frame range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside " + std::to_string(features[c].spliced.dim(1)) + " frames");
    }
  }
  ModelInput in;
  if (variant == Variant::kSpatioTemporal) {
    in.multi = stack_columns(features, selected, &ChannelFeatures::spliced, begin, end);
    return in;
  }
  in.single = mean_over_axis(stack_columns(features, selected, &ChannelFeatures::spliced, begin, end), 0);
  if (variant == Variant::kCoAttention) {
    in.multi = stack_columns(features, selected, &ChannelFeatures::averaged, begin, end);
  }
  return in;
}

ModelInput assemble_model_input(std::span<const Waveform> channels, Variant variant,
                                const FeatureConfig &cfg) {
  const auto features = extract_channel_features(channels, cfg);
  std::vector<std::size_t> all(features.size());
  std::iota(all.begin(), all.end(), 0);
  return model_input_from_features(features, all, variant, 0, features[0].spliced.dim(1));
}

}  // namespace mceend
