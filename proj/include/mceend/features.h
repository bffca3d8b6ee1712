// mceend/features.h
//
// Waveform -> log-mel filterbanks -> spliced/subsampled model inputs.

#ifndef MCEEND_FEATURES_H_
#define MCEEND_FEATURES_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mceend/encoders.h"
#include "mceend/tensor.h"
#include "mceend/wav.h"

namespace mceend {

struct FeatureConfig {
  std::size_t n_mels = 23;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  std::size_t context = 7;     // frames on each side
  std::size_t subsample = 10;
  double log_floor = 1e-10;

  std::size_t spliced_dim() const { return n_mels * (2 * context + 1); }
  std::size_t frame_length(int rate) const;
  std::size_t frame_shift(int rate) const;
  // Seconds covered by one subsampled output frame.
  double output_frame_seconds() const { return frame_shift_ms * 1e-3 * static_cast<double>(subsample); }
  void validate() const;
};

// Number of 10 ms frames without padding: floor((N - L) / S) + 1, or 0 when
// the waveform is shorter than one frame.
std::size_t num_frames(std::size_t samples, std::size_t frame_length, std::size_t frame_shift);

// Triangular filters [n_mels x (n_fft/2 + 1)], edges equally spaced on the
// mel scale 2595 log10(1 + f/700) from 0 Hz to Nyquist.
Tensor mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Natural-log mel energies of the Hann-windowed magnitude spectrum,
// [n_mels x T10]. Throws DataError when shorter than one frame.
Tensor log_mel(const Waveform &w, const FeatureConfig &cfg);

// Frames t-c..t+c stacked (edges replicated), every subsample-th frame kept:
// [n_mels (2c+1) x ceil(T10 / subsample)].
Tensor splice_and_subsample(const Tensor &feats, const FeatureConfig &cfg);

// Mean instead of concatenation over the same context: [n_mels x T].
Tensor context_average(const Tensor &feats, const FeatureConfig &cfg);

struct ChannelFeatures {
  Tensor spliced;   // [n_mels (2c+1) x T]
  Tensor averaged;  // [n_mels x T]
};

// Per-channel features; longer channels are truncated to the shortest.
std::vector<ChannelFeatures> extract_channel_features(std::span<const Waveform> channels,
                                                      const FeatureConfig &cfg);

// Variant-specific input for frames [begin, end) of the selected channels.
ModelInput model_input_from_features(std::span<const ChannelFeatures> features,
                                     std::span<const std::size_t> selected, Variant variant,
                                     std::size_t begin, std::size_t end);

// Variant-specific input from all channels over the whole recording.
ModelInput assemble_model_input(std::span<const Waveform> channels, Variant variant,
                                const FeatureConfig &cfg);

}  // namespace mceend

#endif  // MCEEND_FEATURES_H_
