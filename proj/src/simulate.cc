// mceend/simulate.cc

#include "mceend/simulate.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace mceend {

namespace {

constexpr std::size_t kFirHalf = 32;  // 65 taps

double uniform(std::mt19937_64 &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sample_at(const std::vector<double> &x, double pos) {
  if (pos < 0.0 || x.empty() || pos > static_cast<double>(x.size() - 1)) return 0.0;
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 == x.size()) return x[i];
  const double frac = pos - static_cast<double>(i);
  return x[i] * (1.0 - frac) + x[i + 1] * frac;
}

}  // namespace

double distance(const Point &a, const Point &b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

void SessionSpec::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("session spec: " + m); };
  if (!(duration > 0)) fail("duration must be positive");
  if (speakers < 1) fail("need at least one speaker");
  if (channels < 1) fail("need at least one channel");
  if (sample_rate != 8000 && sample_rate != 16000) fail("sample_rate must be 8000 or 16000");
  if (!(utterance_min > 0) || utterance_max < utterance_min) fail("bad utterance range");
  if (!(pause_mean > 0)) fail("pause_mean must be positive");
  if (!std::isfinite(snr_db)) fail("snr_db must be finite");
  if (!drift_ppm.empty() && drift_ppm.size() != channels) fail("drift_ppm needs one value per channel");
  if (min_speaker_angle_deg * static_cast<double>(speakers) >= 360.0) fail("min_speaker_angle_deg too large");
}

Tensor GroundTruth::labels(std::size_t frames, double frame_seconds) const {
  Tensor out({speakers.size(), frames});
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    for (std::size_t t = 0; t < frames; ++t) {
      const double c = (static_cast<double>(t) + 0.5) * frame_seconds;
      for (const auto &iv : speakers[s]) {
        if (c >= iv.onset && c < iv.offset) {
          out.at(s, t) = 1.0;
          break;
        }
      }
    }
  }
  return out;
}

double GroundTruth::overlap_ratio() const {
  const auto steps = static_cast<std::size_t>(std::ceil(duration * 1000.0));
  std::vector<unsigned char> count(steps, 0);
  for (const auto &spk : speakers) {
    for (const auto &iv : spk) {
      const auto a = static_cast<std::size_t>(std::llround(iv.onset * 1000.0));
      const auto b = std::min(steps, static_cast<std::size_t>(std::llround(iv.offset * 1000.0)));
      for (std::size_t i = a; i < b; ++i) ++count[i];
    }
  }
  std::size_t any = 0, multi = 0;
  for (unsigned char c : count) {
    any += c >= 1;
    multi += c >= 2;
  }
  return any == 0 ? 0.0 : static_cast<double>(multi) / static_cast<double>(any);
}

std::vector<Segment> GroundTruth::segments(const std::string &session) const {
  std::vector<Segment> out;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    for (const auto &iv : speakers[s]) out.push_back({session, speaker_label(s), iv.onset, iv.offset});
  }
  return out;
}

GroundTruth GroundTruth::from_segments(const std::vector<Segment> &segs, double duration) {
  std::vector<std::string> names;
  for (const auto &s : segs) {
    if (std::find(names.begin(), names.end(), s.speaker) == names.end()) names.push_back(s.speaker);
  }
  std::sort(names.begin(), names.end());
  GroundTruth g;
  g.duration = duration;
  g.speakers.resize(names.size());
  for (const auto &s : segs) {
    const auto idx = static_cast<std::size_t>(
        std::find(names.begin(), names.end(), s.speaker) - names.begin());
    g.speakers[idx].push_back({s.onset, s.offset});
  }
  for (auto &spk : g.speakers) {
    std::sort(spk.begin(), spk.end(), [](const Interval &a, const Interval &b) { return a.onset < b.onset; });
  }
  return g;
}

GroundTruth sample_dialog(const SessionSpec &spec, std::mt19937_64 &rng) {
  spec.validate();
  std::exponential_distribution<double> pause(1.0 / spec.pause_mean);
  GroundTruth g;
  g.duration = spec.duration;
  g.speakers.resize(spec.speakers);
  for (auto &spk : g.speakers) {
    double t = pause(rng);
    while (t < spec.duration) {
      const double len = uniform(rng, spec.utterance_min, spec.utterance_max);
      // Kept on the millisecond grid so RTTM round trips are exact.
      const double on = std::round(t * 1000.0) / 1000.0;
      const double off = std::round(std::min(t + len, spec.duration) * 1000.0) / 1000.0;
      if (off > on) spk.push_back({on, off});
      t += len + pause(rng);
    }
  }
  return g;
}

RoomLayout sample_layout(const SessionSpec &spec, std::mt19937_64 &rng) {
  spec.validate();
  RoomLayout layout;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    const double r = spec.mic_radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    layout.mics.push_back({r * std::cos(a), r * std::sin(a), spec.mic_height});
  }
  const double min_sep = spec.min_speaker_angle_deg * std::numbers::pi / 180.0;
  std::vector<double> angles;
  while (angles.size() < spec.speakers) {
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    bool ok = true;
    for (double b : angles) {
      double d = std::abs(a - b);
      d = std::min(d, 2.0 * std::numbers::pi - d);
      if (d < min_sep) ok = false;
    }
    if (ok) angles.push_back(a);
  }
  for (double a : angles) {
    layout.speakers.push_back({spec.speaker_radius * std::cos(a), spec.speaker_radius * std::sin(a),
                               spec.speaker_height});
  }
  return layout;
}

RoomLayout make_hybrid(const RoomLayout &layout) {
  RoomLayout out = layout;
  for (auto &p : out.speakers) p = layout.speakers.at(0);
  return out;
}

Voice make_voice(std::uint64_t voice_seed, int sample_rate) {
  std::mt19937_64 rng(voice_seed);
  const double nyquist = sample_rate / 2.0;
  struct Bump {
    double f, bw, db;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < 3; ++i) {
    bumps.push_back({uniform(rng, 200.0, nyquist - 300.0), uniform(rng, 100.0, 400.0),
                     uniform(rng, 6.0, 20.0)});
  }
  const double tilt = uniform(rng, -12.0, 0.0);  // dB across the band
  const std::size_t n = 2 * kFirHalf + 1;
  std::vector<double> mag(kFirHalf + 1);
  for (std::size_t k = 0; k <= kFirHalf; ++k) {
    const double f = sample_rate * static_cast<double>(k) / static_cast<double>(n);
    double db = tilt * f / nyquist;
    for (const auto &b : bumps) db += b.db * std::exp(-0.5 * (f - b.f) * (f - b.f) / (b.bw * b.bw));
    mag[k] = std::pow(10.0, db / 20.0);
  }
  Voice v;
  v.fir.resize(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(kFirHalf);
    double acc = mag[0];
    for (std::size_t k = 1; k <= kFirHalf; ++k) {
      acc += 2.0 * mag[k] * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) * m / static_cast<double>(n));
    }
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    v.fir[i] = acc * w;
    energy += v.fir[i] * v.fir[i];
  }
  for (double &h : v.fir) h /= std::sqrt(energy);
  return v;
}

Waveform synth_speaker_signal(const std::vector<Interval> &intervals, const Voice &voice,
                              const SessionSpec &spec, std::mt19937_64 &rng) {
  Waveform w;
  w.sample_rate = spec.sample_rate;
  const double rate = spec.sample_rate;
  w.samples.assign(static_cast<std::size_t>(std::llround(spec.duration * rate)), 0.0);
  std::normal_distribution<double> white(0.0, 1.0);
  const std::size_t taps = voice.fir.size();
  for (const auto &iv : intervals) {
    const auto a = static_cast<std::size_t>(std::llround(iv.onset * rate));
    const auto b = std::min(w.samples.size(), static_cast<std::size_t>(std::llround(iv.offset * rate)));
    if (b <= a) continue;
    const double gain = spec.amplitude * std::pow(10.0, uniform(rng, -spec.gain_spread_db, spec.gain_spread_db) / 20.0);
    const double am_rate = uniform(rng, 3.0, 5.0);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    std::vector<double> noise(b - a + taps - 1);
    for (double &x : noise) x = white(rng);
    for (std::size_t i = a; i < b; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps; ++k) acc += voice.fir[k] * noise[i - a + k];
      const double t = static_cast<double>(i - a) / rate;
      const double am = 1.0 + 0.6 * std::sin(2.0 * std::numbers::pi * am_rate * t + phase);
      w.samples[i] = gain * am * acc;
    }
  }
  return w;
}

std::vector<Waveform> render_channels(const std::vector<Waveform> &sources,
                                      const RoomLayout &layout, const SessionSpec &spec,
                                      std::mt19937_64 &rng, const RenderOptions &opts) {
  if (sources.size() != layout.speakers.size()) {
    throw std::invalid_argument("render_channels: " + std::to_string(sources.size()) +
                                " sources for " + std::to_string(layout.speakers.size()) + " positions");
  }
  const std::size_t n = sources.empty() ? 0 : sources[0].samples.size();
  const double rate = spec.sample_rate;
  std::vector<Waveform> out;
  for (std::size_t c = 0; c < layout.mics.size(); ++c) {
    std::vector<double> mix(n, 0.0);
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const double d = distance(layout.speakers[s], layout.mics[c]);
      if (d <= 0.0) throw std::invalid_argument("render_channels: speaker on top of microphone");
      const double delay = d / layout.speed_of_sound * rate;
      const double gain = 1.0 / d;
      const auto &x = sources[s].samples;
      for (std::size_t i = 0; i < n; ++i) mix[i] += gain * sample_at(x, static_cast<double>(i) - delay);
    }
    const double drift = spec.drift_ppm.empty() ? 0.0 : spec.drift_ppm.at(c);
    if (drift != 0.0) {
      std::vector<double> resampled(n);
      for (std::size_t i = 0; i < n; ++i) resampled[i] = sample_at(mix, static_cast<double>(i) * (1.0 + drift * 1e-6));
      mix.swap(resampled);
    }
    if (opts.noise) {
      double power = 0.0;
      for (double v : mix) power += v * v;
      power = n > 0 ? power / static_cast<double>(n) : 0.0;
      if (power <= 0.0) power = spec.amplitude * spec.amplitude;
      std::normal_distribution<double> noise(0.0, std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0)));
      for (double &v : mix) v += noise(rng);
    }
    out.push_back({std::move(mix), spec.sample_rate});
  }
  return out;
}

std::uint64_t session_seed(std::uint64_t dataset_seed, std::size_t index) {
  return splitmix64(splitmix64(dataset_seed) ^ (static_cast<std::uint64_t>(index) + 1));
}

Session simulate_session(const SessionSpec &spec, std::uint64_t seed, const std::string &id) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Session s;
  s.id = id;
  s.seed = seed;
  s.spec = spec;
  s.layout = sample_layout(spec, rng);
  if (spec.hybrid) s.layout = make_hybrid(s.layout);
  s.truth = sample_dialog(spec, rng);
  const std::uint64_t shared = rng();
  std::vector<Waveform> sources;
  for (std::size_t k = 0; k < spec.speakers; ++k) {
    s.voice_seeds.push_back(spec.identical_voice ? shared : rng());
  }
  for (std::size_t k = 0; k < spec.speakers; ++k) {
    sources.push_back(synth_speaker_signal(s.truth.speakers[k], make_voice(s.voice_seeds[k], spec.sample_rate), spec, rng));
  }
  s.channels = render_channels(sources, s.layout, spec, rng);
  return s;
}

void write_session(const std::filesystem::path &dir, const Session &session) {
  const auto root = dir / session.id;
  std::filesystem::create_directories(root);
  for (std::size_t c = 0; c < session.channels.size(); ++c) {
    char name[16];
    std::snprintf(name, sizeof name, "ch%02zu.wav", c);
    write_wav(root / name, session.channels[c]);
  }
  write_rttm(root / "ref.rttm", session.truth.segments(session.id));
  auto point = [](const Point &p) { return nlohmann::json::array({p.x, p.y, p.z}); };
  nlohmann::json meta;
  meta["id"] = session.id;
  meta["seed"] = session.seed;
  meta["duration"] = session.truth.duration;
  meta["channels"] = session.channels.size();
  meta["sample_rate"] = session.channels.empty() ? 0 : session.channels[0].sample_rate;
  meta["overlap_ratio"] = session.truth.overlap_ratio();
  meta["hybrid"] = session.spec.hybrid;
  meta["identical_voice"] = session.spec.identical_voice;
  meta["snr_db"] = session.spec.snr_db;
  meta["drift_ppm"] = session.spec.drift_ppm;
  meta["voice_seeds"] = session.voice_seeds;
  meta["layout"]["speakers"] = nlohmann::json::array();
  for (const auto &p : session.layout.speakers) meta["layout"]["speakers"].push_back(point(p));
  meta["layout"]["mics"] = nlohmann::json::array();
  for (const auto &p : session.layout.mics) meta["layout"]["mics"].push_back(point(p));
  meta["layout"]["speed_of_sound"] = session.layout.speed_of_sound;
  std::ofstream(root / "meta.json") << meta.dump(2) << "\n";
}

}  // namespace mceend
