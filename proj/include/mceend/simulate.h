// mceend/simulate.h
//
// Synthetic two-speaker conversations recorded by distributed microphones in
// free field (propagation delay + 1/r attenuation + white noise).

#ifndef MCEEND_SIMULATE_H_
#define MCEEND_SIMULATE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mceend/scoring.h"
#include "mceend/tensor.h"
#include "mceend/wav.h"

namespace mceend {

struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Point &a, const Point &b);

struct RoomLayout {
  std::vector<Point> speakers;
  std::vector<Point> mics;
  double speed_of_sound = 343.0;
};

struct SessionSpec {
  double duration = 60.0;           // seconds
  std::size_t speakers = 2;
  std::size_t channels = 4;
  int sample_rate = 8000;
  double utterance_min = 1.0;       // uniform utterance length
  double utterance_max = 5.0;
  double pause_mean = 2.0;          // exponential pause length
  double snr_db = 20.0;
  bool hybrid = false;              // all speakers share one position
  bool identical_voice = false;     // all speakers share one spectral envelope
  double gain_spread_db = 0.0;      // per-utterance level, uniform +- (dB)
  double amplitude = 0.1;           // source RMS before propagation
  std::vector<double> drift_ppm;    // per channel, empty = none
  double mic_radius = 1.0;          // mics uniform on a disk
  double mic_height = 0.75;
  double speaker_radius = 2.0;      // speakers on a circle
  double speaker_height = 1.2;
  double min_speaker_angle_deg = 45.0;

  void validate() const;
};

struct Interval {
  double onset = 0.0;
  double offset = 0.0;
};

struct GroundTruth {
  double duration = 0.0;
  std::vector<std::vector<Interval>> speakers;

  // S x frames, 1 where the frame center (t + 0.5) * frame_seconds lies in
  // [onset, offset) of an interval.
  Tensor labels(std::size_t frames, double frame_seconds = 0.1) const;
  // Time with >= 2 active speakers over time with >= 1, on a 1 ms grid.
  double overlap_ratio() const;
  std::vector<Segment> segments(const std::string &session) const;
  static GroundTruth from_segments(const std::vector<Segment> &segs, double duration);
};

GroundTruth sample_dialog(const SessionSpec &spec, std::mt19937_64 &rng);

RoomLayout sample_layout(const SessionSpec &spec, std::mt19937_64 &rng);

// Every speaker moved to the first speaker's position.
RoomLayout make_hybrid(const RoomLayout &layout);

// Spectral envelope of one synthetic voice as a linear-phase FIR filter.
struct Voice {
  std::vector<double> fir;
};

Voice make_voice(std::uint64_t voice_seed, int sample_rate);

// Amplitude-modulated shaped noise inside the intervals, exact zeros
// elsewhere.
Waveform synth_speaker_signal(const std::vector<Interval> &intervals, const Voice &voice,
                              const SessionSpec &spec, std::mt19937_64 &rng);

struct RenderOptions {
  bool noise = true;
};

// Channel c = sum_s delay(x_s, d_sc / v) / d_sc (+ drift resampling) + noise.
std::vector<Waveform> render_channels(const std::vector<Waveform> &sources,
                                      const RoomLayout &layout, const SessionSpec &spec,
                                      std::mt19937_64 &rng, const RenderOptions &opts = {});

struct Session {
  std::string id;
  std::uint64_t seed = 0;
  SessionSpec spec;
  GroundTruth truth;
  RoomLayout layout;
  std::vector<std::uint64_t> voice_seeds;
  std::vector<Waveform> channels;
};

Session simulate_session(const SessionSpec &spec, std::uint64_t seed, const std::string &id);

// Seed of session `index` derived from a dataset seed.
std::uint64_t session_seed(std::uint64_t dataset_seed, std::size_t index);

// <dir>/<id>/ch00.wav ... ref.rttm meta.json
void write_session(const std::filesystem::path &dir, const Session &session);

}  // namespace mceend

#endif  // MCEEND_SIMULATE_H_
