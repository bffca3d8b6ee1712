// mceend/scoring.h
//
// Posterior post-processing, RTTM files and frame-based DER.

#ifndef MCEEND_SCORING_H_
#define MCEEND_SCORING_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mceend/tensor.h"

namespace mceend {

struct Segment {
  std::string session;
  std::string speaker;
  double onset = 0.0;
  double offset = 0.0;
};

inline std::string speaker_label(std::size_t s) { return "spk" + std::to_string(s); }

// Centered majority filter over a 0/1 sequence; edges are replicated.
// Throws std::invalid_argument for an even window.
std::vector<int> median_filter(std::span<const int> active, std::size_t window);

// Per speaker row: threshold, optional median filter, runs of active frames
// become [t0 * frame_s, t1 * frame_s) segments labelled spk<row>.
std::vector<Segment> posteriors_to_segments(const Tensor &posteriors, const std::string &session,
                                            double threshold = 0.5, std::size_t median_window = 1,
                                            double frame_seconds = 0.1);

// Frame counts at `resolution` seconds; every frame counts once per
// reference speaker active in it.
struct DerBreakdown {
  std::size_t missed = 0;
  std::size_t false_alarm = 0;
  std::size_t confusion = 0;
  std::size_t scored = 0;  // scored reference speaker-frames
  double resolution = 0.01;

  double der() const;
  double missed_seconds() const { return static_cast<double>(missed) * resolution; }
  double false_alarm_seconds() const { return static_cast<double>(false_alarm) * resolution; }
  double confusion_seconds() const { return static_cast<double>(confusion) * resolution; }
  double scored_seconds() const { return static_cast<double>(scored) * resolution; }
  DerBreakdown &operator+=(const DerBreakdown &o);
};

// Frames whose center lies closer than `collar` to any reference boundary are
// not scored. Hypothesis speakers are mapped one-to-one onto reference
// speakers to maximize matched frames (exhaustive search, up to 8 labels).
DerBreakdown der(const std::vector<Segment> &ref, const std::vector<Segment> &hyp, double collar,
                 double resolution = 0.01);

// Every channel's rows are aligned to the reference channel by correlation,
// then averaged. The reference is the channel with the smallest id (ids
// default to the channel index).
Tensor average_posteriors_across_channels(std::span<const Tensor> posteriors,
                                          std::span<const std::string> ids = {});

// RTTM: SPEAKER <session> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>
void write_rttm(std::ostream &os, const std::vector<Segment> &segments);
void write_rttm(const std::filesystem::path &path, const std::vector<Segment> &segments);
// Throws DataError naming the offending line.
std::vector<Segment> read_rttm(std::istream &is, const std::string &source = "<stream>");
std::vector<Segment> read_rttm(const std::filesystem::path &path);

}  // namespace mceend

#endif  // MCEEND_SCORING_H_
