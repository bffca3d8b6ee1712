// mceend/scoring.cc

#include "mceend/scoring.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mceend/pit.h"
#include "mceend/wav.h"

namespace mceend {

std::vector<int> median_filter(std::span<const int> active, std::size_t window) {
  if (window % 2 == 0) {
    throw std::invalid_argument("median window must be odd, got " + std::to_string(window));
  }
  const std::size_t n = active.size();
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<int> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t ones = 0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t i =
          std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + k, 0,
                                     static_cast<std::ptrdiff_t>(n) - 1);
      ones += active[static_cast<std::size_t>(i)] != 0;
    }
    out[t] = 2 * ones > window ? 1 : 0;
  }
  return out;
}

std::vector<Segment> posteriors_to_segments(const Tensor &posteriors, const std::string &session,
                                            double threshold, std::size_t median_window,
                                            double frame_seconds) {
  if (posteriors.rank() != 2) {
    throw ShapeError("posteriors_to_segments: expected [S x T], got " +
                     shape_str(posteriors.shape()));
  }
  if (median_window % 2 == 0) {
    throw std::invalid_argument("median window must be odd, got " + std::to_string(median_window));
  }
  const std::size_t speakers = posteriors.dim(0), frames = posteriors.dim(1);
  std::vector<Segment> out;
  for (std::size_t s = 0; s < speakers; ++s) {
    std::vector<int> active(frames);
    for (std::size_t t = 0; t < frames; ++t) active[t] = posteriors.at(s, t) > threshold;
    if (median_window > 1) active = median_filter(active, median_window);
    std::size_t t = 0;
    while (t < frames) {
      if (!active[t]) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < frames && active[t]) ++t;
      out.push_back({session, speaker_label(s), static_cast<double>(start) * frame_seconds,
                     static_cast<double>(t) * frame_seconds});
    }
  }
  return out;
}

double DerBreakdown::der() const {
  if (scored == 0) return false_alarm > 0 ? INFINITY : 0.0;
  return static_cast<double>(missed + false_alarm + confusion) / static_cast<double>(scored);
}

DerBreakdown &DerBreakdown::operator+=(const DerBreakdown &o) {
  missed += o.missed;
  false_alarm += o.false_alarm;
  confusion += o.confusion;
  scored += o.scored;
  return *this;
}

namespace {

struct FrameGrid {
  std::vector<std::string> names;
  std::vector<std::vector<char>> active;  // [speaker][frame]
};

FrameGrid rasterize(const std::vector<Segment> &segs, std::size_t frames, double res) {
  FrameGrid g;
  std::map<std::string, std::size_t> index;
  for (const auto &s : segs) {
    if (!index.contains(s.speaker)) {
      index[s.speaker] = g.names.size();
      g.names.push_back(s.speaker);
      g.active.emplace_back(frames, 0);
    }
  }
  for (const auto &s : segs) {
    auto &row = g.active[index[s.speaker]];
    for (std::size_t n = 0; n < frames; ++n) {
      const double c = (static_cast<double>(n) + 0.5) * res;
      if (c >= s.onset && c < s.offset) row[n] = 1;
    }
  }
  return g;
}

}  // namespace

DerBreakdown der(const std::vector<Segment> &ref, const std::vector<Segment> &hyp, double collar,
                 double resolution) {
  double end = 0.0;
  for (const auto &s : ref) end = std::max(end, s.offset);
  for (const auto &s : hyp) end = std::max(end, s.offset);
  const auto frames = static_cast<std::size_t>(std::ceil(end / resolution - 1e-9));

  std::vector<char> scored(frames, 1);
  if (collar > 0.0) {
    for (const auto &s : ref) {
      for (double b : {s.onset, s.offset}) {
        for (std::size_t n = 0; n < frames; ++n) {
          const double c = (static_cast<double>(n) + 0.5) * resolution;
          if (std::abs(c - b) < collar) scored[n] = 0;
        }
      }
    }
  }
  const FrameGrid r = rasterize(ref, frames, resolution);
  const FrameGrid h = rasterize(hyp, frames, resolution);
  const std::size_t nr = r.names.size(), nh = h.names.size();
  const std::size_t k = std::max(nr, nh);
  if (k > 8) throw std::invalid_argument("der: more than 8 speaker labels");

  // overlap[i][j]: scored frames where hyp i and ref j are both active.
  std::vector<std::vector<std::size_t>> overlap(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < nh; ++i)
    for (std::size_t j = 0; j < nr; ++j)
      for (std::size_t n = 0; n < frames; ++n)
        overlap[i][j] += scored[n] && h.active[i][n] && r.active[j][n];
  std::vector<std::size_t> best_map(k);
  std::size_t best = 0;
  bool first = true;
  for (const auto &perm : all_permutations(k)) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < k; ++i) total += overlap[i][perm[i]];
    if (first || total > best) {
      best = total;
      best_map = perm;
      first = false;
    }
  }

  DerBreakdown out;
  out.resolution = resolution;
  for (std::size_t n = 0; n < frames; ++n) {
    if (!scored[n]) continue;
    std::size_t n_ref = 0, n_hyp = 0, correct = 0;
    for (std::size_t j = 0; j < nr; ++j) n_ref += r.active[j][n];
    for (std::size_t i = 0; i < nh; ++i) {
      if (!h.active[i][n]) continue;
      ++n_hyp;
      const std::size_t j = best_map[i];
      if (j < nr && r.active[j][n]) ++correct;
    }
    out.scored += n_ref;
    out.missed += n_ref > n_hyp ? n_ref - n_hyp : 0;
    out.false_alarm += n_hyp > n_ref ? n_hyp - n_ref : 0;
    out.confusion += std::min(n_ref, n_hyp) - correct;
  }
  return out;
}

Tensor average_posteriors_across_channels(std::span<const Tensor> posteriors,
                                          std::span<const std::string> ids) {
  if (posteriors.empty()) throw std::invalid_argument("no channels to average");
  if (!ids.empty() && ids.size() != posteriors.size()) {
    throw std::invalid_argument("channel ids do not match channel count");
  }
  std::vector<std::size_t> order(posteriors.size());
  std::iota(order.begin(), order.end(), 0);
  if (!ids.empty()) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  }
  const Tensor &ref = posteriors[order[0]];
  for (const auto &y : posteriors) {
    if (y.shape() != ref.shape()) {
      throw ShapeError("average_posteriors: " + shape_str(y.shape()) + " vs " +
                       shape_str(ref.shape()));
    }
  }
  Tensor out(ref.shape());
  for (std::size_t c : order) {
    Tensor aligned = permute_rows(posteriors[c], best_permutation_by_correlation(ref, posteriors[c]));
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] += aligned.at(i);
  }
  for (double &v : out.data()) v /= static_cast<double>(posteriors.size());
  return out;
}

void write_rttm(std::ostream &os, const std::vector<Segment> &segments) {
  char buf[64];
  for (const auto &s : segments) {
    os << "SPEAKER " << s.session << " 1 ";
    std::snprintf(buf, sizeof buf, "%.3f %.3f", s.onset, s.offset - s.onset);
    os << buf << " <NA> <NA> " << s.speaker << " <NA> <NA>\n";
  }
}

void write_rttm(const std::filesystem::path &path, const std::vector<Segment> &segments) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_rttm(out, segments);
}

std::vector<Segment> read_rttm(std::istream &is, const std::string &source) {
  std::vector<Segment> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    auto fail = [&](const std::string &why) {
      return DataError(source + ":" + std::to_string(number) + ": " + why);
    };
    if (f.size() != 10) throw fail("expected 10 fields, got " + std::to_string(f.size()));
    if (f[0] != "SPEAKER") throw fail("unsupported record type '" + f[0] + "'");
    Segment s;
    s.session = f[1];
    s.speaker = f[7];
    try {
      std::size_t used = 0;
      s.onset = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("onset");
      const double dur = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("duration");
      if (dur <= 0.0 || s.onset < 0.0) throw fail("non-positive duration or negative onset");
      s.offset = s.onset + dur;
    } catch (const std::invalid_argument &) {
      throw fail("malformed onset/duration");
    } catch (const std::out_of_range &) {
      throw fail("onset/duration out of range");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> read_rttm(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_rttm(in, path.string());
}

}  // namespace mceend
