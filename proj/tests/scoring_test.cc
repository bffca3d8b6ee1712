#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "mceend/pit.h"
#include "mceend/scoring.h"
#include "mceend/wav.h"
#include "oracles.h"

using namespace mceend;

namespace {

Segment seg(const std::string &spk, double on, double off) { return {"s", spk, on, off}; }

double correlation(const Tensor &a, std::size_t i, const Tensor &b, std::size_t j) {
  const std::size_t n = a.dim(1);
  double ma = 0, mb = 0;
  for (std::size_t t = 0; t < n; ++t) {
    ma += a.at(i, t) / static_cast<double>(n);
    mb += b.at(j, t) / static_cast<double>(n);
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t t = 0; t < n; ++t) {
    sab += (a.at(i, t) - ma) * (b.at(j, t) - mb);
    saa += (a.at(i, t) - ma) * (a.at(i, t) - ma);
    sbb += (b.at(j, t) - mb) * (b.at(j, t) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Der, HalfMissed) {
  std::vector<Segment> ref{seg("A", 0.0, 10.0)};
  std::vector<Segment> hyp{seg("x", 0.0, 5.0)};
  DerBreakdown d = der(ref, hyp, 0.0);
  EXPECT_EQ(d.scored, 1000u);
  EXPECT_EQ(d.missed, 500u);
  EXPECT_EQ(d.false_alarm, 0u);
  EXPECT_EQ(d.confusion, 0u);
  EXPECT_DOUBLE_EQ(d.der(), 0.5);
  EXPECT_NEAR(d.missed_seconds(), 5.0, 1e-12);
}

TEST(Der, PerfectAndEmpty) {
  std::vector<Segment> ref{seg("A", 0.0, 3.0), seg("B", 2.0, 6.0), seg("A", 7.0, 8.5)};
  EXPECT_EQ(der(ref, ref, 0.0).der(), 0.0);
  EXPECT_EQ(der(ref, ref, 0.25).der(), 0.0);
  EXPECT_DOUBLE_EQ(der(ref, {}, 0.0).der(), 1.0);
  EXPECT_EQ(der({}, {}, 0.0).der(), 0.0);
}

TEST(Der, LabelNamesDoNotMatter) {
  std::vector<Segment> ref{seg("A", 0.0, 3.0), seg("B", 2.0, 6.0)};
  std::vector<Segment> hyp{seg("q", 0.0, 3.0), seg("p", 2.5, 6.0)};
  std::vector<Segment> renamed{seg("zz", 0.0, 3.0), seg("aa", 2.5, 6.0)};
  EXPECT_EQ(der(ref, hyp, 0.0).missed, der(ref, renamed, 0.0).missed);
  EXPECT_EQ(der(ref, hyp, 0.0).der(), der(ref, renamed, 0.0).der());
  EXPECT_NEAR(der(ref, hyp, 0.0).der(), 0.5 / 7.0, 1e-12);
}

TEST(Der, SwappedLabelsAreConfusionFree) {
  std::vector<Segment> ref{seg("A", 0.0, 2.0), seg("B", 2.0, 4.0)};
  std::vector<Segment> hyp{seg("B", 0.0, 2.0), seg("A", 2.0, 4.0)};
  EXPECT_EQ(der(ref, hyp, 0.0).der(), 0.0);
}

TEST(Der, ConfusionCounted) {
  std::vector<Segment> ref{seg("A", 0.0, 2.0), seg("B", 2.0, 4.0)};
  std::vector<Segment> hyp{seg("x", 0.0, 4.0)};
  DerBreakdown d = der(ref, hyp, 0.0);
  EXPECT_EQ(d.confusion, 200u);
  EXPECT_EQ(d.missed, 0u);
  EXPECT_DOUBLE_EQ(d.der(), 0.5);
}

TEST(Der, CollarExcludesBoundaryFrames) {
  std::vector<Segment> ref{seg("A", 1.0, 3.0)};
  std::vector<Segment> hyp{seg("x", 1.2, 2.8)};
  EXPECT_GT(der(ref, hyp, 0.0).der(), 0.0);
  EXPECT_EQ(der(ref, hyp, 0.25).der(), 0.0);
  // 2 s reference, 0.25 s collar on both sides of both ends leaves 1.5 s.
  EXPECT_EQ(der(ref, hyp, 0.25).scored, 150u);
}

TEST(Der, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int nr = 1 + trial % 3, nh = 1 + (trial / 3) % 4;
    auto ref = oracle::random_segments(rng, nr, "r");
    auto hyp = oracle::random_segments(rng, nh, "h");
    const double collar = trial % 2 ? 0.0 : 0.1;
    DerBreakdown d = der(ref, hyp, collar);
    oracle::OracleDer o = oracle::der(ref, hyp, collar);
    EXPECT_EQ(static_cast<long>(d.scored), o.scored) << trial;
    EXPECT_EQ(static_cast<long>(d.missed + d.false_alarm + d.confusion), o.errors) << trial;
  }
}

TEST(Der, AccumulatesCounts) {
  std::vector<Segment> ref{seg("A", 0.0, 10.0)};
  DerBreakdown total = der(ref, {seg("x", 0.0, 5.0)}, 0.0);
  total += der(ref, ref, 0.0);
  EXPECT_DOUBLE_EQ(total.der(), 0.25);
}

TEST(Der, TooManyLabels) {
  std::vector<Segment> many;
  for (int i = 0; i < 9; ++i) many.push_back(seg("s" + std::to_string(i), i, i + 1.0));
  EXPECT_THROW(der(many, many, 0.0), std::invalid_argument);
}

TEST(MedianFilter, Cases) {
  const std::vector<int> x{0, 1, 0, 1, 1, 1, 0, 0, 1, 0};
  EXPECT_EQ(median_filter(x, 1), x);
  EXPECT_EQ(median_filter(x, 3), (std::vector<int>{0, 0, 1, 1, 1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(median_filter(std::vector<int>{1, 1, 0}, 5), (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(median_filter(std::vector<int>{1, 0, 1}, 3), (std::vector<int>{1, 1, 1}));
  EXPECT_THROW(median_filter(x, 4), std::invalid_argument);
}

TEST(Segments, ThresholdAndRuns) {
  Tensor y({2, 6}, {0.9, 0.8, 0.2, 0.7, 0.6, 0.1, 0.1, 0.5, 0.51, 0.2, 0.2, 0.99});
  auto segs = posteriors_to_segments(y, "sess");
  ASSERT_EQ(segs.size(), 4u);
  EXPECT_EQ(segs[0].speaker, "spk0");
  EXPECT_NEAR(segs[0].onset, 0.0, 1e-12);
  EXPECT_NEAR(segs[0].offset, 0.2, 1e-12);
  EXPECT_NEAR(segs[1].onset, 0.3, 1e-12);
  EXPECT_NEAR(segs[1].offset, 0.5, 1e-12);
  // 0.5 is not above the threshold.
  EXPECT_EQ(segs[2].speaker, "spk1");
  EXPECT_NEAR(segs[2].onset, 0.2, 1e-12);
  EXPECT_NEAR(segs[2].offset, 0.3, 1e-12);
  EXPECT_NEAR(segs[3].onset, 0.5, 1e-12);
  EXPECT_EQ(segs[3].session, "sess");
  auto smoothed = posteriors_to_segments(y, "sess", 0.5, 3);
  ASSERT_FALSE(smoothed.empty());
  EXPECT_NEAR(smoothed[0].offset, 0.5, 1e-12);
  EXPECT_THROW(posteriors_to_segments(y, "s", 0.5, 2), std::invalid_argument);
}

TEST(Rttm, RoundTrip) {
  std::vector<Segment> segs{{"sess1", "spk0", 0.5, 2.25}, {"sess1", "spk1", 1.0, 4.125}};
  std::stringstream ss;
  write_rttm(ss, segs);
  EXPECT_EQ(ss.str().substr(0, 48), "SPEAKER sess1 1 0.500 1.750 <NA> <NA> spk0 <NA> ");
  auto back = read_rttm(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].session, segs[i].session);
    EXPECT_EQ(back[i].speaker, segs[i].speaker);
    EXPECT_NEAR(back[i].onset, segs[i].onset, 5e-4);
    EXPECT_NEAR(back[i].offset, segs[i].offset, 1e-3);
  }
}

TEST(Rttm, RejectsMalformedLines) {
  std::stringstream nine("SPEAKER s 1 0.0 1.0 <NA> <NA> spk0 <NA>\n");
  try {
    read_rttm(nine, "ref.rttm");
    FAIL() << "expected DataError";
  } catch (const DataError &e) {
    EXPECT_NE(std::string(e.what()).find("ref.rttm:1"), std::string::npos) << e.what();
  }
  std::stringstream bad_number("\nSPEAKER s 1 abc 1.0 <NA> <NA> spk0 <NA> <NA>\n");
  try {
    read_rttm(bad_number, "x");
    FAIL() << "expected DataError";
  } catch (const DataError &e) {
    EXPECT_NE(std::string(e.what()).find("x:2"), std::string::npos) << e.what();
  }
  std::stringstream zero("SPEAKER s 1 1.0 0.0 <NA> <NA> spk0 <NA> <NA>\n");
  EXPECT_THROW(read_rttm(zero), DataError);
}

TEST(AveragePosteriors, IdenticalAndSwapped) {
  Tensor a({2, 5}, {0.9, 0.8, 0.1, 0.2, 0.7, 0.1, 0.3, 0.9, 0.8, 0.2});
  Tensor swapped = permute_rows(a, {1, 0});
  std::vector<Tensor> same{a, a};
  EXPECT_EQ(average_posteriors_across_channels(same).to_vector(), a.to_vector());
  std::vector<Tensor> mixed{a, swapped};
  Tensor avg = average_posteriors_across_channels(mixed);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(avg.at(i), a.at(i), 1e-15);
  // Reference is the smallest id, so the swapped channel's order wins.
  std::vector<std::string> ids{"ch1", "ch0"};
  Tensor by_id = average_posteriors_across_channels(mixed, ids);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(by_id.at(i), swapped.at(i), 1e-15);
}

TEST(AveragePosteriors, ThreeChannelsMatchBruteForce) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> chans;
    for (int c = 0; c < 3; ++c) {
      Tensor y({3, 8});
      for (double &v : y.data()) v = u(rng);
      chans.push_back(y);
    }
    Tensor expected({3, 8});
    for (const auto &y : chans) {
      // Best alignment of y onto chans[0] by summed row correlation.
      Permutation best;
      double best_score = -1;
      Permutation p{0, 1, 2};
      do {
        double score = 0;
        for (std::size_t s = 0; s < 3; ++s)
          score += correlation(chans[0], s, y, p[s]);
        if (score > best_score) {
          best_score = score;
          best = p;
        }
      } while (std::next_permutation(p.begin(), p.end()));
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t t = 0; t < 8; ++t) expected.at(s, t) += y.at(best[s], t) / 3.0;
    }
    Tensor got = average_posteriors_across_channels(chans);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.at(i), expected.at(i), 1e-12);
  }
}

TEST(AveragePosteriors, ShapeMismatch) {
  std::vector<Tensor> chans{Tensor({2, 4}), Tensor({2, 5})};
  EXPECT_THROW(average_posteriors_across_channels(chans), ShapeError);
}
