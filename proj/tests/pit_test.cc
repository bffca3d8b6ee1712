#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mceend/grad_check.h"
#include "mceend/ops.h"
#include "mceend/pit.h"
#include "oracles.h"

using namespace mceend;

namespace {

Tensor random_posteriors(std::size_t s, std::size_t t, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  Tensor y({s, t});
  for (double &v : y.data()) v = u(rng);
  return y;
}

Tensor random_labels(std::size_t s, std::size_t t, std::mt19937_64 &rng) {
  std::bernoulli_distribution coin(0.4);
  Tensor l({s, t});
  for (double &v : l.data()) v = coin(rng) ? 1.0 : 0.0;
  return l;
}

}  // namespace

TEST(Bce, PerfectPredictionIsNearZero) {
  Tensor l({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(bce(l, l).item(), 0.0, 1e-6);
}

TEST(Bce, HalfEverywhereIsLog2) {
  Tensor l({2, 3}, {1, 0, 1, 0, 0, 1});
  EXPECT_NEAR(bce(Tensor::full({2, 3}, 0.5), l).item(), std::log(2.0), 1e-15);
}

TEST(Bce, TwoSpeakerHandCase) {
  Tensor y({2, 2}, {0.9, 0.2, 0.1, 0.8});
  Tensor l({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(bce(y, l).item(), 0.164252033486018, 1e-14);
  EXPECT_THROW(bce(y, Tensor({2, 3})), ShapeError);
}

TEST(Pit, SwappedLabelsGiveSameLossAndSwap) {
  Tensor y({2, 2}, {0.9, 0.2, 0.1, 0.8});
  Tensor l({2, 2}, {0, 1, 1, 0});
  PitResult r = pit_loss(y, l);
  EXPECT_NEAR(r.loss.item(), 0.164252033486018, 1e-14);
  EXPECT_EQ(r.permutation, (Permutation{1, 0}));
}

TEST(Pit, MatchesEnumerationExactly) {
  std::mt19937_64 rng(1);
  for (std::size_t s : {2u, 3u, 4u}) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor y = random_posteriors(s, 9, rng), l = random_labels(s, 9, rng);
      EXPECT_EQ(pit_loss(y, l).loss.item(), oracle::pit_enumeration(y, l)) << "S=" << s;
    }
  }
}

TEST(Pit, InvariantUnderLabelRowPermutation) {
  std::mt19937_64 rng(2);
  Tensor y = random_posteriors(3, 11, rng), l = random_labels(3, 11, rng);
  const double ref = pit_loss(y, l).loss.item();
  for (const auto &perm : all_permutations(3)) {
    EXPECT_EQ(pit_loss(y, permute_rows(l, perm)).loss.item(), ref);
    EXPECT_LE(ref, bce(y, permute_rows(l, perm)).item());
  }
}

TEST(Pit, TiesGoToFirstPermutation) {
  Tensor y = Tensor::full({3, 4}, 0.5);
  Tensor l({3, 4}, {1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0});
  EXPECT_EQ(pit_loss(y, l).permutation, (Permutation{0, 1, 2}));
}

TEST(Pit, RejectsTooManySpeakers) {
  Tensor y = Tensor::full({7, 2}, 0.5);
  EXPECT_THROW(pit_loss(y, y), std::invalid_argument);
}

TEST(Pit, GradientThroughSelectedBranch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t s = 2 + static_cast<std::size_t>(trial % 3);
    Tensor y = random_posteriors(s, 6, rng).set_requires_grad();
    Tensor l = random_labels(s, 6, rng);
    auto r = grad_check([&] { return pit_loss(y, l).loss; }, {y});
    EXPECT_LE(r.max_rel_error, 1e-4);
  }
}

TEST(Pit, GradientZeroWhereClamped) {
  Tensor y = Tensor({1, 2}, {1e-9, 0.5}).set_requires_grad();
  Tensor l({1, 2}, {1, 1});
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(pit_loss(y, l).loss);
  EXPECT_EQ(y.grad()[0], 0.0);
  EXPECT_NEAR(y.grad()[1], -1.0, 1e-12);
}

TEST(Correlation, RecoversSwapAndIdentity) {
  std::mt19937_64 rng(4);
  Tensor a = random_posteriors(2, 20, rng);
  EXPECT_EQ(best_permutation_by_correlation(a, a), (Permutation{0, 1}));
  EXPECT_EQ(best_permutation_by_correlation(a, permute_rows(a, {1, 0})), (Permutation{1, 0}));
}

TEST(Correlation, MatchesBruteForceForTwoSpeakers) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_posteriors(2, 15, rng), b = random_posteriors(2, 15, rng);
    auto row = [](const Tensor &x, std::size_t r) { return x.data().subspan(r * 15, 15); };
    const double keep = pearson(row(a, 0), row(b, 0)) + pearson(row(a, 1), row(b, 1));
    const double swap = pearson(row(a, 0), row(b, 1)) + pearson(row(a, 1), row(b, 0));
    const Permutation expected = swap > keep ? Permutation{1, 0} : Permutation{0, 1};
    EXPECT_EQ(best_permutation_by_correlation(a, b), expected);
  }
}

TEST(Correlation, ConstantRowHasZeroCorrelation) {
  std::vector<double> flat(5, 0.3), ramp{0, 1, 2, 3, 4};
  EXPECT_EQ(pearson(flat, ramp), 0.0);
  EXPECT_NEAR(pearson(ramp, ramp), 1.0, 1e-15);
}
