#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "mceend/grad_check.h"
#include "mceend/nn.h"
#include "mceend/ops.h"
#include "oracles.h"
#include "test_util.h"

using namespace mceend;
using testutil::leaf;
using testutil::probe;

namespace {

AttentionParams random_attention(std::size_t dk, std::size_t dv, std::size_t h,
                                 std::mt19937_64 &rng) {
  AttentionParams p = AttentionParams::init(dk, dv, h, rng);
  ParamList list;
  p.collect("a", list);
  testutil::randomize(list, rng);
  return p;
}

ParamList params_of(const AttentionParams &p) {
  ParamList list;
  p.collect("a", list);
  return list;
}

std::vector<Tensor> tensors_of(const ParamList &list) {
  std::vector<Tensor> out;
  for (const auto &[name, t] : list) out.push_back(t);
  return out;
}

}  // namespace

TEST(LayerNorm, ConstantColumnBecomesZero) {
  Tensor y = layer_norm(Tensor::full({4, 1}, 3.0), LayerNormParams::init(4));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedColumnUnchanged) {
  Tensor y = layer_norm(Tensor({2, 1}, {1.0, -1.0}), LayerNormParams::init(2, 1e-12));
  EXPECT_NEAR(y.at(0), 1.0, 1e-10);
  EXPECT_NEAR(y.at(1), -1.0, 1e-10);
}

TEST(LayerNorm, RandomColumnStatistics) {
  std::mt19937_64 rng(1);
  Tensor y = layer_norm(Tensor::randn({64, 5}, rng, 4.0), LayerNormParams::init(64));
  for (std::size_t t = 0; t < 5; ++t) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < 64; ++i) mu += y.at(i, t);
    mu /= 64;
    for (std::size_t i = 0; i < 64; ++i) var += (y.at(i, t) - mu) * (y.at(i, t) - mu);
    var /= 64;
    EXPECT_LE(std::abs(mu), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNorm, DimensionMismatch) {
  EXPECT_THROW(layer_norm(Tensor({3, 2}), LayerNormParams::init(4)), ShapeError);
}

TEST(Frontend, ZeroWeightsGiveZeroOutput) {
  std::mt19937_64 rng(2);
  FrontendParams p = FrontendParams::init(6, 4, 1e-5, rng);
  for (double &v : p.weight.data()) v = 0.0;
  Tensor y = frontend(Tensor::randn({6, 3}, rng), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Frontend, SplicedFeatureShape) {
  std::mt19937_64 rng(3);
  FrontendParams p = FrontendParams::init(345, 256, 1e-5, rng);
  EXPECT_EQ(frontend(Tensor::randn({345, 50}, rng), p).shape(), (Shape{256, 50}));
  EXPECT_THROW(frontend(Tensor::randn({344, 50}, rng), p), ShapeError);
}

TEST(FeedForward, ZeroFirstLayerGivesBias) {
  std::mt19937_64 rng(4);
  FfnParams p = FfnParams::init(4, 8, rng);
  for (double &v : p.w1.data()) v = 0.0;
  for (std::size_t i = 0; i < 4; ++i) p.b2.data()[i] = 0.5 * static_cast<double>(i);
  Tensor y = feed_forward(Tensor::randn({4, 3}, rng), p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(y.at(i, t), 0.5 * static_cast<double>(i));
}

TEST(FeedForward, NegativePreActivationsGiveBias) {
  std::mt19937_64 rng(5);
  FfnParams p = FfnParams::init(3, 5, rng);
  for (double &v : p.w1.data()) v = 0.0;
  for (double &v : p.b1.data()) v = -1.0;
  p.b2.data()[1] = 2.0;
  Tensor y = feed_forward(Tensor::randn({3, 4}, rng), p);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(y.at(0, t), 0.0);
    EXPECT_EQ(y.at(1, t), 2.0);
  }
}

TEST(Attention, ZeroQueryKeyWeightsGiveUniformAttention) {
  std::mt19937_64 rng(6);
  AttentionParams p = random_attention(8, 8, 2, rng);
  for (double &v : p.theta.w_q.data()) v = 0.0;
  for (double &v : p.theta.w_k.data()) v = 0.0;
  Tensor x = Tensor::randn({8, 5}, rng);
  Tensor y = multi_head_attention(x, x, x, p);
  // Every output frame is W_O (mean over frames of W_V x + b_V) + b_O.
  oracle::Mat v = oracle::linear(p.phi.w_v, p.phi.b_v, oracle::from(x));
  oracle::Mat m(8, 1);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t t = 0; t < 5; ++t) m(i, 0) += v(i, t) / 5.0;
  }
  oracle::Mat expected = oracle::linear(p.phi.w_o, p.phi.b_o, m);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y.at(i, t), expected(i, 0), 1e-12);
}

TEST(Attention, SingleFrameIsValueProjection) {
  std::mt19937_64 rng(7);
  AttentionParams p = random_attention(4, 4, 1, rng);
  Tensor x = Tensor::randn({4, 1}, rng);
  Tensor y = multi_head_attention(x, x, x, p);
  oracle::Mat expected = oracle::linear(
      p.phi.w_o, p.phi.b_o, oracle::linear(p.phi.w_v, p.phi.b_v, oracle::from(x)));
  EXPECT_LE(oracle::max_abs_diff(expected, y), 1e-12);
}

TEST(Attention, MatchesLoopOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    AttentionParams p = random_attention(8, 8, 2, rng);
    Tensor q = Tensor::randn({8, 5}, rng), k = Tensor::randn({8, 6}, rng),
           v = Tensor::randn({8, 6}, rng);
    Tensor y = multi_head_attention(q, k, v, p);
    oracle::Mat expected =
        oracle::attention(oracle::from(q), oracle::from(k), oracle::from(v), p);
    EXPECT_LE(oracle::max_abs_diff(expected, y), 1e-10);
  }
}

TEST(Attention, WeightColumnsSumToOne) {
  std::mt19937_64 rng(9);
  AttentionParams p = random_attention(8, 8, 4, rng);
  Tensor q = Tensor::randn({8, 7}, rng);
  Tensor a = attention_weights(q, q, p.theta);
  ASSERT_EQ(a.shape(), (Shape{4, 7, 7}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 7; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < 7; ++r) s += a.at(i, r, c);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(Attention, HeadDivisibilityAndShapeErrors) {
  std::mt19937_64 rng(10);
  EXPECT_THROW(AttentionParams::init(6, 6, 4, rng), ShapeError);
  AttentionParams p = random_attention(8, 8, 2, rng);
  EXPECT_THROW(multi_head_attention(Tensor({6, 3}), Tensor({8, 3}), Tensor({8, 3}), p),
               ShapeError);
}

TEST(CoAttention, SingleChannelEqualsAttention) {
  std::mt19937_64 rng(11);
  AttentionParams p = random_attention(8, 8, 2, rng);
  Tensor x = Tensor::randn({8, 6}, rng), v = Tensor::randn({8, 6}, rng);
  const Tensor qs[] = {x};
  Tensor y_co = multi_head_co_attention(qs, qs, v, p);
  Tensor y = multi_head_attention(x, x, v, p);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y_co.at(i), y.at(i), 1e-12);
}

TEST(CoAttention, MatchesLoopOracle) {
  std::mt19937_64 rng(12);
  for (std::size_t channels : {2u, 3u}) {
    AttentionParams p = random_attention(8, 12, 2, rng);
    std::vector<Tensor> qs, ks;
    std::vector<oracle::Mat> oq, ok;
    for (std::size_t c = 0; c < channels; ++c) {
      qs.push_back(Tensor::randn({8, 5}, rng));
      ks.push_back(Tensor::randn({8, 5}, rng));
      oq.push_back(oracle::from(qs.back()));
      ok.push_back(oracle::from(ks.back()));
    }
    Tensor v = Tensor::randn({12, 5}, rng);
    Tensor y = multi_head_co_attention(qs, ks, v, p);
    oracle::Mat expected = oracle::attend(oracle::co_weights(oq, ok, p.theta), oracle::from(v), p.phi);
    EXPECT_LE(oracle::max_abs_diff(expected, y), 1e-10);
  }
}

TEST(CoAttention, WeightsInvariantToChannelOrder) {
  std::mt19937_64 rng(13);
  AttentionParams p = random_attention(8, 8, 2, rng);
  std::vector<Tensor> xs;
  for (int c = 0; c < 3; ++c) xs.push_back(Tensor::randn({8, 6}, rng));
  Tensor ref = co_attention_weights(stack(xs), stack(xs), p.theta);
  std::vector<std::size_t> order{0, 1, 2};
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<Tensor> perm;
    for (std::size_t c : order) perm.push_back(xs[c]);
    Tensor a = co_attention_weights(stack(perm), stack(perm), p.theta);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), ref.at(i), 1e-10);
  }
}

TEST(CoAttention, AttendChannelsMatchesPerChannelAttend) {
  std::mt19937_64 rng(14);
  AttentionParams p = random_attention(4, 4, 2, rng);
  std::vector<Tensor> xs;
  for (int c = 0; c < 3; ++c) xs.push_back(Tensor::randn({4, 5}, rng));
  Tensor stacked = stack(xs);
  Tensor a = co_attention_weights(stacked, stacked, p.theta);
  Tensor all = attend_channels(a, stacked, p.phi);
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor one = attend(a, xs[c], p.phi);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(all.at(c, i, t), one.at(i, t), 1e-12);
  }
}

TEST(CoAttention, ChannelCountErrors) {
  std::mt19937_64 rng(15);
  AttentionParams p = random_attention(4, 4, 2, rng);
  std::vector<Tensor> two{Tensor::randn({4, 3}, rng), Tensor::randn({4, 3}, rng)};
  std::vector<Tensor> one{Tensor::randn({4, 3}, rng)};
  std::vector<Tensor> none;
  Tensor v = Tensor::randn({4, 3}, rng);
  EXPECT_THROW(multi_head_co_attention(two, one, v, p), ShapeError);
  EXPECT_THROW(multi_head_co_attention(none, none, v, p), ShapeError);
}

// Finite differences on 20 random instances per primitive, against inputs and
// every parameter.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, LayerNorm) {
  std::mt19937_64 rng(100 + GetParam());
  LayerNormParams p = LayerNormParams::init(5);
  ParamList list;
  p.collect("ln", list);
  testutil::randomize(list, rng);
  Tensor x = leaf({5, 4}, rng);
  auto r = grad_check([&] { return probe(layer_norm(x, p), 1); }, {x, p.gamma, p.beta});
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST_P(PrimitiveGradients, Frontend) {
  std::mt19937_64 rng(200 + GetParam());
  FrontendParams p = FrontendParams::init(6, 4, 1e-5, rng);
  ParamList list;
  p.collect("f", list);
  testutil::randomize(list, rng);
  Tensor x = leaf({6, 3}, rng);
  std::vector<Tensor> inputs = tensors_of(list);
  inputs.push_back(x);
  auto r = grad_check([&] { return probe(frontend(x, p), 2); }, inputs);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST_P(PrimitiveGradients, FeedForward) {
  std::mt19937_64 rng(300 + GetParam());
  FfnParams p = FfnParams::init(4, 6, rng);
  ParamList list;
  p.collect("f", list);
  testutil::randomize(list, rng);
  Tensor x = leaf({4, 3}, rng);
  std::vector<Tensor> inputs = tensors_of(list);
  inputs.push_back(x);
  auto r = grad_check([&] { return probe(feed_forward(x, p), 3); }, inputs);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST_P(PrimitiveGradients, MultiHeadAttention) {
  std::mt19937_64 rng(400 + GetParam());
  AttentionParams p = random_attention(4, 6, 2, rng);
  Tensor q = leaf({4, 3}, rng), k = leaf({4, 4}, rng), v = leaf({6, 4}, rng);
  std::vector<Tensor> inputs = tensors_of(params_of(p));
  inputs.insert(inputs.end(), {q, k, v});
  auto r = grad_check([&] { return probe(multi_head_attention(q, k, v, p), 4); }, inputs);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST_P(PrimitiveGradients, MultiHeadCoAttention) {
  std::mt19937_64 rng(500 + GetParam());
  AttentionParams p = random_attention(4, 4, 2, rng);
  Tensor qs = leaf({2, 4, 3}, rng), ks = leaf({2, 4, 3}, rng), v = leaf({4, 3}, rng),
         vs = leaf({2, 4, 3}, rng);
  std::vector<Tensor> inputs = tensors_of(params_of(p));
  inputs.insert(inputs.end(), {qs, ks, v, vs});
  auto r = grad_check(
      [&] {
        Tensor a = co_attention_weights(qs, ks, p.theta);
        return add(probe(attend(a, v, p.phi), 5), probe(attend_channels(a, vs, p.phi), 6));
      },
      inputs);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_input << " " << r.worst_index << " a=" << r.worst_analytic << " n=" << r.worst_numeric;
}

INSTANTIATE_TEST_SUITE_P(Random, PrimitiveGradients, ::testing::Range(0, 20));
