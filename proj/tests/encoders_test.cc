#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mceend/encoders.h"
#include "mceend/grad_check.h"
#include "mceend/model.h"
#include "mceend/ops.h"
#include "oracles.h"
#include "test_util.h"

using namespace mceend;
using testutil::probe;

namespace {

ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.input_dim = 6;
  c.channel_input_dim = 5;
  c.model_dim = 8;
  c.channel_dim = 4;
  c.heads = 2;
  c.ffn_dim = 12;
  c.channel_ffn_dim = 6;
  c.blocks = 2;
  return c;
}

EncoderParams random_encoder(const ModelConfig &config, std::mt19937_64 &rng) {
  EncoderParams p = EncoderParams::init(config, rng);
  ParamList list;
  p.collect(config, list);
  testutil::randomize(list, rng, 0.4);
  return p;
}

ModelInput random_input(const ModelConfig &config, std::size_t channels, std::size_t frames,
                        std::mt19937_64 &rng) {
  ModelInput in;
  switch (config.variant) {
    case Variant::kTransformer:
      in.single = Tensor::randn({config.input_dim, frames}, rng);
      break;
    case Variant::kSpatioTemporal:
      in.multi = Tensor::randn({channels, config.input_dim, frames}, rng);
      break;
    case Variant::kCoAttention:
      in.single = Tensor::randn({config.input_dim, frames}, rng);
      in.multi = Tensor::randn({channels, config.channel_input_dim, frames}, rng);
      break;
  }
  return in;
}

Tensor reorder_channels(const Tensor &x, const std::vector<std::size_t> &order) {
  std::vector<Tensor> parts;
  for (std::size_t c : order) parts.push_back(slice(x, 0, c, c + 1));
  return concat(parts, 0);
}

std::vector<oracle::Mat> channels_of(const Tensor &x) {
  std::vector<oracle::Mat> out;
  for (std::size_t c = 0; c < x.dim(0); ++c) out.push_back(oracle::from(x, c));
  return out;
}

double max_diff(const Tensor &a, const Tensor &b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace

TEST(TransformerBlock, OutputShape) {
  std::mt19937_64 rng(1);
  ModelConfig c = tiny(Variant::kTransformer);
  EncoderParams p = random_encoder(c, rng);
  EXPECT_EQ(transformer_block(Tensor::randn({8, 7}, rng), p.transformer[0]).shape(),
            (Shape{8, 7}));
}

TEST(TransformerBlock, ZeroedProjectionsLeaveResidualPath) {
  std::mt19937_64 rng(2);
  ModelConfig c = tiny(Variant::kTransformer);
  EncoderParams p = random_encoder(c, rng);
  auto &b = p.transformer[0];
  for (Tensor *t : {&b.self_attn.phi.w_o, &b.self_attn.phi.b_o, &b.ffn.w2, &b.ffn.b2}) {
    for (double &v : t->data()) v = 0.0;
  }
  Tensor x = Tensor::randn({8, 5}, rng);
  oracle::Mat expected =
      oracle::layer_norm(oracle::layer_norm(oracle::from(x), b.ln_attn), b.ln_ffn);
  EXPECT_LE(oracle::max_abs_diff(expected, transformer_block(x, b)), 1e-12);
}

TEST(SpatioTemporalBlock, SingleChannelCrossChannelIsValuePath) {
  std::mt19937_64 rng(3);
  ModelConfig c = tiny(Variant::kSpatioTemporal);
  EncoderParams p = random_encoder(c, rng);
  auto b = p.spatio_temporal[0];
  // With one channel the cross-frame stage is removed by zeroing its output.
  for (Tensor *t : {&b.cross_frame.phi.w_o, &b.cross_frame.phi.b_o}) {
    for (double &v : t->data()) v = 0.0;
  }
  Tensor x = Tensor::randn({1, 8, 4}, rng);
  oracle::Mat e = oracle::from(x, 0);
  const auto &cc = b.cross_channel.phi;
  oracle::Mat value = oracle::linear(cc.w_o, cc.b_o, oracle::linear(cc.w_v, cc.b_v, e));
  oracle::Mat expected =
      oracle::layer_norm(oracle::layer_norm(oracle::add(e, value), b.ln_channel), b.ln_frame);
  EXPECT_LE(oracle::max_abs_diff(expected, spatio_temporal_block(x, b, false), 0), 1e-12);
}

TEST(SpatioTemporalBlock, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  ModelConfig c = tiny(Variant::kSpatioTemporal);
  EncoderParams p = random_encoder(c, rng);
  Tensor x = Tensor::randn({3, 8, 4}, rng);
  auto expected = oracle::spatio_temporal_block(channels_of(x), p.spatio_temporal[0], false);
  Tensor y = spatio_temporal_block(x, p.spatio_temporal[0], false);
  ASSERT_EQ(y.shape(), (Shape{3, 8, 4}));
  for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_LE(oracle::max_abs_diff(expected[ch], y, ch), 1e-10);

  auto final_expected = oracle::spatio_temporal_block(channels_of(x), p.spatio_temporal[1], true);
  Tensor y_final = spatio_temporal_block(x, p.spatio_temporal[1], true);
  ASSERT_EQ(y_final.shape(), (Shape{8, 4}));
  EXPECT_LE(oracle::max_abs_diff(final_expected[0], y_final), 1e-10);
}

TEST(SpatioTemporalBlock, ChannelPermutationEquivariance) {
  std::mt19937_64 rng(5);
  ModelConfig c = tiny(Variant::kSpatioTemporal);
  EncoderParams p = random_encoder(c, rng);
  Tensor x = Tensor::randn({3, 8, 4}, rng);
  Tensor y = spatio_temporal_block(x, p.spatio_temporal[0], false);
  Tensor y_final = spatio_temporal_block(x, p.spatio_temporal[0], true);
  std::vector<std::size_t> order{2, 0, 1};
  Tensor xp = reorder_channels(x, order);
  EXPECT_LE(max_diff(spatio_temporal_block(xp, p.spatio_temporal[0], false),
                     reorder_channels(y, order)),
            1e-10);
  EXPECT_LE(max_diff(spatio_temporal_block(xp, p.spatio_temporal[0], true), y_final), 1e-10);
  EXPECT_THROW(spatio_temporal_block(Tensor({8, 4}), p.spatio_temporal[0], false), ShapeError);
}

TEST(SpatioTemporalBlock, HasNoFeedForwardParameters) {
  std::mt19937_64 rng(6);
  ModelConfig c = tiny(Variant::kSpatioTemporal);
  ParamList list;
  EncoderParams::init(c, rng).collect(c, list);
  for (const auto &[name, t] : list) {
    EXPECT_EQ(name.find("ffn"), std::string::npos) << name;
    EXPECT_EQ(name.find("psi"), std::string::npos) << name;
  }
}

TEST(CoAttentionBlock, MatchesLoopOracle) {
  std::mt19937_64 rng(7);
  ModelConfig c = tiny(Variant::kCoAttention);
  EncoderParams p = random_encoder(c, rng);
  Tensor e = Tensor::randn({8, 5}, rng), pin = Tensor::randn({3, 4, 5}, rng);
  auto expected = oracle::co_attention_block(oracle::from(e), channels_of(pin), p.co_attention[0]);
  CoAttentionOutput out = co_attention_block(e, pin, p.co_attention[0]);
  EXPECT_LE(oracle::max_abs_diff(expected.e, out.e), 1e-10);
  for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_LE(oracle::max_abs_diff(expected.p[ch], out.p, ch), 1e-10);
}

TEST(CoAttentionBlock, WeightsComputedOncePerBlock) {
  std::mt19937_64 rng(8);
  ModelConfig c = tiny(Variant::kCoAttention);
  EncoderParams p = random_encoder(c, rng);
  const auto before = attention_counters();
  co_attention_block(Tensor::randn({8, 5}, rng), Tensor::randn({4, 4, 5}, rng), p.co_attention[0]);
  const auto after = attention_counters();
  EXPECT_EQ(after.co_attention - before.co_attention, 1u);
  // The only other weight computation is the E path's cross-frame attention.
  EXPECT_EQ(after.self_attention - before.self_attention, 1u);
}

TEST(CoAttentionBlock, SharedQueryKeyParametersAppearOnce) {
  std::mt19937_64 rng(9);
  ModelConfig c = tiny(Variant::kCoAttention);
  ParamList list;
  EncoderParams::init(c, rng).collect(c, list);
  std::set<const TensorImpl *> seen;
  std::size_t theta_count = 0;
  for (const auto &[name, t] : list) {
    EXPECT_TRUE(seen.insert(t.impl()).second) << name << " collected twice";
    if (name.rfind("blocks.0.theta_p.", 0) == 0) ++theta_count;
  }
  EXPECT_EQ(theta_count, 4u);
}

TEST(CoAttentionBlock, ChannelPermutation) {
  std::mt19937_64 rng(10);
  ModelConfig c = tiny(Variant::kCoAttention);
  EncoderParams p = random_encoder(c, rng);
  Tensor e = Tensor::randn({8, 5}, rng), pin = Tensor::randn({3, 4, 5}, rng);
  CoAttentionOutput ref = co_attention_block(e, pin, p.co_attention[0]);
  std::vector<std::size_t> order{1, 2, 0};
  CoAttentionOutput perm = co_attention_block(e, reorder_channels(pin, order), p.co_attention[0]);
  EXPECT_LE(max_diff(perm.e, ref.e), 1e-10);
  EXPECT_LE(max_diff(perm.p, reorder_channels(ref.p, order)), 1e-10);
  EXPECT_LE(max_diff(co_attention_final(perm), co_attention_final(ref)), 1e-10);
  EXPECT_THROW(co_attention_block(e, Tensor::randn({3, 4, 6}, rng), p.co_attention[0]),
               ShapeError);
}

TEST(CoAttentionBlock, FinalOutputShapeAtFullDims) {
  std::mt19937_64 rng(11);
  ModelConfig c;
  c.blocks = 1;
  EncoderParams p = EncoderParams::init(c, rng);
  Tensor e = Tensor::randn({256, 6}, rng), pin = Tensor::randn({2, 64, 6}, rng);
  EXPECT_EQ(co_attention_final(co_attention_block(e, pin, p.co_attention[0])).shape(),
            (Shape{320, 6}));
}

TEST(EncodeSession, TransformerFullDims) {
  std::mt19937_64 rng(12);
  ModelConfig c;
  c.variant = Variant::kTransformer;
  EncoderParams p = EncoderParams::init(c, rng);
  EXPECT_EQ(encode_session(random_input(c, 1, 500, rng), c, p).shape(), (Shape{256, 500}));
}

TEST(EncodeSession, SpatioTemporalSingleChannelFullDims) {
  std::mt19937_64 rng(13);
  ModelConfig c;
  c.variant = Variant::kSpatioTemporal;
  c.blocks = 2;
  EncoderParams p = EncoderParams::init(c, rng);
  EXPECT_EQ(encode_session(random_input(c, 1, 20, rng), c, p).shape(), (Shape{256, 20}));
}

TEST(EncodeSession, VariantFeatureMismatch) {
  std::mt19937_64 rng(14);
  ModelConfig c = tiny(Variant::kCoAttention);
  EncoderParams p = random_encoder(c, rng);
  ModelInput in;
  in.single = Tensor::randn({6, 4}, rng);
  EXPECT_THROW(encode_session(in, c, p), std::invalid_argument);
}

class ChannelInvariance : public ::testing::TestWithParam<Variant> {};

TEST_P(ChannelInvariance, AllPermutationsOfThreeChannels) {
  std::mt19937_64 rng(15);
  ModelConfig c = tiny(GetParam());
  Model model(c, 7);
  ParamList list = model.named_parameters();
  testutil::randomize(list, rng, 0.4);
  ModelInput in = random_input(c, 3, 6, rng);
  Tensor e_ref = model.embed(in);
  Tensor y_ref = model.forward(in);
  std::vector<std::size_t> order{0, 1, 2};
  int count = 0;
  do {
    ModelInput perm = in;
    perm.multi = reorder_channels(in.multi, order);
    EXPECT_LE(max_diff(model.embed(perm), e_ref), 1e-9);
    EXPECT_LE(max_diff(model.forward(perm), y_ref), 1e-9);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_EQ(count, 6);
}

TEST_P(ChannelInvariance, AnyChannelCountWithSameParameters) {
  std::mt19937_64 rng(16);
  ModelConfig c = tiny(GetParam());
  Model model(c, 3);
  std::vector<std::size_t> sizes;
  for (const auto &[name, t] : model.named_parameters()) sizes.push_back(t.numel());
  for (std::size_t channels : {1u, 2u, 4u, 8u}) {
    Tensor y = model.forward(random_input(c, channels, 5, rng));
    EXPECT_EQ(y.shape(), (Shape{2, 5}));
    std::vector<std::size_t> after;
    for (const auto &[name, t] : model.named_parameters()) after.push_back(t.numel());
    EXPECT_EQ(after, sizes);
  }
}

INSTANTIATE_TEST_SUITE_P(MultiChannel, ChannelInvariance,
                         ::testing::Values(Variant::kSpatioTemporal, Variant::kCoAttention),
                         [](const auto &info) { return std::string(variant_name(info.param)); });

class ActivationCount
    : public ::testing::TestWithParam<std::tuple<Variant, std::size_t, std::size_t>> {};

TEST_P(ActivationCount, MatchesRecordedTape) {
  const auto [variant, channels, frames] = GetParam();
  ModelConfig c = tiny(variant);
  c.blocks = 3;
  Model model(c, 5);
  std::mt19937_64 rng(17);
  ModelInput in = random_input(c, channels, frames, rng);
  Tape tape;
  Tape::Scope scope(tape);
  encode_session(in, c, model.params().encoder);
  EXPECT_EQ(count_activations(c, frames, channels).total, tape.stored_elements());
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ActivationCount,
    ::testing::Combine(::testing::Values(Variant::kTransformer, Variant::kSpatioTemporal,
                                         Variant::kCoAttention),
                       ::testing::Values(1u, 2u, 5u), ::testing::Values(3u, 7u)));

TEST(ActivationCount, ChannelSlopeRatioAtFullDims) {
  ModelConfig st;
  st.variant = Variant::kSpatioTemporal;
  ModelConfig co;
  const std::size_t t = 500;
  auto slope = [&](const ModelConfig &c) {
    return static_cast<double>(count_activations(c, t, 2).channel_state_per_block) -
           static_cast<double>(count_activations(c, t, 1).channel_state_per_block);
  };
  EXPECT_DOUBLE_EQ(slope(st), 500.0 * 256.0);
  EXPECT_DOUBLE_EQ(slope(co) / slope(st), 0.25);
}

TEST(ActivationCount, SingleChannelWithinTwiceTransformer) {
  ModelConfig tr;
  tr.variant = Variant::kTransformer;
  ModelConfig st;
  st.variant = Variant::kSpatioTemporal;
  ModelConfig co;
  const double base = static_cast<double>(count_activations(tr, 500, 1).total);
  for (const ModelConfig &c : {st, co}) {
    const double n = static_cast<double>(count_activations(c, 500, 1).total);
    EXPECT_LE(n, 2.0 * base) << variant_name(c.variant);
    EXPECT_GE(n, 0.5 * base) << variant_name(c.variant);
  }
}

// Block-level finite differences at D=8, D'=4, T=5, C=2 against the block
// input(s) and every block parameter, 20 random instances per block type.
class BlockGradients : public ::testing::TestWithParam<int> {};

TEST_P(BlockGradients, Transformer) {
  std::mt19937_64 rng(1000 + GetParam());
  ModelConfig c = tiny(Variant::kTransformer);
  EncoderParams p = random_encoder(c, rng);
  ParamList list;
  p.collect(c, list);
  std::vector<Tensor> inputs;
  for (const auto &[name, t] : list)
    if (name.rfind("blocks.0.", 0) == 0) inputs.push_back(t);
  Tensor x = testutil::leaf({8, 5}, rng);
  inputs.push_back(x);
  auto r = grad_check([&] { return probe(transformer_block(x, p.transformer[0]), 1); }, inputs);
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST_P(BlockGradients, SpatioTemporal) {
  std::mt19937_64 rng(2000 + GetParam());
  ModelConfig c = tiny(Variant::kSpatioTemporal);
  EncoderParams p = random_encoder(c, rng);
  ParamList list;
  p.collect(c, list);
  std::vector<Tensor> inputs;
  for (const auto &[name, t] : list)
    if (name.rfind("blocks.", 0) == 0) inputs.push_back(t);
  Tensor x = testutil::leaf({2, 8, 5}, rng);
  inputs.push_back(x);
  auto r = grad_check(
      [&] {
        Tensor mid = spatio_temporal_block(x, p.spatio_temporal[0], false);
        return probe(spatio_temporal_block(mid, p.spatio_temporal[1], true), 2);
      },
      inputs);
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST_P(BlockGradients, CoAttention) {
  std::mt19937_64 rng(3000 + GetParam());
  ModelConfig c = tiny(Variant::kCoAttention);
  EncoderParams p = random_encoder(c, rng);
  ParamList list;
  p.collect(c, list);
  std::vector<Tensor> inputs;
  for (const auto &[name, t] : list)
    if (name.rfind("blocks.0.", 0) == 0) inputs.push_back(t);
  Tensor e = testutil::leaf({8, 5}, rng), pin = testutil::leaf({2, 4, 5}, rng);
  inputs.push_back(e);
  inputs.push_back(pin);
  auto r = grad_check(
      [&] { return probe(co_attention_final(co_attention_block(e, pin, p.co_attention[0])), 3); },
      inputs);
  EXPECT_LE(r.max_rel_error, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Random, BlockGradients, ::testing::Range(0, 20));
