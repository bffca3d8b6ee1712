// mceend/encoders.cc

#include "mceend/encoders.h"

#include <stdexcept>

#include "mceend/ops.h"

namespace mceend {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kTransformer: return "transformer";
    case Variant::kSpatioTemporal: return "spatio_temporal";
    case Variant::kCoAttention: return "co_attention";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "transformer") return Variant::kTransformer;
  if (name == "spatio_temporal") return Variant::kSpatioTemporal;
  if (name == "co_attention") return Variant::kCoAttention;
  throw std::invalid_argument("unknown encoder variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string &msg) { throw std::invalid_argument("model config: " + msg); };
  if (blocks < 1) fail("blocks must be >= 1");
  if (speakers < 1) fail("speakers must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (input_dim == 0 || model_dim == 0 || ffn_dim == 0) fail("dimensions must be positive");
  if (model_dim % heads != 0) fail("model_dim must be divisible by heads");
  if (variant == Variant::kCoAttention) {
    if (channel_dim == 0 || channel_ffn_dim == 0 || channel_input_dim == 0) {
      fail("co_attention needs positive channel dimensions");
    }
    if (channel_dim % heads != 0) fail("channel_dim must be divisible by heads");
  }
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
}

std::size_t ModelInput::frames() const {
  if (single.defined()) return single.dim(single.rank() - 1);
  if (multi.defined()) return multi.dim(multi.rank() - 1);
  throw std::invalid_argument("empty model input");
}

EncoderParams EncoderParams::init(const ModelConfig &config, std::mt19937_64 &rng) {
  config.validate();
  const std::size_t d = config.model_dim;
  const std::size_t h = config.heads;
  const double eps = config.ln_eps;
  EncoderParams p;
  p.frontend = FrontendParams::init(config.input_dim, d, eps, rng);
  for (std::size_t n = 0; n < config.blocks; ++n) {
    switch (config.variant) {
      case Variant::kTransformer:
        p.transformer.push_back({AttentionParams::init(d, d, h, rng),
                                 LayerNormParams::init(d, eps),
                                 FfnParams::init(d, config.ffn_dim, rng),
                                 LayerNormParams::init(d, eps)});
        break;
      case Variant::kSpatioTemporal:
        p.spatio_temporal.push_back({AttentionParams::init(d, d, h, rng),
                                     LayerNormParams::init(d, eps),
                                     AttentionParams::init(d, d, h, rng),
                                     LayerNormParams::init(d, eps)});
        break;
      case Variant::kCoAttention: {
        const std::size_t dc = config.channel_dim;
        CoAttentionBlockParams b;
        b.theta_p = QueryKeyParams::init(dc, h, rng);
        b.phi_e = ValueOutputParams::init(d, h, rng);
        b.phi_p = ValueOutputParams::init(dc, h, rng);
        b.cross_frame = AttentionParams::init(d, d, h, rng);
        b.psi_e = FfnParams::init(d, config.ffn_dim, rng);
        b.psi_p = FfnParams::init(dc, config.channel_ffn_dim, rng);
        b.ln_e1 = LayerNormParams::init(d, eps);
        b.ln_e2 = LayerNormParams::init(d, eps);
        b.ln_e3 = LayerNormParams::init(d, eps);
        b.ln_p1 = LayerNormParams::init(dc, eps);
        b.ln_p2 = LayerNormParams::init(dc, eps);
        p.co_attention.push_back(std::move(b));
        break;
      }
    }
  }
  if (config.variant == Variant::kCoAttention) {
    p.channel_frontend =
        FrontendParams::init(config.channel_input_dim, config.channel_dim, eps, rng);
  }
  return p;
}

void EncoderParams::collect(const ModelConfig &config, ParamList &out) const {
  frontend.collect("frontend", out);
  if (config.variant == Variant::kCoAttention) channel_frontend.collect("channel_frontend", out);
  for (std::size_t n = 0; n < transformer.size(); ++n) {
    const std::string b = "blocks." + std::to_string(n);
    const auto &p = transformer[n];
    p.self_attn.collect(b + ".self_attn", out);
    p.ln_attn.collect(b + ".ln_attn", out);
    p.ffn.collect(b + ".ffn", out);
    p.ln_ffn.collect(b + ".ln_ffn", out);
  }
  for (std::size_t n = 0; n < spatio_temporal.size(); ++n) {
    const std::string b = "blocks." + std::to_string(n);
    const auto &p = spatio_temporal[n];
    p.cross_channel.collect(b + ".cross_channel", out);
    p.ln_channel.collect(b + ".ln_channel", out);
    p.cross_frame.collect(b + ".cross_frame", out);
    p.ln_frame.collect(b + ".ln_frame", out);
  }
  for (std::size_t n = 0; n < co_attention.size(); ++n) {
    const std::string b = "blocks." + std::to_string(n);
    const auto &p = co_attention[n];
    p.theta_p.collect(b + ".theta_p", out);
    p.phi_e.collect(b + ".phi_e", out);
    p.phi_p.collect(b + ".phi_p", out);
    p.cross_frame.collect(b + ".cross_frame", out);
    p.psi_e.collect(b + ".psi_e", out);
    p.psi_p.collect(b + ".psi_p", out);
    p.ln_e1.collect(b + ".ln_e1", out);
    p.ln_e2.collect(b + ".ln_e2", out);
    p.ln_e3.collect(b + ".ln_e3", out);
    p.ln_p1.collect(b + ".ln_p1", out);
    p.ln_p2.collect(b + ".ln_p2", out);
  }
}

Tensor transformer_block(const Tensor &e_in, const TransformerBlockParams &p) {
  Tensor e1 = layer_norm(add(e_in, multi_head_attention(e_in, e_in, e_in, p.self_attn)),
                         p.ln_attn);
  return layer_norm(add(e1, feed_forward(e1, p.ffn)), p.ln_ffn);
}

Tensor spatio_temporal_block(const Tensor &e_in, const SpatioTemporalBlockParams &p,
                             bool is_final) {
  if (e_in.rank() != 3) {
    throw ShapeError("spatio_temporal_block: expected [C x D x T], got " +
                     shape_str(e_in.shape()));
  }
  // Cross-channel: for every frame, the C channel embeddings form the sequence.
  Tensor by_frame = permute(e_in, {2, 1, 0});  // [T x D x C]
  Tensor mixed = layer_norm(
      add(by_frame, multi_head_attention(by_frame, by_frame, by_frame, p.cross_channel)),
      p.ln_channel);
  Tensor by_channel = permute(mixed, {2, 1, 0});  // [C x D x T]
  if (is_final) {
    Tensor avg = mean_over_axis(by_channel, 0);
    return layer_norm(add(avg, multi_head_attention(avg, avg, avg, p.cross_frame)), p.ln_frame);
  }
  return layer_norm(
      add(by_channel, multi_head_attention(by_channel, by_channel, by_channel, p.cross_frame)),
      p.ln_frame);
}

CoAttentionOutput co_attention_block(const Tensor &e_in, const Tensor &p_in,
                                     const CoAttentionBlockParams &p) {
  if (p_in.rank() != 3 || e_in.rank() != 2) {
    throw ShapeError("co_attention_block: expected E [D x T] and P [C x D' x T], got " +
                     shape_str(e_in.shape()) + " and " + shape_str(p_in.shape()));
  }
  if (p_in.dim(2) != e_in.dim(1)) {
    throw ShapeError("co_attention_block: frame count mismatch between " +
                     shape_str(e_in.shape()) + " and " + shape_str(p_in.shape()));
  }
  Tensor weights = co_attention_weights(p_in, p_in, p.theta_p);

  Tensor e1 = layer_norm(add(e_in, attend(weights, e_in, p.phi_e)), p.ln_e1);
  Tensor e2 = layer_norm(add(e1, multi_head_attention(e1, e1, e1, p.cross_frame)), p.ln_e2);
  Tensor e_out = layer_norm(add(e2, feed_forward(e2, p.psi_e)), p.ln_e3);

  Tensor p1 = layer_norm(add(p_in, attend_channels(weights, p_in, p.phi_p)), p.ln_p1);
  Tensor p_out = layer_norm(add(p1, feed_forward(p1, p.psi_p)), p.ln_p2);
  return {e_out, p_out};
}

Tensor co_attention_final(const CoAttentionOutput &out) {
  const Tensor parts[] = {out.e, mean_over_axis(out.p, 0)};
  return concat_rows(parts);
}

Tensor encode_session(const ModelInput &input, const ModelConfig &config,
                      const EncoderParams &params) {
  auto mismatch = [&](const std::string &why) {
    return std::invalid_argument(std::string(variant_name(config.variant)) +
                                 " encoder: " + why);
  };
  switch (config.variant) {
    case Variant::kTransformer: {
      if (!input.single.defined() || input.single.rank() != 2) {
        throw mismatch("needs single-channel features [F x T]");
      }
      Tensor e = frontend(input.single, params.frontend);
      for (const auto &b : params.transformer) e = transformer_block(e, b);
      return e;
    }
    case Variant::kSpatioTemporal: {
      if (!input.multi.defined() || input.multi.rank() != 3) {
        throw mismatch("needs per-channel features [C x F x T]");
      }
      Tensor e = frontend(input.multi, params.frontend);
      const std::size_t n = params.spatio_temporal.size();
      for (std::size_t i = 0; i < n; ++i) {
        e = spatio_temporal_block(e, params.spatio_temporal[i], i + 1 == n);
      }
      return e;
    }
    case Variant::kCoAttention: {
      if (!input.single.defined() || input.single.rank() != 2 || !input.multi.defined() ||
          input.multi.rank() != 3) {
        throw mismatch("needs averaged features [F x T] and channel features [C x 23 x T]");
      }
      CoAttentionOutput state{frontend(input.single, params.frontend),
                              frontend(input.multi, params.channel_frontend)};
      for (const auto &b : params.co_attention) state = co_attention_block(state.e, state.p, b);
      return co_attention_final(state);
    }
  }
  throw mismatch("unsupported variant");
}

namespace {

// Element counts of the op outputs recorded by the functions above; they
// mirror the implementation one op at a time.
std::size_t linear_count(std::size_t d_out, std::size_t cols) { return 2 * d_out * cols; }

std::size_t ffn_count(std::size_t d, std::size_t hidden, std::size_t cols) {
  return linear_count(hidden, cols) + hidden * cols + linear_count(d, cols);
}

std::size_t weights_count(std::size_t batch, std::size_t d_k, std::size_t h, std::size_t t_q,
                          std::size_t t_k) {
  return 3 * d_k * batch * (t_q + t_k) + 3 * batch * h * t_k * t_q;
}

std::size_t attend_count(std::size_t batch, std::size_t d_v, std::size_t t_k, std::size_t t_q) {
  return 3 * d_v * batch * t_k + 4 * d_v * batch * t_q;
}

std::size_t self_attention_count(std::size_t batch, std::size_t d, std::size_t h,
                                 std::size_t len) {
  return weights_count(batch, d, h, len, len) + attend_count(batch, d, len, len);
}

}  // namespace

ActivationReport count_activations(const ModelConfig &config, std::size_t frames,
                                   std::size_t channels) {
  const std::size_t d = config.model_dim, dc = config.channel_dim, h = config.heads;
  const std::size_t t = frames, c = channels;
  ActivationReport r;
  std::size_t final_block = 0;
  switch (config.variant) {
    case Variant::kTransformer: {
      r.frontend = 3 * d * t;
      r.per_block = self_attention_count(1, d, h, t) + 2 * d * t +
                    ffn_count(d, config.ffn_dim, t) + 2 * d * t;
      final_block = r.per_block;
      break;
    }
    case Variant::kSpatioTemporal: {
      r.frontend = 3 * d * c * t;
      r.channel_state_per_block = c * t * d;
      const std::size_t cross_channel =
          2 * d * c * t + self_attention_count(t, d, h, c) + 2 * d * c * t;
      const std::size_t cross_frame = self_attention_count(c, d, h, t) + 2 * d * c * t;
      r.per_block = cross_channel + cross_frame;
      final_block = cross_channel + d * t + self_attention_count(1, d, h, t) + 2 * d * t;
      break;
    }
    case Variant::kCoAttention: {
      r.frontend = 3 * d * t + 3 * dc * c * t;
      r.channel_state_per_block = c * t * dc;
      const std::size_t weights = 10 * dc * c * t + 3 * h * t * t;
      const std::size_t e_path = attend_count(1, d, t, t) + 2 * d * t +
                                 self_attention_count(1, d, h, t) + 2 * d * t +
                                 ffn_count(d, config.ffn_dim, t) + 2 * d * t;
      const std::size_t p_path =
          11 * dc * c * t + 2 * dc * c * t + ffn_count(dc, config.channel_ffn_dim, c * t) +
          2 * dc * c * t;
      r.per_block = weights + e_path + p_path;
      final_block = r.per_block + dc * t + (d + dc) * t;
      break;
    }
  }
  r.total = r.frontend + (config.blocks - 1) * r.per_block + final_block;
  return r;
}

}  // namespace mceend
