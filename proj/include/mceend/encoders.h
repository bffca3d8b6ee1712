// mceend/encoders.h
//
// Encoder stacks producing the frame embeddings E^(N) consumed by the
// attractor head:
//   transformer      single-channel blocks (attention + FFN)
//   spatio_temporal  cross-channel then cross-frame self-attention per block
//   co_attention     single-channel path whose cross-frame attention weights
//                    come from the stacked multi-channel path
//
// Multi-channel embeddings are stored channel-major as [C x D x T].

#ifndef MCEEND_ENCODERS_H_
#define MCEEND_ENCODERS_H_

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mceend/nn.h"
#include "mceend/tensor.h"

namespace mceend {

enum class Variant { kTransformer, kSpatioTemporal, kCoAttention };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::kCoAttention;
  std::size_t input_dim = 345;          // F, spliced log-mel
  std::size_t channel_input_dim = 23;   // context-averaged log-mel per channel
  std::size_t model_dim = 256;          // D
  std::size_t channel_dim = 64;         // D'
  std::size_t heads = 4;
  std::size_t ffn_dim = 1024;           // d_f
  std::size_t channel_ffn_dim = 256;    // d_f' of the co-attention channel path
  std::size_t blocks = 4;               // N
  std::size_t speakers = 2;             // S
  double ln_eps = 1e-5;

  std::size_t attractor_dim() const {
    return variant == Variant::kCoAttention ? model_dim + channel_dim : model_dim;
  }
  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct TransformerBlockParams {
  AttentionParams self_attn;
  LayerNormParams ln_attn;
  FfnParams ffn;
  LayerNormParams ln_ffn;
};

// No feed-forward network in this block type.
struct SpatioTemporalBlockParams {
  AttentionParams cross_channel;
  LayerNormParams ln_channel;
  AttentionParams cross_frame;
  LayerNormParams ln_frame;
};

struct CoAttentionBlockParams {
  QueryKeyParams theta_p;  // single instance, used for both E and P paths
  ValueOutputParams phi_e;
  ValueOutputParams phi_p;
  AttentionParams cross_frame;
  FfnParams psi_e;
  FfnParams psi_p;
  LayerNormParams ln_e1, ln_e2, ln_e3;
  LayerNormParams ln_p1, ln_p2;
};

struct EncoderParams {
  FrontendParams frontend;          // F -> D
  FrontendParams channel_frontend;  // 23 -> D' (co-attention only)
  std::vector<TransformerBlockParams> transformer;
  std::vector<SpatioTemporalBlockParams> spatio_temporal;
  std::vector<CoAttentionBlockParams> co_attention;

  static EncoderParams init(const ModelConfig &config, std::mt19937_64 &rng);
  void collect(const ModelConfig &config, ParamList &out) const;
};

// Variant-specific model input.
//   transformer:      single [F x T]
//   spatio_temporal:  multi  [C x F x T]
//   co_attention:     single [F x T] (channel average) and multi [C x 23 x T]
struct ModelInput {
  Tensor single;
  Tensor multi;

  std::size_t frames() const;
  std::size_t channels() const { return multi.defined() ? multi.dim(0) : 1; }
};

Tensor transformer_block(const Tensor &e_in, const TransformerBlockParams &p);

// e_in: [C x D x T]. Returns [C x D x T], or [D x T] for the final block where
// the cross-frame stage runs on the channel average.
Tensor spatio_temporal_block(const Tensor &e_in, const SpatioTemporalBlockParams &p,
                             bool is_final);

struct CoAttentionOutput {
  Tensor e;  // [D x T]
  Tensor p;  // [C x D' x T]
};

CoAttentionOutput co_attention_block(const Tensor &e_in, const Tensor &p_in,
                                     const CoAttentionBlockParams &p);

// [E_out; mean_c P_out,c], the final-block output of size (D + D') x T.
Tensor co_attention_final(const CoAttentionOutput &out);

// Frontend(s) followed by the N blocks of the configured variant.
Tensor encode_session(const ModelInput &input, const ModelConfig &config,
                      const EncoderParams &params);

// Analytic count of forward activations kept for the backward pass (outputs of
// every recorded op), per block and for the whole encoder.
struct ActivationReport {
  // Channel-indexed embedding state carried by one block: C*T*D for
  // spatio_temporal, C*T*D' for co_attention, 0 for transformer.
  std::size_t channel_state_per_block = 0;
  std::size_t per_block = 0;   // every stored op output of one non-final block
  std::size_t frontend = 0;
  std::size_t total = 0;       // frontend + all blocks
};

ActivationReport count_activations(const ModelConfig &config, std::size_t frames,
                                   std::size_t channels);

}  // namespace mceend

#endif  // MCEEND_ENCODERS_H_
