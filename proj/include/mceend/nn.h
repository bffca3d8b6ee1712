// mceend/nn.h
//
// Building blocks of the encoders: layer normalization, the linear frontend,
// the position-wise feed-forward network, multi-head attention (MA) and
// multi-head co-attention (MCA).
//
// Embedding sequences are [d x T] matrices (one column per frame) or batches
// [B x d x T] of them. Multi-channel inputs to MCA are stacked [C x d x T].

#ifndef MCEEND_NN_H_
#define MCEEND_NN_H_

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mceend/tensor.h"

namespace mceend {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNormParams init(std::size_t dim, double eps = 1e-5);
  void collect(const std::string &prefix, ParamList &out) const;
};

struct FrontendParams {
  Tensor weight;  // D x F
  Tensor bias;    // D
  LayerNormParams ln;

  static FrontendParams init(std::size_t in_dim, std::size_t out_dim, double eps,
                             std::mt19937_64 &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

// Query/key projections of all heads (Theta). Head i owns rows
// [i*d/h, (i+1)*d/h) of w_q and w_k.
struct QueryKeyParams {
  std::size_t heads = 1;
  Tensor w_q, b_q, w_k, b_k;

  static QueryKeyParams init(std::size_t dim, std::size_t heads, std::mt19937_64 &rng);
  std::size_t dim() const { return w_q.dim(0); }
  void collect(const std::string &prefix, ParamList &out) const;
};

// Value projections of all heads and the output projection (Phi).
struct ValueOutputParams {
  std::size_t heads = 1;
  Tensor w_v, b_v, w_o, b_o;

  static ValueOutputParams init(std::size_t dim, std::size_t heads, std::mt19937_64 &rng);
  std::size_t dim() const { return w_v.dim(0); }
  void collect(const std::string &prefix, ParamList &out) const;
};

struct AttentionParams {
  QueryKeyParams theta;
  ValueOutputParams phi;

  static AttentionParams init(std::size_t key_dim, std::size_t value_dim, std::size_t heads,
                              std::mt19937_64 &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

struct FfnParams {
  Tensor w1, b1, w2, b2;

  static FfnParams init(std::size_t dim, std::size_t hidden, std::mt19937_64 &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

// Glorot-uniform matrix.
Tensor init_weight(std::size_t rows, std::size_t cols, std::mt19937_64 &rng);

// W x + b 1^T, with x a matrix or a batch of matrices sharing W.
Tensor linear(const Tensor &x, const Tensor &weight, const Tensor &bias);

Tensor layer_norm(const Tensor &x, const LayerNormParams &p);

// LN(W0 X + b0 1^T).
Tensor frontend(const Tensor &x, const FrontendParams &p);

// W2 [W1 E + b1 1^T]_+ + b2 1^T.
Tensor feed_forward(const Tensor &e, const FfnParams &p);

// Per-head attention weights [B*h x T_k x T_q]. Column q of head i holds the
// softmax over keys of K^(i)T Q^(i) / sqrt(d_k/h), so every column sums to 1.
Tensor attention_weights(const Tensor &q, const Tensor &k, const QueryKeyParams &theta);

// Co-attention weights [h x T x T] from stacked channel inputs [C x d_k x T].
// Logits are summed over channels and scaled by sqrt(C d_k / h).
Tensor co_attention_weights(const Tensor &qs, const Tensor &ks, const QueryKeyParams &theta);

// W_O [V^(1) A^(1); ...; V^(h) A^(h)] + b_O 1^T for weights from
// attention_weights / co_attention_weights and values [B x d_v x T_k].
Tensor attend(const Tensor &weights, const Tensor &v, const ValueOutputParams &phi);

// Applies one set of co-attention weights [h x T_k x T_q] to every channel of
// stacked values [C x d_v x T_k].
Tensor attend_channels(const Tensor &weights, const Tensor &vs, const ValueOutputParams &phi);

Tensor multi_head_attention(const Tensor &q, const Tensor &k, const Tensor &v,
                            const AttentionParams &p);

Tensor multi_head_co_attention(const Tensor &qs, const Tensor &ks, const Tensor &v,
                               const AttentionParams &p);
Tensor multi_head_co_attention(std::span<const Tensor> qs, std::span<const Tensor> ks,
                               const Tensor &v, const AttentionParams &p);

// Number of attention weight computations on this thread, for structural
// assertions about weight sharing.
struct AttentionCounters {
  std::size_t self_attention = 0;
  std::size_t co_attention = 0;
};
AttentionCounters &attention_counters();

}  // namespace mceend

#endif  // MCEEND_NN_H_
