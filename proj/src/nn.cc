// mceend/nn.cc

#include "mceend/nn.h"

#include <cmath>
#include <stdexcept>

#include "mceend/ops.h"

namespace mceend {

namespace {

thread_local AttentionCounters t_counters;

std::size_t per_head(std::size_t dim, std::size_t heads, const char *what) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError(std::string(what) + ": dimension " + std::to_string(dim) +
                     " is not divisible by " + std::to_string(heads) + " heads");
  }
  return dim / heads;
}

// [.. x d x T] -> [B*h x d/h x T]; heads occupy consecutive row blocks so the
// split is a pure reinterpretation of row-major storage.
Tensor split_heads(const Tensor &x, std::size_t heads) {
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t d = x.dim(x.rank() - 2);
  const std::size_t t = x.dim(x.rank() - 1);
  return reshape(x, {batch * heads, d / heads, t});
}

// [C x d x T] -> [h x C*d/h x T]: per head, channel blocks stacked along rows.
Tensor channel_major_heads(const Tensor &x, std::size_t heads) {
  const std::size_t c = x.dim(0), d = x.dim(1), t = x.dim(2);
  Tensor split = reshape(x, {c, heads, d / heads, t});
  return reshape(permute(split, {1, 0, 2, 3}), {heads, c * (d / heads), t});
}

}  // namespace

AttentionCounters &attention_counters() { return t_counters; }

Tensor init_weight(std::size_t rows, std::size_t cols, std::mt19937_64 &rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return Tensor::uniform({rows, cols}, rng, -a, a).set_requires_grad();
}

LayerNormParams LayerNormParams::init(std::size_t dim, double eps) {
  LayerNormParams p;
  p.gamma = Tensor::full({dim}, 1.0).set_requires_grad();
  p.beta = Tensor::zeros({dim}).set_requires_grad();
  p.eps = eps;
  return p;
}

void LayerNormParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

FrontendParams FrontendParams::init(std::size_t in_dim, std::size_t out_dim, double eps,
                                    std::mt19937_64 &rng) {
  FrontendParams p;
  p.weight = init_weight(out_dim, in_dim, rng);
  p.bias = Tensor::zeros({out_dim}).set_requires_grad();
  p.ln = LayerNormParams::init(out_dim, eps);
  return p;
}

void FrontendParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".W", weight);
  out.emplace_back(prefix + ".b", bias);
  ln.collect(prefix + ".ln", out);
}

QueryKeyParams QueryKeyParams::init(std::size_t dim, std::size_t heads, std::mt19937_64 &rng) {
  per_head(dim, heads, "QueryKeyParams");
  QueryKeyParams p;
  p.heads = heads;
  p.w_q = init_weight(dim, dim, rng);
  p.b_q = Tensor::zeros({dim}).set_requires_grad();
  p.w_k = init_weight(dim, dim, rng);
  p.b_k = Tensor::zeros({dim}).set_requires_grad();
  return p;
}

void QueryKeyParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".W_Q", w_q);
  out.emplace_back(prefix + ".b_Q", b_q);
  out.emplace_back(prefix + ".W_K", w_k);
  out.emplace_back(prefix + ".b_K", b_k);
}

ValueOutputParams ValueOutputParams::init(std::size_t dim, std::size_t heads,
                                          std::mt19937_64 &rng) {
  per_head(dim, heads, "ValueOutputParams");
  ValueOutputParams p;
  p.heads = heads;
  p.w_v = init_weight(dim, dim, rng);
  p.b_v = Tensor::zeros({dim}).set_requires_grad();
  p.w_o = init_weight(dim, dim, rng);
  p.b_o = Tensor::zeros({dim}).set_requires_grad();
  return p;
}

void ValueOutputParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".W_V", w_v);
  out.emplace_back(prefix + ".b_V", b_v);
  out.emplace_back(prefix + ".W_O", w_o);
  out.emplace_back(prefix + ".b_O", b_o);
}

AttentionParams AttentionParams::init(std::size_t key_dim, std::size_t value_dim,
                                      std::size_t heads, std::mt19937_64 &rng) {
  return {QueryKeyParams::init(key_dim, heads, rng), ValueOutputParams::init(value_dim, heads, rng)};
}

void AttentionParams::collect(const std::string &prefix, ParamList &out) const {
  theta.collect(prefix, out);
  phi.collect(prefix, out);
}

FfnParams FfnParams::init(std::size_t dim, std::size_t hidden, std::mt19937_64 &rng) {
  FfnParams p;
  p.w1 = init_weight(hidden, dim, rng);
  p.b1 = Tensor::zeros({hidden}).set_requires_grad();
  p.w2 = init_weight(dim, hidden, rng);
  p.b2 = Tensor::zeros({dim}).set_requires_grad();
  return p;
}

void FfnParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".W1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".W2", w2);
  out.emplace_back(prefix + ".b2", b2);
}

Tensor linear(const Tensor &x, const Tensor &weight, const Tensor &bias) {
  return add_bias(matmul(weight, x), bias);
}

Tensor layer_norm(const Tensor &x, const LayerNormParams &p) {
  return layer_norm(x, p.gamma, p.beta, p.eps);
}

Tensor frontend(const Tensor &x, const FrontendParams &p) {
  return layer_norm(linear(x, p.weight, p.bias), p.ln);
}

Tensor feed_forward(const Tensor &e, const FfnParams &p) {
  return linear(relu(linear(e, p.w1, p.b1)), p.w2, p.b2);
}

Tensor attention_weights(const Tensor &q, const Tensor &k, const QueryKeyParams &theta) {
  const std::size_t d_k = theta.dim();
  const std::size_t head_dim = per_head(d_k, theta.heads, "attention");
  if (q.rank() != k.rank() || q.dim(q.rank() - 2) != d_k || k.dim(k.rank() - 2) != d_k ||
      (q.rank() == 3 && q.dim(0) != k.dim(0))) {
    throw ShapeError("attention: query " + shape_str(q.shape()) + " and key " +
                     shape_str(k.shape()) + " do not match key dimension " +
                     std::to_string(d_k));
  }
  ++t_counters.self_attention;
  Tensor qh = split_heads(linear(q, theta.w_q, theta.b_q), theta.heads);
  Tensor kh = split_heads(linear(k, theta.w_k, theta.b_k), theta.heads);
  Tensor logits = matmul(kh, qh, /*trans_a=*/true);
  return softmax_columns(scale(logits, 1.0 / std::sqrt(static_cast<double>(head_dim))));
}

Tensor co_attention_weights(const Tensor &qs, const Tensor &ks, const QueryKeyParams &theta) {
  const std::size_t d_k = theta.dim();
  const std::size_t head_dim = per_head(d_k, theta.heads, "co-attention");
  if (qs.rank() != 3 || ks.rank() != 3) {
    throw ShapeError("co-attention: expected stacked channels [C x d x T], got " +
                     shape_str(qs.shape()) + " and " + shape_str(ks.shape()));
  }
  if (qs.dim(0) != ks.dim(0)) {
    throw ShapeError("co-attention: " + std::to_string(qs.dim(0)) + " query channels vs " +
                     std::to_string(ks.dim(0)) + " key channels");
  }
  if (qs.dim(1) != d_k || ks.dim(1) != d_k || qs.dim(2) != ks.dim(2)) {
    throw ShapeError("co-attention: inputs " + shape_str(qs.shape()) + " / " +
                     shape_str(ks.shape()) + " do not match key dimension " +
                     std::to_string(d_k));
  }
  ++t_counters.co_attention;
  const std::size_t channels = qs.dim(0);
  Tensor qh = channel_major_heads(linear(qs, theta.w_q, theta.b_q), theta.heads);
  Tensor kh = channel_major_heads(linear(ks, theta.w_k, theta.b_k), theta.heads);
  Tensor logits = matmul(kh, qh, /*trans_a=*/true);
  const double denom = std::sqrt(static_cast<double>(channels * head_dim));
  return softmax_columns(scale(logits, 1.0 / denom));
}

Tensor attend(const Tensor &weights, const Tensor &v, const ValueOutputParams &phi) {
  const std::size_t d_v = phi.dim();
  per_head(d_v, phi.heads, "attention values");
  const std::size_t batch = v.rank() == 3 ? v.dim(0) : 1;
  if (v.rank() < 2 || v.rank() > 3 || v.dim(v.rank() - 2) != d_v ||
      weights.dim(0) != batch * phi.heads || weights.dim(1) != v.dim(v.rank() - 1)) {
    throw ShapeError("attention: values " + shape_str(v.shape()) + " incompatible with weights " +
                     shape_str(weights.shape()));
  }
  const std::size_t t_q = weights.dim(2);
  Tensor vh = split_heads(linear(v, phi.w_v, phi.b_v), phi.heads);
  Tensor context = matmul(vh, weights);
  Shape stacked = v.rank() == 3 ? Shape{batch, d_v, t_q} : Shape{d_v, t_q};
  return linear(reshape(context, stacked), phi.w_o, phi.b_o);
}

Tensor attend_channels(const Tensor &weights, const Tensor &vs, const ValueOutputParams &phi) {
  const std::size_t d_v = phi.dim();
  const std::size_t head_dim = per_head(d_v, phi.heads, "attention values");
  if (vs.rank() != 3 || vs.dim(1) != d_v || weights.dim(0) != phi.heads ||
      weights.dim(1) != vs.dim(2)) {
    throw ShapeError("co-attention: values " + shape_str(vs.shape()) +
                     " incompatible with weights " + shape_str(weights.shape()));
  }
  const std::size_t channels = vs.dim(0);
  const std::size_t t_q = weights.dim(2);
  Tensor vh = channel_major_heads(linear(vs, phi.w_v, phi.b_v), phi.heads);
  Tensor context = matmul(vh, weights);  // [h x C*d/h x T_q]
  Tensor per_channel = permute(reshape(context, {phi.heads, channels, head_dim, t_q}),
                               {1, 0, 2, 3});
  return linear(reshape(per_channel, {channels, d_v, t_q}), phi.w_o, phi.b_o);
}

Tensor multi_head_attention(const Tensor &q, const Tensor &k, const Tensor &v,
                            const AttentionParams &p) {
  return attend(attention_weights(q, k, p.theta), v, p.phi);
}

Tensor multi_head_co_attention(const Tensor &qs, const Tensor &ks, const Tensor &v,
                               const AttentionParams &p) {
  return attend(co_attention_weights(qs, ks, p.theta), v, p.phi);
}

Tensor multi_head_co_attention(std::span<const Tensor> qs, std::span<const Tensor> ks,
                               const Tensor &v, const AttentionParams &p) {
  if (qs.empty() || ks.empty()) throw ShapeError("co-attention: empty channel list");
  if (qs.size() != ks.size()) {
    throw ShapeError("co-attention: " + std::to_string(qs.size()) + " query channels vs " +
                     std::to_string(ks.size()) + " key channels");
  }
  return multi_head_co_attention(stack(qs), stack(ks), v, p);
}

}  // namespace mceend
