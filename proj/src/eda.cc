// mceend/eda.cc

#include "mceend/eda.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mceend/ops.h"

namespace mceend {

LstmParams LstmParams::init(std::size_t dim, std::mt19937_64 &rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(dim));
  LstmParams p;
  p.w_ih = Tensor::uniform({4 * dim, dim}, rng, -a, a).set_requires_grad();
  p.w_hh = Tensor::uniform({4 * dim, dim}, rng, -a, a).set_requires_grad();
  p.bias = Tensor::uniform({4 * dim}, rng, -a, a).set_requires_grad();
  return p;
}

LstmParams LstmParams::zeros(std::size_t dim) {
  LstmParams p;
  p.w_ih = Tensor::zeros({4 * dim, dim}).set_requires_grad();
  p.w_hh = Tensor::zeros({4 * dim, dim}).set_requires_grad();
  p.bias = Tensor::zeros({4 * dim}).set_requires_grad();
  return p;
}

void LstmParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + ".W_ih", w_ih);
  out.emplace_back(prefix + ".W_hh", w_hh);
  out.emplace_back(prefix + ".b", bias);
}

EdaParams EdaParams::init(std::size_t dim, std::mt19937_64 &rng) {
  EdaParams p;
  p.encoder = LstmParams::init(dim, rng);
  p.decoder = LstmParams::init(dim, rng);
  return p;
}

void EdaParams::collect(const std::string &prefix, ParamList &out) const {
  encoder.collect(prefix + ".encoder", out);
  decoder.collect(prefix + ".decoder", out);
}

LstmState lstm_step(const Tensor &input_gates, const LstmState &state, const LstmParams &p) {
  const std::size_t d = p.hidden();
  Tensor gates = add(input_gates, matmul(p.w_hh, state.h));
  Tensor i = sigmoid(slice(gates, 0, 0, d));
  Tensor f = sigmoid(slice(gates, 0, d, 2 * d));
  Tensor g = tanh(slice(gates, 0, 2 * d, 3 * d));
  Tensor o = sigmoid(slice(gates, 0, 3 * d, 4 * d));
  Tensor c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Tensor compute_attractors(const Tensor &e, const EdaParams &p, std::size_t speakers,
                          std::mt19937_64 *shuffle_rng) {
  if (e.rank() != 2) throw ShapeError("compute_attractors: expected [d x T], got " + shape_str(e.shape()));
  const std::size_t d = e.dim(0);
  const std::size_t frames = e.dim(1);
  if (p.encoder.hidden() != d || p.encoder.w_ih.dim(1) != d) {
    throw ShapeError("compute_attractors: embedding dim " + std::to_string(d) +
                     " does not match attractor cell size " +
                     std::to_string(p.encoder.hidden()));
  }
  Tensor inputs = e;
  if (shuffle_rng) {
    std::vector<std::size_t> order(frames);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), *shuffle_rng);
    inputs = gather(e, 1, order);
  }
  Tensor input_gates = linear(inputs, p.encoder.w_ih, p.encoder.bias);  // 4d x T
  LstmState state{Tensor::zeros({d, 1}), Tensor::zeros({d, 1})};
  for (std::size_t t = 0; t < frames; ++t) {
    state = lstm_step(slice(input_gates, 1, t, t + 1), state, p.encoder);
  }
  const Tensor zero_input = Tensor::zeros({d, 1});
  const Tensor decoder_gates = linear(zero_input, p.decoder.w_ih, p.decoder.bias);
  std::vector<Tensor> columns;
  for (std::size_t s = 0; s < speakers; ++s) {
    state = lstm_step(decoder_gates, state, p.decoder);
    columns.push_back(state.h);
  }
  return concat(columns, 1);
}

Tensor compute_posteriors(const Tensor &attractors, const Tensor &e) {
  if (attractors.rank() != 2 || e.rank() != 2 || attractors.dim(0) != e.dim(0)) {
    throw ShapeError("compute_posteriors: attractors " + shape_str(attractors.shape()) +
                     " do not match embeddings " + shape_str(e.shape()));
  }
  return sigmoid(matmul(attractors, e, /*trans_a=*/true));
}

}  // namespace mceend
