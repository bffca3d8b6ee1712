// mceend/eda.h
//
// Encoder-decoder attractors and speech-activity posteriors.

#ifndef MCEEND_EDA_H_
#define MCEEND_EDA_H_

#include <cstddef>
#include <random>
#include <string>

#include "mceend/nn.h"
#include "mceend/tensor.h"

namespace mceend {

// Single-layer LSTM cell; gate rows are stacked as [input; forget; cell; output].
struct LstmParams {
  Tensor w_ih;  // 4d x d
  Tensor w_hh;  // 4d x d
  Tensor bias;  // 4d

  static LstmParams init(std::size_t dim, std::mt19937_64 &rng);
  static LstmParams zeros(std::size_t dim);
  std::size_t hidden() const { return w_hh.dim(1); }
  void collect(const std::string &prefix, ParamList &out) const;
};

struct EdaParams {
  LstmParams encoder;
  LstmParams decoder;

  static EdaParams init(std::size_t dim, std::mt19937_64 &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

struct LstmState {
  Tensor h;  // d x 1
  Tensor c;  // d x 1
};

// One step given the precomputed input contribution W_ih x + b (4d x 1).
LstmState lstm_step(const Tensor &input_gates, const LstmState &state, const LstmParams &p);

// B = EDA(E): the encoder consumes the T frame embeddings (in a random order
// drawn from `shuffle_rng` when non-null), its final state seeds the decoder,
// and the decoder is stepped `speakers` times on zero inputs. Returns d x S.
Tensor compute_attractors(const Tensor &e, const EdaParams &p, std::size_t speakers,
                          std::mt19937_64 *shuffle_rng = nullptr);

// Y = sigmoid(B^T E), S x T.
Tensor compute_posteriors(const Tensor &attractors, const Tensor &e);

}  // namespace mceend

#endif  // MCEEND_EDA_H_
