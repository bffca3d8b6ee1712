// mceend/model.h

#ifndef MCEEND_MODEL_H_
#define MCEEND_MODEL_H_

#include <cstdint>
#include <random>

#include "mceend/eda.h"
#include "mceend/encoders.h"

namespace mceend {

struct ModelParams {
  EncoderParams encoder;
  EdaParams eda;
};

// Encoder stack + attractor head.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ModelParams params);

  const ModelConfig &config() const { return config_; }
  const ModelParams &params() const { return params_; }
  ModelParams &params() { return params_; }

  // Every trainable tensor under a stable hierarchical name. Tensors are
  // shared handles: modifying them modifies the model.
  ParamList named_parameters() const;

  Tensor embed(const ModelInput &input) const;
  // Posteriors S x T. Frame order is shuffled inside the attractor encoder
  // when `shuffle_rng` is given (training).
  Tensor forward(const ModelInput &input, std::mt19937_64 *shuffle_rng = nullptr) const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

}  // namespace mceend

#endif  // MCEEND_MODEL_H_
