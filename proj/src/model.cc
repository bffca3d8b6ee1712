// mceend/model.cc

#include "mceend/model.h"

namespace mceend {

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  params_.encoder = EncoderParams::init(config_, rng);
  params_.eda = EdaParams::init(config_.attractor_dim(), rng);
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

ParamList Model::named_parameters() const {
  ParamList out;
  params_.encoder.collect(config_, out);
  params_.eda.collect("eda", out);
  return out;
}

Tensor Model::embed(const ModelInput &input) const {
  return encode_session(input, config_, params_.encoder);
}

Tensor Model::forward(const ModelInput &input, std::mt19937_64 *shuffle_rng) const {
  Tensor e = embed(input);
  Tensor attractors = compute_attractors(e, params_.eda, config_.speakers, shuffle_rng);
  return compute_posteriors(attractors, e);
}

}  // namespace mceend
