// mceend/checkpoint.h
//
// Single-file container of named float64 tensors with a text manifest:
//
//   mceend-checkpoint v1
//   meta <one-line JSON>
//   tensor <name> f64 <d0>x<d1>... <byte offset>
//   ...
//   end
//   <little-endian float64 blob; offsets are relative to its first byte>
//
// Model parameters are stored under their hierarchical names, Adam moments
// under "adam.m.<name>" and "adam.v.<name>".

#ifndef MCEEND_CHECKPOINT_H_
#define MCEEND_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mceend/features.h"
#include "mceend/model.h"
#include "mceend/trainer.h"

namespace mceend {

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor *find(const std::string &name) const;
};

// Writes to <path>.tmp and renames over <path>.
void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
// Throws DataError on a malformed file.
Checkpoint read_checkpoint(const std::filesystem::path &path);

// meta: model config, feature config, optimizer step and hyperparameters,
// plus `extra` merged in at the top level.
Checkpoint make_checkpoint(const Model &model, const FeatureConfig &features,
                           const OptimizerState *optimizer = nullptr,
                           const nlohmann::json &extra = nlohmann::json::object());

Model load_model(const Checkpoint &ckpt);
FeatureConfig load_feature_config(const Checkpoint &ckpt);
// Step counter and moments; missing moments leave the state untouched.
void load_optimizer(const Checkpoint &ckpt, OptimizerState &state);

}  // namespace mceend

#endif  // MCEEND_CHECKPOINT_H_
