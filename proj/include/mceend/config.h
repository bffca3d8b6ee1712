// mceend/config.h
//
// JSON run configuration. Every section is optional; keys that are present
// must be known. to_json writes the effective configuration with all
// defaults filled in.

#ifndef MCEEND_CONFIG_H_
#define MCEEND_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mceend/encoders.h"
#include "mceend/features.h"
#include "mceend/simulate.h"
#include "mceend/trainer.h"

namespace mceend {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PathsConfig {
  std::string data;        // dataset directory (simulate output, train/adapt/infer input)
  std::string out;         // artifact directory
  std::string checkpoint;  // model to load
  std::string ref;         // reference RTTM directory for score
  std::string hyp;         // hypothesis RTTM directory for score
};

struct InferConfig {
  std::size_t channels = 0;  // first n channels; 0 = all
  double threshold = 0.5;
  std::size_t median_window = 11;
};

struct ScoreConfig {
  double collar = 0.25;
};

struct BenchConfig {
  std::size_t frames = 500;
  std::vector<std::size_t> channels{1, 2, 4, 6, 10};
  std::vector<std::string> variants{"transformer", "spatio_temporal", "co_attention"};
  bool measure = true;  // run one forward/backward per row
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  ModelConfig model;
  FeatureConfig features;
  TrainConfig train;
  SessionSpec session;
  std::size_t session_count = 2;
  PathsConfig paths;
  InferConfig infer;
  ScoreConfig score;
  BenchConfig bench;
};

// Throws ConfigError naming the offending key.
RunConfig parse_run_config(const nlohmann::json &j);
RunConfig load_run_config(const std::filesystem::path &path);
nlohmann::json to_json(const RunConfig &c);

nlohmann::json model_config_to_json(const ModelConfig &c);
ModelConfig model_config_from_json(const nlohmann::json &j);
nlohmann::json feature_config_to_json(const FeatureConfig &c);
FeatureConfig feature_config_from_json(const nlohmann::json &j);

}  // namespace mceend

#endif  // MCEEND_CONFIG_H_
