// mceend/config.cc

#include "mceend/config.h"

#include <fstream>
#include <set>

namespace mceend {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects unknown keys.
class Section {
 public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception &) {
      throw ConfigError(where() + "." + key + ": wrong type");
    }
  }

  template <typename T>
  void get_unsigned(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json &v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(where() + "." + key + ": expected a non-negative integer");
    }
    out = v.get<T>();
  }

  template <typename Fn>
  void get_with(const char *key, Fn fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      fn(j_.at(key));
    } catch (const json::exception &) {
      throw ConfigError(where() + "." + key + ": wrong type");
    } catch (const ConfigError &) {
      throw;
    } catch (const std::invalid_argument &e) {
      throw ConfigError(where() + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto &[k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown key " + where() + "." + k);
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void checked(const std::string &what, Fn fn) {
  try {
    fn();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument &e) {
    throw ConfigError(what + ": " + e.what());
  }
}

ModelConfig read_model(const json &j, const std::string &path) {
  ModelConfig c;
  Section s(j, path);
  s.get_with("variant", [&](const json &v) { c.variant = parse_variant(v.get<std::string>()); });
  s.get_unsigned("input_dim", c.input_dim);
  s.get_unsigned("channel_input_dim", c.channel_input_dim);
  s.get_unsigned("model_dim", c.model_dim);
  s.get_unsigned("channel_dim", c.channel_dim);
  s.get_unsigned("heads", c.heads);
  s.get_unsigned("ffn_dim", c.ffn_dim);
  s.get_unsigned("channel_ffn_dim", c.channel_ffn_dim);
  s.get_unsigned("blocks", c.blocks);
  s.get_unsigned("speakers", c.speakers);
  s.get("ln_eps", c.ln_eps);
  s.finish();
  checked(path, [&] { c.validate(); });
  return c;
}

FeatureConfig read_features(const json &j, const std::string &path) {
  FeatureConfig c;
  Section s(j, path);
  s.get_unsigned("n_mels", c.n_mels);
  s.get("frame_length_ms", c.frame_length_ms);
  s.get("frame_shift_ms", c.frame_shift_ms);
  s.get_unsigned("context", c.context);
  s.get_unsigned("subsample", c.subsample);
  s.get("log_floor", c.log_floor);
  s.finish();
  checked(path, [&] { c.validate(); });
  return c;
}

TrainConfig read_train(const json &j) {
  TrainConfig c;
  Section s(j, "train");
  s.get_unsigned("chunk_frames", c.chunk_frames);
  s.get_unsigned("batch_size", c.batch_size);
  s.get_unsigned("epochs", c.epochs);
  s.get_unsigned("max_steps", c.max_steps);
  s.get_unsigned("warmup", c.warmup);
  s.get("lr_scale", c.lr_scale);
  s.get_unsigned("channel_subset", c.channel_subset);
  s.get("channel_dropout", c.channel_dropout);
  s.get_with("mode", [&](const json &v) { c.mode = parse_train_mode(v.get<std::string>()); });
  s.get("adapt_lr", c.adapt_lr);
  s.get_with("freeze_policy", [&](const json &v) { c.freeze_policy = parse_freeze_policy(v.get<std::string>()); });
  s.get("clip_norm", c.clip_norm);
  s.finish();
  checked("train", [&] { c.validate(); });
  return c;
}

void read_session(const json &j, RunConfig &rc) {
  SessionSpec &c = rc.session;
  Section s(j, "session");
  s.get_unsigned("count", rc.session_count);
  s.get("duration", c.duration);
  s.get_unsigned("speakers", c.speakers);
  s.get_unsigned("channels", c.channels);
  s.get("sample_rate", c.sample_rate);
  s.get("utterance_min", c.utterance_min);
  s.get("utterance_max", c.utterance_max);
  s.get("pause_mean", c.pause_mean);
  s.get("snr_db", c.snr_db);
  s.get("hybrid", c.hybrid);
  s.get("identical_voice", c.identical_voice);
  s.get("gain_spread_db", c.gain_spread_db);
  s.get("amplitude", c.amplitude);
  s.get("drift_ppm", c.drift_ppm);
  s.get("mic_radius", c.mic_radius);
  s.get("mic_height", c.mic_height);
  s.get("speaker_radius", c.speaker_radius);
  s.get("speaker_height", c.speaker_height);
  s.get("min_speaker_angle_deg", c.min_speaker_angle_deg);
  s.finish();
  checked("session", [&] { c.validate(); });
}

}  // namespace

json model_config_to_json(const ModelConfig &c) {
  return {{"variant", std::string(variant_name(c.variant))},
          {"input_dim", c.input_dim},
          {"channel_input_dim", c.channel_input_dim},
          {"model_dim", c.model_dim},
          {"channel_dim", c.channel_dim},
          {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},
          {"channel_ffn_dim", c.channel_ffn_dim},
          {"blocks", c.blocks},
          {"speakers", c.speakers},
          {"ln_eps", c.ln_eps}};
}

ModelConfig model_config_from_json(const json &j) { return read_model(j, "model"); }

json feature_config_to_json(const FeatureConfig &c) {
  return {{"n_mels", c.n_mels},
          {"frame_length_ms", c.frame_length_ms},
          {"frame_shift_ms", c.frame_shift_ms},
          {"context", c.context},
          {"subsample", c.subsample},
          {"log_floor", c.log_floor}};
}

FeatureConfig feature_config_from_json(const json &j) { return read_features(j, "features"); }

RunConfig parse_run_config(const json &j) {
  RunConfig rc;
  Section root(j, "");
  root.get_with("seed", [&](const json &v) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) throw std::invalid_argument("expected a non-negative integer");
    rc.seed = v.get<std::uint64_t>();
  });
  root.get_with("model", [&](const json &v) { rc.model = read_model(v, "model"); });
  root.get_with("features", [&](const json &v) { rc.features = read_features(v, "features"); });
  root.get_with("train", [&](const json &v) { rc.train = read_train(v); });
  root.get_with("session", [&](const json &v) { read_session(v, rc); });
  root.get_with("paths", [&](const json &v) {
    Section s(v, "paths");
    s.get("data", rc.paths.data);
    s.get("out", rc.paths.out);
    s.get("checkpoint", rc.paths.checkpoint);
    s.get("ref", rc.paths.ref);
    s.get("hyp", rc.paths.hyp);
    s.finish();
  });
  root.get_with("infer", [&](const json &v) {
    Section s(v, "infer");
    s.get_unsigned("channels", rc.infer.channels);
    s.get("threshold", rc.infer.threshold);
    s.get_unsigned("median_window", rc.infer.median_window);
    s.finish();
  });
  root.get_with("score", [&](const json &v) {
    Section s(v, "score");
    s.get("collar", rc.score.collar);
    s.finish();
  });
  root.get_with("bench", [&](const json &v) {
    Section s(v, "bench");
    s.get_unsigned("frames", rc.bench.frames);
    s.get("channels", rc.bench.channels);
    s.get("variants", rc.bench.variants);
    s.get("measure", rc.bench.measure);
    s.finish();
  });
  root.finish();

  if (rc.model.input_dim != rc.features.spliced_dim()) {
    throw ConfigError("model.input_dim " + std::to_string(rc.model.input_dim) +
                      " does not match the spliced feature size " +
                      std::to_string(rc.features.spliced_dim()));
  }
  if (rc.model.variant == Variant::kCoAttention && rc.model.channel_input_dim != rc.features.n_mels) {
    throw ConfigError("model.channel_input_dim must equal features.n_mels");
  }
  if (!(rc.infer.threshold > 0.0 && rc.infer.threshold < 1.0)) {
    throw ConfigError("infer.threshold must be in (0, 1)");
  }
  if (rc.infer.median_window % 2 == 0) throw ConfigError("infer.median_window must be odd");
  if (rc.score.collar < 0.0) throw ConfigError("score.collar must be >= 0");
  for (const auto &v : rc.bench.variants) {
    checked("bench.variants", [&] { parse_variant(v); });
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig &c) {
  json j;
  if (c.seed) j["seed"] = *c.seed;
  j["model"] = model_config_to_json(c.model);
  j["features"] = feature_config_to_json(c.features);
  const TrainConfig &t = c.train;
  j["train"] = {{"chunk_frames", t.chunk_frames},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"max_steps", t.max_steps},
                {"warmup", t.warmup},
                {"lr_scale", t.lr_scale},
                {"channel_subset", t.channel_subset},
                {"channel_dropout", t.channel_dropout},
                {"mode", std::string(train_mode_name(t.mode))},
                {"adapt_lr", t.adapt_lr},
                {"freeze_policy", std::string(freeze_policy_name(t.freeze_policy))},
                {"clip_norm", t.clip_norm}};
  const SessionSpec &s = c.session;
  j["session"] = {{"count", c.session_count},
                  {"duration", s.duration},
                  {"speakers", s.speakers},
                  {"channels", s.channels},
                  {"sample_rate", s.sample_rate},
                  {"utterance_min", s.utterance_min},
                  {"utterance_max", s.utterance_max},
                  {"pause_mean", s.pause_mean},
                  {"snr_db", s.snr_db},
                  {"hybrid", s.hybrid},
                  {"identical_voice", s.identical_voice},
                  {"gain_spread_db", s.gain_spread_db},
                  {"amplitude", s.amplitude},
                  {"drift_ppm", s.drift_ppm},
                  {"mic_radius", s.mic_radius},
                  {"mic_height", s.mic_height},
                  {"speaker_radius", s.speaker_radius},
                  {"speaker_height", s.speaker_height},
                  {"min_speaker_angle_deg", s.min_speaker_angle_deg}};
  j["paths"] = {{"data", c.paths.data},
                {"out", c.paths.out},
                {"checkpoint", c.paths.checkpoint},
                {"ref", c.paths.ref},
                {"hyp", c.paths.hyp}};
  j["infer"] = {{"channels", c.infer.channels},
                {"threshold", c.infer.threshold},
                {"median_window", c.infer.median_window}};
  j["score"] = {{"collar", c.score.collar}};
  j["bench"] = {{"frames", c.bench.frames},
                {"channels", c.bench.channels},
                {"variants", c.bench.variants},
                {"measure", c.bench.measure}};
  return j;
}

}  // namespace mceend
