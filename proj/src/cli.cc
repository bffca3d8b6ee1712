// mceend/cli.cc

#include "mceend/cli.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mceend/checkpoint.h"
#include "mceend/config.h"
#include "mceend/pit.h"
#include "mceend/scoring.h"
#include "mceend/trainer.h"
#include "mceend/wav.h"

namespace mceend {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Command-line values; anything set here wins over the config file.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out, data, checkpoint, ref, hyp;
  std::optional<std::size_t> count, channels, epochs, max_steps, frames;
  std::optional<double> collar, threshold;
  std::optional<std::string> variant;
  std::vector<std::string> sets;
};

json parse_value(const std::string &text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &) {
    return text;
  }
}

RunConfig resolve_config(const Flags &f, json *raw_out = nullptr) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open config " + f.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error &e) {
      throw ConfigError(f.config + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(f.config + ": top level must be an object");
  }
  for (const std::string &s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + s + "'");
    json *node = &j;
    std::stringstream path(s.substr(0, eq));
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      node = &(*node)[parts[i]];
      if (!node->is_object() && !node->is_null()) throw ConfigError("--set: " + parts[i] + " is not a section");
    }
    (*node)[parts.back()] = parse_value(s.substr(eq + 1));
  }
  if (f.seed) j["seed"] = *f.seed;
  if (!f.out.empty()) j["paths"]["out"] = f.out;
  if (!f.data.empty()) j["paths"]["data"] = f.data;
  if (!f.checkpoint.empty()) j["paths"]["checkpoint"] = f.checkpoint;
  if (!f.ref.empty()) j["paths"]["ref"] = f.ref;
  if (!f.hyp.empty()) j["paths"]["hyp"] = f.hyp;
  if (f.count) j["session"]["count"] = *f.count;
  if (f.channels) j["infer"]["channels"] = *f.channels;
  if (f.epochs) j["train"]["epochs"] = *f.epochs;
  if (f.max_steps) j["train"]["max_steps"] = *f.max_steps;
  if (f.frames) j["bench"]["frames"] = *f.frames;
  if (f.collar) j["score"]["collar"] = *f.collar;
  if (f.threshold) j["infer"]["threshold"] = *f.threshold;
  if (f.variant) j["model"]["variant"] = *f.variant;
  if (raw_out) *raw_out = j;
  return parse_run_config(j);
}

std::uint64_t require_seed(const RunConfig &rc, const char *cmd) {
  if (!rc.seed) throw ConfigError(std::string(cmd) + " needs a seed (config \"seed\" or --seed)");
  return *rc.seed;
}

fs::path require_path(const std::string &p, const char *what) {
  if (p.empty()) throw ConfigError(std::string("missing paths.") + what);
  return p;
}

fs::path prepare_out(const RunConfig &rc) {
  const fs::path out = require_path(rc.paths.out, "out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
  return out;
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

void write_effective_config(const fs::path &dir, const RunConfig &rc) {
  write_json(dir / "config.json", to_json(rc));
}

// Speech and overlap time on a 1 ms grid.
std::pair<std::size_t, std::size_t> speech_and_overlap_ms(const GroundTruth &g) {
  const auto n = static_cast<std::size_t>(std::llround(g.duration * 1000.0));
  std::vector<unsigned char> count(n, 0);
  for (const auto &spk : g.speakers) {
    for (const auto &iv : spk) {
      const auto a = static_cast<std::size_t>(std::max(0.0, std::round(iv.onset * 1000.0)));
      const auto b = std::min(n, static_cast<std::size_t>(std::max(0.0, std::round(iv.offset * 1000.0))));
      for (std::size_t i = a; i < b; ++i) ++count[i];
    }
  }
  std::size_t speech = 0, overlap = 0;
  for (unsigned char c : count) {
    speech += c >= 1;
    overlap += c >= 2;
  }
  return {speech, overlap};
}

int cmd_simulate(const Flags &f, std::ostream &out) {
  const RunConfig rc = resolve_config(f);
  const std::uint64_t seed = require_seed(rc, "simulate");
  const fs::path dir = prepare_out(rc);
  json manifest;
  manifest["seed"] = seed;
  manifest["sessions"] = json::array();
  std::size_t speech = 0, overlap = 0;
  for (std::size_t i = 0; i < rc.session_count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "sess%04zu", i);
    const Session s = simulate_session(rc.session, session_seed(seed, i), id);
    write_session(dir, s);
    const auto [sp, ov] = speech_and_overlap_ms(s.truth);
    speech += sp;
    overlap += ov;
    manifest["sessions"].push_back({{"id", s.id},
                                    {"dir", s.id},
                                    {"channels", s.channels.size()},
                                    {"duration", s.truth.duration},
                                    {"overlap_ratio", s.truth.overlap_ratio()}});
  }
  manifest["aggregate_overlap_ratio"] = speech ? static_cast<double>(overlap) / static_cast<double>(speech) : 0.0;
  write_json(dir / "manifest.json", manifest);
  write_effective_config(dir, rc);
  out << "simulated " << rc.session_count << " sessions in " << dir.string() << ", overlap ratio "
      << std::fixed << std::setprecision(3) << manifest["aggregate_overlap_ratio"].get<double>() << "\n";
  return kExitOk;
}

struct LoadedSession {
  std::string id;
  std::vector<Waveform> channels;
  GroundTruth truth;
};

double session_duration(const fs::path &dir, const std::vector<Waveform> &channels) {
  const fs::path meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    try {
      const json meta = json::parse(in);
      if (meta.contains("duration")) return meta["duration"].get<double>();
    } catch (const json::exception &e) {
      throw DataError(meta_path.string() + ": " + e.what());
    }
  }
  return channels.front().duration();
}

std::vector<LoadedSession> load_sessions(const fs::path &data, bool with_reference) {
  std::vector<LoadedSession> out;
  for (const DatasetEntry &e : read_manifest(data)) {
    LoadedSession s;
    s.id = e.id;
    s.channels = read_session_channels(e.dir);
    if (with_reference) {
      const fs::path rttm = e.dir / "ref.rttm";
      if (!fs::exists(rttm)) throw DataError("session " + e.id + " has no ref.rttm");
      s.truth = GroundTruth::from_segments(read_rttm(rttm), session_duration(e.dir, s.channels));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Rejects a config that names a model different from the checkpoint's.
void check_model_matches(const json &raw, const ModelConfig &stored) {
  if (!raw.contains("model")) return;
  const json want = model_config_to_json(stored);
  for (const auto &[k, v] : raw["model"].items()) {
    if (want.contains(k) && want[k] != v) {
      throw ConfigError("model." + k + " is " + v.dump() + " in the config but " + want[k].dump() +
                        " in the checkpoint");
    }
  }
}

int cmd_train(const Flags &f, bool adapt, std::ostream &out) {
  json raw;
  RunConfig rc = resolve_config(f, &raw);
  const std::uint64_t seed = require_seed(rc, adapt ? "adapt" : "train");
  if (adapt) rc.train.mode = TrainMode::kAdapt;
  if (!adapt && rc.train.mode == TrainMode::kAdapt) throw ConfigError("train.mode is adapt; use the adapt command");
  const fs::path data_dir = require_path(rc.paths.data, "data");

  std::optional<Checkpoint> ck;
  if (!rc.paths.checkpoint.empty()) ck = read_checkpoint(rc.paths.checkpoint);
  if (adapt && !ck) throw ConfigError("adapt needs a pretrained checkpoint (paths.checkpoint or --checkpoint)");

  std::optional<Model> model;
  if (ck) {
    model.emplace(load_model(*ck));
    check_model_matches(raw, model->config());
    rc.model = model->config();
    rc.features = load_feature_config(*ck);
  } else {
    model.emplace(rc.model, seed);
  }
  const fs::path dir = prepare_out(rc);
  write_effective_config(dir, rc);

  std::vector<TrainExample> examples;
  for (const LoadedSession &s : load_sessions(data_dir, true)) {
    examples.push_back(make_example(s.id, s.channels, s.truth, rc.model.speakers, rc.features));
  }

  Trainer trainer(*model, rc.train, seed);
  // Resuming continues the optimizer; adaptation starts a fresh one.
  if (ck && !adapt) load_optimizer(*ck, trainer.optimizer());

  std::ofstream log(dir / "train_log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
  const json mode = std::string(train_mode_name(rc.train.mode));
  auto save = [&](const fs::path &path, std::size_t epoch) {
    write_checkpoint(path, make_checkpoint(*model, rc.features, &trainer.optimizer(),
                                           {{"epoch", epoch}, {"seed", seed}, {"mode", mode}}));
  };
  const auto start = std::chrono::steady_clock::now();
  trainer.train(
      examples,
      [&](const StepRecord &r) {
        log << json{{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"loss", r.loss},
                    {"grad_norm", r.grad_norm}}
                   .dump()
            << "\n";
      },
      [&](std::size_t epoch, double mean_loss) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch%04zu.ckpt", epoch + 1);
        save(dir / name, epoch + 1);
        log << json{{"epoch", epoch}, {"mean_loss", mean_loss}}.dump() << "\n";
        log.flush();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out << "epoch " << epoch + 1 << " loss " << std::setprecision(5) << mean_loss << " ("
            << std::setprecision(3) << secs << " s)\n";
      });
  save(dir / "final.ckpt", trainer.optimizer().step);
  out << "wrote " << (dir / "final.ckpt").string() << " after " << trainer.optimizer().step << " steps\n";
  return kExitOk;
}

int cmd_infer(const Flags &f, std::ostream &out) {
  json raw;
  RunConfig rc = resolve_config(f, &raw);
  const Checkpoint ck = read_checkpoint(require_path(rc.paths.checkpoint, "checkpoint"));
  const Model model = load_model(ck);
  check_model_matches(raw, model.config());
  rc.model = model.config();
  rc.features = load_feature_config(ck);
  const fs::path dir = prepare_out(rc);
  write_effective_config(dir, rc);
  const double frame_s = rc.features.output_frame_seconds();
  std::size_t sessions = 0;
  for (const LoadedSession &s : load_sessions(require_path(rc.paths.data, "data"), false)) {
    const std::size_t available = s.channels.size();
    const std::size_t want = rc.infer.channels == 0 ? available : rc.infer.channels;
    if (want > available) {
      throw DataError("session " + s.id + " has " + std::to_string(available) + " channels, " +
                      std::to_string(want) + " requested");
    }
    std::vector<std::size_t> selected(want);
    std::iota(selected.begin(), selected.end(), 0);
    const std::span<const Waveform> used(s.channels.data(), want);
    const std::vector<ChannelFeatures> feats = extract_channel_features(used, rc.features);
    const Tensor y = infer_posteriors(model, feats, selected);
    write_posteriors(dir / (s.id + ".post"), y);
    write_rttm(dir / (s.id + ".rttm"),
               posteriors_to_segments(y, s.id, rc.infer.threshold, rc.infer.median_window, frame_s));
    ++sessions;
  }
  out << "inferred " << sessions << " sessions with " << variant_name(rc.model.variant) << " into "
      << dir.string() << "\n";
  return kExitOk;
}

std::map<std::string, std::vector<Segment>> collect_rttm(const fs::path &dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".rttm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<Segment>> by_session;
  for (const fs::path &p : files) {
    for (Segment &s : read_rttm(p)) by_session[s.session].push_back(std::move(s));
  }
  return by_session;
}

// Sessions of a reference directory, including ones with an empty RTTM.
std::vector<std::string> reference_ids(const fs::path &dir, const std::map<std::string, std::vector<Segment>> &ref) {
  std::vector<std::string> ids;
  for (const auto &[id, segs] : ref) ids.push_back(id);
  if (fs::exists(dir / "manifest.json")) {
    for (const DatasetEntry &e : read_manifest(dir)) {
      if (!ref.contains(e.id)) ids.push_back(e.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

int cmd_score(const Flags &f, std::ostream &out) {
  const RunConfig rc = resolve_config(f);
  const fs::path ref_dir = require_path(rc.paths.ref, "ref");
  const fs::path hyp_dir = require_path(rc.paths.hyp, "hyp");
  const auto ref = collect_rttm(ref_dir);
  const auto hyp = collect_rttm(hyp_dir);
  const std::vector<std::string> ids = reference_ids(ref_dir, ref);

  std::vector<std::string> missing, extra;
  for (const auto &id : ids) {
    if (!hyp.contains(id) && !(fs::exists(hyp_dir / (id + ".rttm")))) missing.push_back(id);
  }
  for (const auto &[id, segs] : hyp) {
    if (!std::binary_search(ids.begin(), ids.end(), id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg;
    for (const auto &id : missing) msg += " missing hypothesis for " + id + ";";
    for (const auto &id : extra) msg += " hypothesis session " + id + " has no reference;";
    msg.pop_back();
    throw DataError("unmatched sessions:" + msg);
  }

  json report;
  report["collar"] = rc.score.collar;
  report["sessions"] = json::array();
  DerBreakdown total;
  auto row = [](const std::string &id, const DerBreakdown &b) {
    return json{{"session", id},
                {"der", b.der()},
                {"missed", b.missed_seconds()},
                {"false_alarm", b.false_alarm_seconds()},
                {"confusion", b.confusion_seconds()},
                {"scored", b.scored_seconds()}};
  };
  static const std::vector<Segment> kNone;
  for (const auto &id : ids) {
    const auto r = ref.find(id);
    const auto h = hyp.find(id);
    const DerBreakdown b =
        der(r == ref.end() ? kNone : r->second, h == hyp.end() ? kNone : h->second, rc.score.collar);
    total += b;
    report["sessions"].push_back(row(id, b));
  }
  report["aggregate"] = row("ALL", total);

  out << std::left << std::setw(16) << "session" << std::right << std::setw(9) << "DER%" << std::setw(10)
      << "miss(s)" << std::setw(10) << "fa(s)" << std::setw(10) << "conf(s)" << std::setw(11) << "scored(s)"
      << "\n";
  out << std::fixed;
  for (const json &r : report["sessions"]) {
    out << std::left << std::setw(16) << r["session"].get<std::string>() << std::right << std::setprecision(2)
        << std::setw(9) << 100.0 * r["der"].get<double>() << std::setw(10) << r["missed"].get<double>()
        << std::setw(10) << r["false_alarm"].get<double>() << std::setw(10) << r["confusion"].get<double>()
        << std::setw(11) << r["scored"].get<double>() << "\n";
  }
  const json &a = report["aggregate"];
  out << std::left << std::setw(16) << "ALL" << std::right << std::setprecision(2) << std::setw(9)
      << 100.0 * a["der"].get<double>() << std::setw(10) << a["missed"].get<double>() << std::setw(10)
      << a["false_alarm"].get<double>() << std::setw(10) << a["confusion"].get<double>() << std::setw(11)
      << a["scored"].get<double>() << "\n";
  out.unsetf(std::ios::fixed);

  if (!rc.paths.out.empty()) {
    const fs::path dir = prepare_out(rc);
    write_json(dir / "score.json", report);
    write_effective_config(dir, rc);
  }
  return kExitOk;
}

int cmd_bench(const Flags &f, std::ostream &out) {
  const RunConfig rc = resolve_config(f);
  const std::uint64_t seed = rc.seed.value_or(0);
  std::ostringstream csv;
  csv << "variant,channels,frames,model_dim,channel_dim,analytic_total,analytic_per_block,"
         "analytic_channel_state_per_block,measured_forward_values,measured_peak_values\n";
  for (const std::string &name : rc.bench.variants) {
    ModelConfig mc = rc.model;
    mc.variant = parse_variant(name);
    for (std::size_t c : rc.bench.channels) {
      if (c == 0) throw ConfigError("bench.channels entries must be >= 1");
      const ActivationReport a = count_activations(mc, rc.bench.frames, c);
      csv << name << "," << c << "," << rc.bench.frames << "," << mc.model_dim << "," << mc.channel_dim << ","
          << a.total << "," << a.per_block << "," << a.channel_state_per_block << ",";
      if (rc.bench.measure) {
        const MeasuredValues m = measure_values(mc, rc.bench.frames, c, seed);
        csv << m.forward << "," << m.peak;
      } else {
        csv << ",";
      }
      csv << "\n";
    }
  }
  out << csv.str();
  if (!rc.paths.out.empty()) {
    const fs::path dir = prepare_out(rc);
    std::ofstream(dir / "bench.csv") << csv.str();
    write_effective_config(dir, rc);
  }
  return kExitOk;
}

void add_common(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.sets, "override a config key, e.g. --set train.warmup=2000");
}

}  // namespace

// Tensor values allocated by one forward/backward pass, beyond the
// parameters that exist before it.
MeasuredValues measure_values(const ModelConfig &mc, std::size_t frames, std::size_t channels,
                              std::uint64_t seed) {
  const Model model(mc, seed);
  for (const auto &[n, p] : model.named_parameters()) Tensor(p).set_requires_grad(true);
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  ModelInput input;
  const std::size_t c = mc.variant == Variant::kTransformer ? 1 : channels;
  if (mc.variant == Variant::kSpatioTemporal) {
    input.multi = Tensor::randn({c, mc.input_dim, frames}, rng);
  } else {
    input.single = Tensor::randn({mc.input_dim, frames}, rng);
    if (mc.variant == Variant::kCoAttention) input.multi = Tensor::randn({c, mc.channel_input_dim, frames}, rng);
  }
  Tensor labels({mc.speakers, frames});
  std::bernoulli_distribution coin(0.3);
  for (double &v : labels.data()) v = coin(rng) ? 1.0 : 0.0;

  MeasuredValues m;
  const std::size_t before = memory_stats().current_bytes;
  reset_peak_memory();
  {
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = model.forward(input);
    const Tensor loss = pit_loss(y, labels).loss;
    m.forward = (memory_stats().current_bytes - before) / sizeof(double);
    tape.backward(loss);
  }
  m.peak = (memory_stats().peak_bytes - before) / sizeof(double);
  return m;
}

void write_posteriors(const fs::path &path, const Tensor &posteriors) {
  static_assert(std::endian::native == std::endian::little, "posterior dump assumes little-endian");
  if (posteriors.shape().size() != 2) throw ShapeError("write_posteriors: expected S x T, got " + shape_str(posteriors.shape()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  const auto s = static_cast<std::uint32_t>(posteriors.dim(0));
  const auto t = static_cast<std::uint32_t>(posteriors.dim(1));
  os.write(reinterpret_cast<const char *>(&s), sizeof s);
  os.write(reinterpret_cast<const char *>(&t), sizeof t);
  std::vector<float> values(posteriors.data().begin(), posteriors.data().end());
  os.write(reinterpret_cast<const char *>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!os) throw DataError("write failed for " + path.string());
}

Tensor read_posteriors(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint32_t s = 0, t = 0;
  in.read(reinterpret_cast<char *>(&s), sizeof s);
  in.read(reinterpret_cast<char *>(&t), sizeof t);
  if (!in) throw DataError(path.string() + ": truncated header");
  std::vector<float> values(static_cast<std::size_t>(s) * t);
  in.read(reinterpret_cast<char *>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw DataError(path.string() + ": truncated data");
  Tensor out({s, t});
  std::copy(values.begin(), values.end(), out.data().begin());
  return out;
}

std::vector<DatasetEntry> read_manifest(const fs::path &dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<DatasetEntry> out;
  try {
    const json m = json::parse(in);
    for (const json &s : m.at("sessions")) {
      DatasetEntry e;
      e.id = s.at("id").get<std::string>();
      e.dir = dir / s.value("dir", e.id);
      out.push_back(std::move(e));
    }
  } catch (const json::exception &e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (out.empty()) throw DataError(path.string() + " lists no sessions");
  return out;
}

std::vector<Waveform> read_session_channels(const fs::path &dir) {
  std::vector<Waveform> out;
  for (std::size_t c = 0;; ++c) {
    char name[16];
    std::snprintf(name, sizeof name, "ch%02zu.wav", c);
    if (!fs::exists(dir / name)) break;
    out.push_back(read_wav(dir / name));
  }
  if (out.empty()) throw DataError("no channel WAVs (ch00.wav ...) in " + dir.string());
  return out;
}

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Multi-channel end-to-end neural diarization"};
  app.require_subcommand(1);
  Flags f;

  auto *sim = app.add_subcommand("simulate", "write a simulated multi-channel dataset");
  add_common(sim, f);
  sim->add_option("--count", f.count, "number of sessions");

  auto *train = app.add_subcommand("train", "train a model, optionally resuming from a checkpoint");
  auto *adapt = app.add_subcommand("adapt", "adapt a pretrained checkpoint with a fixed learning rate");
  for (auto *cmd : {train, adapt}) {
    add_common(cmd, f);
    cmd->add_option("--data", f.data, "dataset directory");
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint to resume or adapt");
    cmd->add_option("--epochs", f.epochs, "epochs");
    cmd->add_option("--max-steps", f.max_steps, "stop after this many optimizer steps");
  }
  train->add_option("--variant", f.variant, "transformer | spatio_temporal | co_attention");

  auto *infer = app.add_subcommand("infer", "write RTTM and posteriors for a dataset");
  add_common(infer, f);
  infer->add_option("--data", f.data, "dataset directory");
  infer->add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  infer->add_option("--channels", f.channels, "use the first n channels (0 = all)");
  infer->add_option("--threshold", f.threshold, "posterior threshold");

  auto *score = app.add_subcommand("score", "DER of hypothesis RTTMs against references");
  add_common(score, f);
  score->add_option("--ref", f.ref, "reference RTTM directory");
  score->add_option("--hyp", f.hyp, "hypothesis RTTM directory");
  score->add_option("--collar", f.collar, "collar in seconds");

  auto *bench = app.add_subcommand("bench", "activation counts and measured peak memory per channel count");
  add_common(bench, f);
  bench->add_option("--frames", f.frames, "frames per chunk");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(f, out);
    if (train->parsed()) return cmd_train(f, false, out);
    if (adapt->parsed()) return cmd_train(f, true, out);
    if (infer->parsed()) return cmd_infer(f, out);
    if (score->parsed()) return cmd_score(f, out);
    if (bench->parsed()) return cmd_bench(f, out);
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError &e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError &e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace mceend
