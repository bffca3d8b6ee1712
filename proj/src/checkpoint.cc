// mceend/checkpoint.cc

#include "mceend/checkpoint.h"

#include <bit>
#include <fstream>
#include <sstream>

#include "mceend/config.h"
#include "mceend/wav.h"

namespace mceend {

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes little-endian doubles");

namespace {

constexpr const char *kMagic = "mceend-checkpoint v1";

std::string shape_token(const Shape &shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(const std::string &tok) {
  Shape shape;
  if (tok == "scalar") return shape;
  std::stringstream ss(tok);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoull(part));
  return shape;
}

}  // namespace

const Tensor *Checkpoint::find(const std::string &name) const {
  for (const auto &[n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  std::ostringstream header;
  header << kMagic << "\n";
  header << "meta " << ckpt.meta.dump() << "\n";
  std::size_t offset = 0;
  for (const auto &[name, t] : ckpt.tensors) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("checkpoint tensor name with whitespace: '" + name + "'");
    }
    header << "tensor " << name << " f64 " << shape_token(t.shape()) << " " << offset << "\n";
    offset += t.numel() * sizeof(double);
  }
  header << "end\n";

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto &[name, t] : ckpt.tensors) {
      out.write(reinterpret_cast<const char *>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  auto fail = [&](std::size_t line, const std::string &why) {
    return DataError(path.string() + ":" + std::to_string(line) + ": " + why);
  };
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line) || line != kMagic) throw fail(number, "not a checkpoint (bad magic)");
  Checkpoint ckpt;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  bool ended = false;
  while (std::getline(in, line)) {
    ++number;
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      try {
        ckpt.meta = nlohmann::json::parse(line.substr(5));
      } catch (const nlohmann::json::exception &e) {
        throw fail(number, std::string("bad meta: ") + e.what());
      }
      continue;
    }
    std::istringstream ss(line);
    std::string kind, name, dtype, shape, offset;
    if (!(ss >> kind >> name >> dtype >> shape >> offset) || kind != "tensor") {
      throw fail(number, "malformed manifest line");
    }
    if (dtype != "f64") throw fail(number, "unsupported dtype " + dtype);
    try {
      entries.push_back({name, parse_shape(shape), std::stoull(offset)});
    } catch (const std::exception &) {
      throw fail(number, "bad shape or offset");
    }
  }
  if (!ended) throw fail(number, "missing end of manifest");
  const auto blob_start = in.tellg();
  for (const auto &e : entries) {
    Tensor t(e.shape);
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char *>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw DataError(path.string() + ": truncated data for " + e.name);
    ckpt.tensors.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

Checkpoint make_checkpoint(const Model &model, const FeatureConfig &features,
                           const OptimizerState *optimizer, const nlohmann::json &extra) {
  Checkpoint ckpt;
  ckpt.meta["model"] = model_config_to_json(model.config());
  ckpt.meta["features"] = feature_config_to_json(features);
  for (const auto &[name, t] : model.named_parameters()) ckpt.tensors.emplace_back(name, t.detach());
  if (optimizer) {
    ckpt.meta["optimizer"] = {{"step", optimizer->step},
                              {"beta1", optimizer->beta1},
                              {"beta2", optimizer->beta2},
                              {"eps", optimizer->eps}};
    for (const auto &[name, m] : optimizer->m) ckpt.tensors.emplace_back("adam.m." + name, m.detach());
    for (const auto &[name, v] : optimizer->v) ckpt.tensors.emplace_back("adam.v." + name, v.detach());
  }
  for (const auto &[k, v] : extra.items()) ckpt.meta[k] = v;
  return ckpt;
}

Model load_model(const Checkpoint &ckpt) {
  if (!ckpt.meta.contains("model")) throw DataError("checkpoint has no model config");
  ModelConfig config;
  try {
    config = model_config_from_json(ckpt.meta["model"]);
  } catch (const std::invalid_argument &e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  Model model(config, 0);
  std::size_t found = 0;
  for (const auto &[name, p] : model.named_parameters()) {
    const Tensor *src = ckpt.find(name);
    if (!src) throw DataError("checkpoint is missing parameter " + name);
    if (src->shape() != p.shape()) {
      throw DataError("checkpoint parameter " + name + " has shape " + shape_str(src->shape()) +
                      ", model expects " + shape_str(p.shape()));
    }
    Tensor dst = p;
    std::copy(src->data().begin(), src->data().end(), dst.data().begin());
    ++found;
  }
  std::size_t stored = 0;
  for (const auto &[name, t] : ckpt.tensors) stored += name.rfind("adam.", 0) != 0;
  if (stored != found) {
    throw DataError("checkpoint holds " + std::to_string(stored) + " parameters, model has " +
                    std::to_string(found));
  }
  return model;
}

FeatureConfig load_feature_config(const Checkpoint &ckpt) {
  if (!ckpt.meta.contains("features")) return {};
  try {
    return feature_config_from_json(ckpt.meta["features"]);
  } catch (const std::invalid_argument &e) {
    throw DataError(std::string("checkpoint feature config: ") + e.what());
  }
}

void load_optimizer(const Checkpoint &ckpt, OptimizerState &state) {
  if (!ckpt.meta.contains("optimizer")) return;
  const auto &o = ckpt.meta["optimizer"];
  state.step = o.value("step", std::size_t{0});
  state.beta1 = o.value("beta1", state.beta1);
  state.beta2 = o.value("beta2", state.beta2);
  state.eps = o.value("eps", state.eps);
  state.m.clear();
  state.v.clear();
  for (const auto &[name, t] : ckpt.tensors) {
    if (name.rfind("adam.m.", 0) == 0) state.m[name.substr(7)] = t.detach();
    if (name.rfind("adam.v.", 0) == 0) state.v[name.substr(7)] = t.detach();
  }
}

}  // namespace mceend
