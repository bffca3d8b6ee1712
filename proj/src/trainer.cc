// mceend/trainer.cc

#include "mceend/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "mceend/ops.h"
#include "mceend/pit.h"
#include "mceend/scoring.h"

namespace mceend {

std::string_view train_mode_name(TrainMode m) {
  return m == TrainMode::kAdapt ? "adapt" : "pretrain";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "pretrain") return TrainMode::kPretrain;
  if (name == "adapt") return TrainMode::kAdapt;
  throw std::invalid_argument("unknown train mode '" + std::string(name) + "'");
}

std::string_view freeze_policy_name(FreezePolicy p) {
  return p == FreezePolicy::kChannelInvariant ? "channel_invariant" : "none";
}

FreezePolicy parse_freeze_policy(std::string_view name) {
  if (name == "none") return FreezePolicy::kNone;
  if (name == "channel_invariant") return FreezePolicy::kChannelInvariant;
  throw std::invalid_argument("unknown freeze policy '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("train config: " + m); };
  if (chunk_frames < 1) fail("chunk_frames must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (warmup < 1) fail("warmup must be >= 1");
  if (!(lr_scale > 0)) fail("lr_scale must be positive");
  if (channel_subset < 1) fail("channel_subset must be >= 1");
  if (!(channel_dropout >= 0.0 && channel_dropout <= 1.0)) fail("channel_dropout must be in [0, 1]");
  if (!(adapt_lr >= 0)) fail("adapt_lr must be >= 0");
  if (!std::isfinite(clip_norm)) fail("clip_norm must be finite");
}

double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup, double k) {
  if (step == 0) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (d_model == 0 || warmup == 0) throw std::invalid_argument("noam_lr: d_model and warmup must be positive");
  const auto s = static_cast<double>(step);
  const auto w = static_cast<double>(warmup);
  return k / std::sqrt(static_cast<double>(d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

void adam_step(const ParamList &params, OptimizerState &state, double lr,
               const std::set<std::string> &frozen) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto &[name, p] : params) {
    if (frozen.contains(name)) continue;
    auto [mi, fresh_m] = state.m.try_emplace(name, Tensor::zeros(p.shape()));
    auto [vi, fresh_v] = state.v.try_emplace(name, Tensor::zeros(p.shape()));
    if (mi->second.shape() != p.shape() || vi->second.shape() != p.shape()) {
      throw ShapeError("adam_step: moments of " + name + " have shape " +
                       shape_str(mi->second.shape()) + ", parameter has " + shape_str(p.shape()));
    }
    Tensor param = p;
    auto w = param.data();
    auto m = mi->second.data();
    auto v = vi->second.data();
    const bool has = p.has_grad();
    std::span<const double> g = has ? std::as_const(param).grad() : std::span<const double>{};
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

double clip_grad_norm(const ParamList &params, double max_norm, const std::set<std::string> &frozen) {
  double sq = 0.0;
  for (const auto &[name, p] : params) {
    if (frozen.contains(name) || !p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double f = max_norm / norm;
    for (const auto &[name, p] : params) {
      if (frozen.contains(name) || !p.has_grad()) continue;
      Tensor t = p;
      for (double &g : t.grad()) g *= f;
    }
  }
  return norm;
}

std::vector<std::size_t> sample_training_channels(std::size_t available, std::size_t subset,
                                                  double dropout, std::mt19937_64 &rng) {
  if (subset < 1 || subset > available) {
    throw std::invalid_argument("sample_training_channels: cannot pick " + std::to_string(subset) +
                                " of " + std::to_string(available) + " channels");
  }
  std::vector<std::size_t> all(available);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), subset, rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  if (std::bernoulli_distribution(dropout)(rng)) {
    const std::size_t keep = std::uniform_int_distribution<std::size_t>(0, picked.size() - 1)(rng);
    return {picked[keep]};
  }
  return picked;
}

bool is_channel_dependent(Variant variant, std::string_view name) {
  auto has = [&](std::string_view part) { return name.find(part) != std::string_view::npos; };
  switch (variant) {
    case Variant::kTransformer:
      return false;
    case Variant::kSpatioTemporal:
      return has(".cross_channel.") || has(".ln_channel.");
    case Variant::kCoAttention:
      return has(".theta_p.") || has(".phi_p.") || has(".psi_p.") || has(".ln_p1.") ||
             has(".ln_p2.");
  }
  throw std::invalid_argument("unknown variant");
}

std::set<std::string> freeze_set(const ParamList &params, Variant variant, FreezePolicy policy) {
  std::set<std::string> out;
  if (policy == FreezePolicy::kNone) return out;
  for (const auto &[name, p] : params) {
    if (is_channel_dependent(variant, name)) out.insert(name);
  }
  return out;
}

TrainExample make_example(const std::string &id, std::span<const Waveform> channels,
                          const GroundTruth &truth, std::size_t speakers,
                          const FeatureConfig &cfg) {
  if (truth.speakers.size() > speakers) {
    throw DataError(id + ": " + std::to_string(truth.speakers.size()) +
                    " reference speakers but the model has " + std::to_string(speakers));
  }
  TrainExample ex;
  ex.id = id;
  ex.channels = extract_channel_features(channels, cfg);
  const std::size_t frames = ex.channels[0].spliced.dim(1);
  Tensor ref = truth.labels(frames, cfg.output_frame_seconds());
  ex.labels = Tensor({speakers, frames});
  std::copy(ref.data().begin(), ref.data().end(), ex.labels.data().begin());
  return ex;
}

std::vector<Chunk> make_chunks(std::span<const TrainExample> data, std::size_t chunk_frames) {
  if (chunk_frames == 0) throw std::invalid_argument("make_chunks: chunk_frames must be >= 1");
  std::vector<Chunk> out;
  for (std::size_t e = 0; e < data.size(); ++e) {
    const std::size_t frames = data[e].frames();
    if (frames < chunk_frames) {
      if (frames > 0) out.push_back({e, 0, frames});
      continue;
    }
    for (std::size_t b = 0; b + chunk_frames <= frames; b += chunk_frames) {
      out.push_back({e, b, b + chunk_frames});
    }
  }
  return out;
}

namespace {

Tensor label_columns(const Tensor &labels, std::size_t begin, std::size_t end) {
  Tensor out({labels.dim(0), end - begin});
  for (std::size_t s = 0; s < labels.dim(0); ++s)
    for (std::size_t t = begin; t < end; ++t) out.at(s, t - begin) = labels.at(s, t);
  return out;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt, std::uint64_t n) {
  return session_seed(seed ^ (salt * 0x9e3779b97f4a7c15ULL), static_cast<std::size_t>(n));
}

}  // namespace

Trainer::Trainer(Model &model, TrainConfig config, std::uint64_t seed)
    : model_(model), config_(config), seed_(seed) {
  config_.validate();
  const ParamList params = model_.named_parameters();
  for (const auto &[name, p] : params) {
    Tensor t = p;
    t.set_requires_grad(true);
  }
  frozen_ = freeze_set(params, model_.config().variant, config_.freeze_policy);
}

double Trainer::learning_rate(std::size_t step) const {
  if (config_.mode == TrainMode::kAdapt) return config_.adapt_lr;
  return noam_lr(step, model_.config().model_dim, config_.warmup, config_.lr_scale);
}

StepRecord Trainer::step(std::span<const TrainExample> data, std::span<const Chunk> batch) {
  if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
  const ParamList params = model_.named_parameters();
  for (const auto &[name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
  const std::size_t next = opt_.step + 1;
  std::mt19937_64 rng(mix(seed_, 1, next));
  const Variant variant = model_.config().variant;
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Chunk &c : batch) {
    const TrainExample &ex = data[c.example];
    const std::size_t available = ex.channels.size();
    std::vector<std::size_t> selected;
    if (variant == Variant::kTransformer) {
      selected = sample_training_channels(available, 1, 0.0, rng);
    } else {
      selected = sample_training_channels(available, std::min(config_.channel_subset, available),
                                          config_.channel_dropout, rng);
    }
    ModelInput input = model_input_from_features(ex.channels, selected, variant, c.begin, c.end);
    Tensor labels = label_columns(ex.labels, c.begin, c.end);
    Tape tape;
    Tape::Scope scope(tape);
    double loss = 0.0;
    PitResult r;
    try {
      Tensor y = model_.forward(input, &rng);
      r = pit_loss(y, labels);
      loss = r.loss.item();
    } catch (const std::domain_error &e) {
      throw DivergenceError("step " + std::to_string(next) + " on " + ex.id + ": " + e.what());
    }
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(next) + " on " + ex.id);
    }
    total += loss * weight;
    tape.backward(scale(r.loss, weight));
  }
  const double norm = clip_grad_norm(params, config_.clip_norm, frozen_);
  if (!std::isfinite(norm)) {
    throw DivergenceError("non-finite gradient norm at step " + std::to_string(next));
  }
  const double lr = learning_rate(next);
  adam_step(params, opt_, lr, frozen_);
  StepRecord rec;
  rec.step = opt_.step;
  rec.lr = lr;
  rec.loss = total;
  rec.grad_norm = norm;
  return rec;
}

void Trainer::train(std::span<const TrainExample> data, const StepCallback &on_step,
                    const EpochCallback &on_epoch) {
  if (data.empty()) throw DataError("training set is empty");
  const std::vector<Chunk> chunks = make_chunks(data, config_.chunk_frames);
  if (chunks.empty()) throw DataError("training set has no frames");
  const std::size_t per_epoch = (chunks.size() + config_.batch_size - 1) / config_.batch_size;
  const std::size_t limit = config_.max_steps > 0 ? std::min(config_.max_steps, config_.epochs * per_epoch)
                                                  : config_.epochs * per_epoch;
  while (opt_.step < limit) {
    const std::size_t epoch = opt_.step / per_epoch;
    std::vector<Chunk> order = chunks;
    std::mt19937_64 shuffle_rng(mix(seed_, 2, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = opt_.step % per_epoch; b < per_epoch && opt_.step < limit; ++b) {
      const std::size_t first = b * config_.batch_size;
      const std::size_t last = std::min(order.size(), first + config_.batch_size);
      StepRecord rec = step(data, std::span<const Chunk>(order).subspan(first, last - first));
      rec.epoch = epoch;
      sum += rec.loss;
      ++count;
      if (on_step) on_step(rec);
    }
    if (on_epoch && count > 0 && opt_.step % per_epoch == 0) on_epoch(epoch, sum / static_cast<double>(count));
  }
}

Tensor infer_posteriors(const Model &model, std::span<const ChannelFeatures> features,
                        std::span<const std::size_t> selected) {
  if (selected.empty()) throw DataError("no channels selected");
  const Variant variant = model.config().variant;
  const std::size_t frames = features[selected[0]].spliced.dim(1);
  if (variant == Variant::kTransformer && selected.size() > 1) {
    std::vector<Tensor> per_channel;
    std::vector<std::string> ids;
    for (std::size_t c : selected) {
      const std::size_t one[] = {c};
      per_channel.push_back(model.forward(model_input_from_features(features, one, variant, 0, frames)));
      char id[16];
      std::snprintf(id, sizeof id, "ch%04zu", c);
      ids.emplace_back(id);
    }
    return average_posteriors_across_channels(per_channel, ids);
  }
  return model.forward(model_input_from_features(features, selected, variant, 0, frames));
}

}  // namespace mceend
