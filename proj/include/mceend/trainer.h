// mceend/trainer.h
//
// Adam with a Noam schedule, channel-subset sampling with channel dropout,
// and adaptation with frozen channel-dependent parameters.

#ifndef MCEEND_TRAINER_H_
#define MCEEND_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mceend/features.h"
#include "mceend/model.h"
#include "mceend/simulate.h"

namespace mceend {

enum class TrainMode { kPretrain, kAdapt };
enum class FreezePolicy { kNone, kChannelInvariant };

std::string_view train_mode_name(TrainMode m);
TrainMode parse_train_mode(std::string_view name);
std::string_view freeze_policy_name(FreezePolicy p);
FreezePolicy parse_freeze_policy(std::string_view name);

struct TrainConfig {
  std::size_t chunk_frames = 500;
  std::size_t batch_size = 1;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;         // 0: run all epochs
  std::size_t warmup = 100000;
  double lr_scale = 1.0;             // k of the Noam schedule
  std::size_t channel_subset = 4;    // capped by the channels available
  double channel_dropout = 0.1;
  TrainMode mode = TrainMode::kPretrain;
  double adapt_lr = 1e-5;
  FreezePolicy freeze_policy = FreezePolicy::kNone;
  double clip_norm = 5.0;            // <= 0 disables clipping

  void validate() const;
};

// Non-finite loss or gradient norm.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// k d^-0.5 min(step^-0.5, step warmup^-1.5). Throws for step 0.
double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup, double k);

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Tensor> m;  // first moments by parameter name
  std::map<std::string, Tensor> v;  // second moments
};

// Bias-corrected Adam on the accumulated gradients of `params`. Frozen names
// are skipped entirely. Parameters without a gradient count as zero gradient.
void adam_step(const ParamList &params, OptimizerState &state, double lr,
               const std::set<std::string> &frozen = {});

// Scales the gradients of non-frozen parameters so their global L2 norm is at
// most max_norm. Returns the norm before scaling.
double clip_grad_norm(const ParamList &params, double max_norm,
                      const std::set<std::string> &frozen = {});

// k of C channels without replacement, then with probability p a single one
// of them.
std::vector<std::size_t> sample_training_channels(std::size_t available, std::size_t subset,
                                                  double dropout, std::mt19937_64 &rng);

// Names of channel-dependent parameters frozen under `policy`:
//   spatio_temporal  cross-channel attention and its layer norm
//   co_attention     theta_p, phi_p, psi_p and the P-path layer norms
//   transformer      none
bool is_channel_dependent(Variant variant, std::string_view name);
std::set<std::string> freeze_set(const ParamList &params, Variant variant, FreezePolicy policy);

// One session with cached features and frame labels.
struct TrainExample {
  std::string id;
  std::vector<ChannelFeatures> channels;
  Tensor labels;  // S x T

  std::size_t frames() const { return labels.dim(1); }
};

// Features and labels truncated to the shorter of the two.
TrainExample make_example(const std::string &id, std::span<const Waveform> channels,
                          const GroundTruth &truth, std::size_t speakers,
                          const FeatureConfig &cfg);

struct Chunk {
  std::size_t example = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Non-overlapping windows of chunk_frames; the last partial window is dropped
// unless the whole session is shorter than one window.
std::vector<Chunk> make_chunks(std::span<const TrainExample> data, std::size_t chunk_frames);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // 1-based count of optimizer steps taken
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  Trainer(Model &model, TrainConfig config, std::uint64_t seed);

  const TrainConfig &config() const { return config_; }
  OptimizerState &optimizer() { return opt_; }
  const OptimizerState &optimizer() const { return opt_; }
  const std::set<std::string> &frozen() const { return frozen_; }

  double learning_rate(std::size_t step) const;

  // One optimizer step on the given chunks. Randomness (channel choice,
  // frame shuffling in the attractor encoder) depends only on the seed and
  // the step number, so a resumed run repeats an uninterrupted one.
  StepRecord step(std::span<const TrainExample> data, std::span<const Chunk> batch);

  using StepCallback = std::function<void(const StepRecord &)>;
  using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

  // Runs from the position implied by optimizer().step until config.epochs
  // or config.max_steps. The chunk order of an epoch depends on (seed,
  // epoch), so restoring the optimizer state resumes mid-epoch exactly.
  void train(std::span<const TrainExample> data, const StepCallback &on_step = {},
             const EpochCallback &on_epoch = {});

 private:
  Model &model_;
  TrainConfig config_;
  std::uint64_t seed_;
  OptimizerState opt_;
  std::set<std::string> frozen_;
};

// Posteriors for one recording from the selected channels. The transformer
// runs each channel alone and averages the aligned posteriors.
Tensor infer_posteriors(const Model &model, std::span<const ChannelFeatures> features,
                        std::span<const std::size_t> selected);

}  // namespace mceend

#endif  // MCEEND_TRAINER_H_
