#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>

#include "mstitch/denoiser.hpp"
#include "mstitch/losses.hpp"

namespace mstitch {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t timesteps = 300;
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t min_context = 1;
  std::size_t max_context = 0;  // 0 = B/2
  double grad_clip = 1.0;       // 0 disables clipping
  std::size_t patience = 10;    // epochs without validation improvement; 0 disables
  std::uint64_t eval_seed = 20240601;
  LossWeights weights;

  /// Throws ConfigError for values that cannot work with `block`.
  void validate(std::size_t block) const;
  std::size_t context_upper(std::size_t block) const { return max_context ? max_context : block / 2; }

  nlohmann::ordered_json to_json() const;
};

/// Adaptive-moment optimizer over a ParamStore (moments kept in parameter order).
class Adam {
 public:
  Adam(const nn::ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(nn::ParamStore& params);
  std::size_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }

  void export_state(TrainingState& state) const;
  void import_state(const TrainingState& state);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainingExample {
  std::string id;
  MotionSequence motion;
};

struct StepResult {
  LossBreakdown loss;  // batch mean, before the update
  double grad_norm = 0;
  bool clipped = false;
  double t_mean = 0;
};

/// Raised when a batch produces a non-finite loss; lists the batch ids.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), batch_ids(std::move(ids)) {}
  std::vector<std::string> batch_ids;
};

/// One optimizer update. Per example: context length, keyframes, step t,
/// noise and dropout masks are all drawn from `rng`.
StepResult train_step(std::span<const TrainingExample* const> batch, DenoiserModel& model,
                      const DiffusionSchedule& sched, Adam& optimizer, Rng& rng, const TrainConfig& config);

/// Mean loss over `examples` in eval mode with a fixed draw sequence from
/// config.eval_seed. Does not touch parameters.
LossBreakdown evaluate_epoch(std::span<const TrainingExample> examples, const DenoiserModel& model,
                             const DiffusionSchedule& sched, const TrainConfig& config);

struct TrainResult {
  std::size_t epochs_completed = 0;
  std::size_t steps = 0;
  bool early_stopped = false;
  std::optional<LossBreakdown> last_val;
};

/// Epoch loop writing `out_dir`/train_log.jsonl and `out_dir`/latest.ckpt
/// (plus best.ckpt on validation improvement). With `resume`, continues from
/// that state and drops log records written after it.
TrainResult run_training(std::span<const TrainingExample> train, std::span<const TrainingExample> val,
                         DenoiserModel& model, const Skeleton& skeleton, double fps, const TrainConfig& config,
                         const std::string& out_dir, std::optional<TrainingState> resume = std::nullopt,
                         std::ostream* progress = nullptr);

nlohmann::ordered_json loss_json(const LossBreakdown& l);

}  // namespace mstitch
