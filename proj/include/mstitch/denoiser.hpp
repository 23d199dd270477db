#pragma once

#include <json.hpp>
#include <optional>

#include "mstitch/motion.hpp"
#include "mstitch/nn.hpp"
#include "mstitch/schedule.hpp"

namespace mstitch {

struct DenoiserConfig {
  std::size_t layers_per_stack = 6;
  std::size_t model_dim = 512;
  std::size_t ff_dim = 2048;
  std::size_t heads = 8;
  double dropout = 0.1;
  std::size_t block = 75;
  std::size_t feature_dim = 0;  // 3 + 6·joints
  std::size_t timesteps = 300;
  double beta_min = DiffusionSchedule::kDefaultBetaMin;
  double beta_max = DiffusionSchedule::kDefaultBetaMax;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  DiffusionSchedule schedule() const { return make_schedule(timesteps, beta_min, beta_max); }

  nlohmann::ordered_json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Two transformer-encoder stacks. The context stack reads a block-long
/// token sequence in which keyframe slots carry projected poses and every
/// other slot carries a learned mask token. The denoising stack reads the
/// projected noisy motion concatenated (along the sequence) with the context
/// stack's output and predicts the clean motion at the noisy positions.
class DenoiserModel {
 public:
  DenoiserModel(DenoiserConfig config, Rng& rng);

  const DenoiserConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Scalar parameter count implied by a configuration.
  static std::size_t parameter_count(const DenoiserConfig& config);

  /// B × model_dim tokens: projected keyframes at their indices, mask token
  /// elsewhere, plus frame position encoding and timestep embedding on every slot.
  Var build_masked_input(const Context& ctx, std::size_t t) const;
  Var encode_context(const Var& masked, const ForwardMode& mode) const;
  /// Predicted clean motion (B × F) from noisy motion x_t and context memory.
  Var denoise(const Var& x_t, const Var& memory, std::size_t t, const ForwardMode& mode) const;

  /// 1 × model_dim embedding added to every token at step t.
  Var timestep_embedding(std::size_t t) const;
  /// B × model_dim fixed sinusoidal frame encodings.
  const Var& frame_encoding() const { return frame_encoding_; }

 private:
  DenoiserConfig config_;
  nn::ParamStore params_;
  nn::Linear context_in_, motion_in_, time_hidden_, time_out_, motion_out_;
  Var mask_token_;
  std::vector<nn::EncoderLayer> context_stack_, denoise_stack_;
  nn::LayerNorm context_norm_, denoise_norm_;
  Var frame_encoding_;
};

struct SampleOptions {
  ReverseMode mode = ReverseMode::Direct;
  /// Compute the context memory once (at t = T) and reuse it for every
  /// step. Cheaper, but differs from the trained per-step conditioning.
  bool cache_context = false;
};

/// Reverse diffusion from x_T ~ N(0, I) down to the clean prediction at
/// t = 1, then re-orthonormalized rotations. Throws std::runtime_error if a
/// step produces non-finite values.
MotionSequence sample(const Context& ctx, const DenoiserModel& model, const DiffusionSchedule& sched, Rng& rng,
                      std::shared_ptr<const Skeleton> skeleton, double fps, const SampleOptions& options = {});

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'D', 'N', 'Z', '0', '1', '\0'};

/// Optimizer and loop state carried by checkpoints so training can resume.
struct TrainingState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string rng_state;
  double best_val = 0;
  std::size_t bad_epochs = 0;
  std::size_t adam_steps = 0;
  std::vector<Tensor> adam_m, adam_v;  // parameter order
  nlohmann::ordered_json train_config;
};

struct Checkpoint {
  DenoiserConfig config;
  Skeleton skeleton;
  double fps = 15;
  std::optional<TrainingState> state;
};

void save_checkpoint(const std::string& path, const DenoiserModel& model, const Skeleton& skeleton, double fps,
                     const TrainingState* state = nullptr);
/// Restores a model (weights replaced from the file) and its metadata.
std::pair<DenoiserModel, Checkpoint> load_checkpoint(const std::string& path);

}  // namespace mstitch
