#include "mstitch/denoiser.hpp"

#include <cmath>

#include "mstitch/param_io.hpp"

namespace mstitch {

void DenoiserConfig::validate() const {
  if (layers_per_stack < 1) throw ConfigError("denoiser needs at least one layer per stack");
  if (model_dim < 2 || model_dim % 2 != 0) throw ConfigError("model_dim must be even and positive");
  if (heads < 1 || model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
  if (ff_dim < 1) throw ConfigError("ff_dim must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
  if (block < 2) throw ConfigError("block must be at least two frames");
  if (feature_dim < 9 || (feature_dim - 3) % kRotationWidth != 0) {
    throw ConfigError("feature_dim must be 3 + 6·joints, got " + std::to_string(feature_dim));
  }
  (void)schedule();
}

nlohmann::ordered_json DenoiserConfig::to_json() const {
  return {{"layers_per_stack", layers_per_stack},
          {"model_dim", model_dim},
          {"ff_dim", ff_dim},
          {"heads", heads},
          {"dropout", dropout},
          {"block", block},
          {"feature_dim", feature_dim},
          {"timesteps", timesteps},
          {"beta_min", beta_min},
          {"beta_max", beta_max}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.layers_per_stack = j.at("layers_per_stack");
  c.model_dim = j.at("model_dim");
  c.ff_dim = j.at("ff_dim");
  c.heads = j.at("heads");
  c.dropout = j.at("dropout");
  c.block = j.at("block");
  c.feature_dim = j.at("feature_dim");
  c.timesteps = j.at("timesteps");
  c.beta_min = j.at("beta_min");
  c.beta_max = j.at("beta_max");
  return c;
}

std::size_t DenoiserModel::parameter_count(const DenoiserConfig& c) {
  using nn::EncoderLayer;
  using nn::LayerNorm;
  using nn::Linear;
  const std::size_t d = c.model_dim, f = c.feature_dim;
  return 2 * Linear::param_count(f, d)             // context and motion input projections
         + 2 * Linear::param_count(d, d)           // timestep MLP
         + d                                       // mask token
         + 2 * c.layers_per_stack * EncoderLayer::param_count(d, c.ff_dim) +
         2 * LayerNorm::param_count(d)             // final norms
         + Linear::param_count(d, f);              // output head
}

DenoiserModel::DenoiserModel(DenoiserConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.model_dim, f = config_.feature_dim;
  const auto out_gain = static_cast<Real>(1.0 / std::sqrt(2.0 * static_cast<double>(config_.layers_per_stack)));
  const auto drop = static_cast<Real>(config_.dropout);

  context_in_ = nn::Linear::create(params_, "context_in", f, d, rng);
  motion_in_ = nn::Linear::create(params_, "motion_in", f, d, rng);
  time_hidden_ = nn::Linear::create(params_, "time.hidden", d, d, rng);
  time_out_ = nn::Linear::create(params_, "time.out", d, d, rng);
  Tensor mask({1, d});
  for (auto& v : mask.values()) v = static_cast<Real>(0.02 * rng.normal());
  mask_token_ = params_.add("mask_token", std::move(mask));
  for (std::size_t i = 0; i < config_.layers_per_stack; ++i) {
    context_stack_.push_back(nn::EncoderLayer::create(params_, "context." + std::to_string(i), d, config_.ff_dim,
                                                      config_.heads, drop, out_gain, rng));
  }
  for (std::size_t i = 0; i < config_.layers_per_stack; ++i) {
    denoise_stack_.push_back(nn::EncoderLayer::create(params_, "denoise." + std::to_string(i), d, config_.ff_dim,
                                                      config_.heads, drop, out_gain, rng));
  }
  context_norm_ = nn::LayerNorm::create(params_, "context.norm", d);
  denoise_norm_ = nn::LayerNorm::create(params_, "denoise.norm", d);
  motion_out_ = nn::Linear::create(params_, "motion_out", d, f, rng);

  if (params_.scalar_count() != parameter_count(config_)) {
    throw std::logic_error("denoiser parameter count " + std::to_string(params_.scalar_count()) +
                           " disagrees with the formula " + std::to_string(parameter_count(config_)));
  }

  Tensor frames({config_.block, d});
  for (std::size_t b = 0; b < config_.block; ++b) {
    const auto row = nn::sinusoidal(static_cast<double>(b), d);
    std::copy(row.begin(), row.end(), frames.data() + b * d);
  }
  frame_encoding_ = constant(std::move(frames));
}

Var DenoiserModel::timestep_embedding(std::size_t t) const {
  const auto raw = nn::sinusoidal(static_cast<double>(t), config_.model_dim);
  const Var base = constant(Tensor({1, config_.model_dim}, std::vector<Real>(raw.begin(), raw.end())));
  return time_out_(silu(time_hidden_(base)));
}

Var DenoiserModel::build_masked_input(const Context& ctx, std::size_t t) const {
  const std::size_t f = config_.feature_dim;
  if (ctx.size() == 0) throw ContractError("context needs at least one keyframe");
  Tensor poses({ctx.size(), f});
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (ctx.indices[i] >= config_.block) {
      throw DimensionError("context index " + std::to_string(ctx.indices[i]) + " outside block of " +
                           std::to_string(config_.block));
    }
    if (ctx.poses[i].size() != f) throw DimensionError("context pose width does not match feature_dim");
    for (std::size_t c = 0; c < f; ++c) poses[i * f + c] = static_cast<Real>(ctx.poses[i][c]);
  }
  const Var projected = context_in_(constant(std::move(poses)));
  const Var slots = scatter_rows(projected, ctx.indices, mask_token_, config_.block);
  return add_row(add(slots, frame_encoding_), timestep_embedding(t));
}

Var DenoiserModel::encode_context(const Var& masked, const ForwardMode& mode) const {
  if (masked.rows() != config_.block || masked.cols() != config_.model_dim) {
    throw DimensionError("encode_context: expected " + std::to_string(config_.block) + "×" +
                         std::to_string(config_.model_dim) + " tokens");
  }
  Var h = masked;
  for (const auto& layer : context_stack_) h = layer(h, mode);
  return context_norm_(h);
}

Var DenoiserModel::denoise(const Var& x_t, const Var& memory, std::size_t t, const ForwardMode& mode) const {
  const std::size_t b = config_.block;
  if (x_t.rows() != b || x_t.cols() != config_.feature_dim) {
    throw DimensionError("denoise: x_t must be " + std::to_string(b) + "×" + std::to_string(config_.feature_dim) +
                         ", got " + shape_string(x_t.shape()));
  }
  if (memory.rows() != b || memory.cols() != config_.model_dim) throw DimensionError("denoise: memory shape");
  const Var tokens = add_row(add(motion_in_(x_t), frame_encoding_), timestep_embedding(t));
  Var h = concat_rows({tokens, memory});
  for (const auto& layer : denoise_stack_) h = layer(h, mode);
  return motion_out_(denoise_norm_(slice_rows(h, 0, b)));
}

MotionSequence sample(const Context& ctx, const DenoiserModel& model, const DiffusionSchedule& sched, Rng& rng,
                      std::shared_ptr<const Skeleton> skeleton, double fps, const SampleOptions& options) {
  const DenoiserConfig& cfg = model.config();
  if (ctx.size() < 1 || ctx.size() > max_context_length(cfg.block)) {
    throw ContractError("context length " + std::to_string(ctx.size()) + " outside [1, " +
                        std::to_string(max_context_length(cfg.block)) + "] (at most B/2 keyframes)");
  }
  NoGradGuard no_grad;
  const ForwardMode eval;
  Tensor x = standard_normal({cfg.block, cfg.feature_dim}, rng);
  Var cached;
  if (options.cache_context) cached = model.encode_context(model.build_masked_input(ctx, sched.steps()), eval);
  Tensor x0_hat;
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Var memory = options.cache_context ? cached : model.encode_context(model.build_masked_input(ctx, t), eval);
    x0_hat = model.denoise(constant(x), memory, t, eval).value();
    for (Real v : x0_hat.values()) {
      if (!std::isfinite(v)) throw std::runtime_error("sampling produced non-finite values at step " + std::to_string(t));
    }
    if (t == 1) break;
    x = reverse_step(x0_hat, t, sched, rng, options.mode, &x);
  }
  MotionSequence out = from_tensor(x0_hat, std::move(skeleton), fps);
  orthonormalize(out);
  return out;
}

void save_checkpoint(const std::string& path, const DenoiserModel& model, const Skeleton& skeleton, double fps,
                     const TrainingState* state) {
  ParamFile file;
  file.header["format"] = "mstitch-denoiser";
  file.header["config"] = model.config().to_json();
  file.header["schedule"] = {{"timesteps", model.config().timesteps},
                             {"beta_min", model.config().beta_min},
                             {"beta_max", model.config().beta_max}};
  file.header["fps"] = fps;
  file.header["skeleton"] = skeleton_to_json(skeleton);
  append_params(file, model.params());
  if (state) {
    const auto& entries = model.params().entries();
    if (state->adam_m.size() != entries.size() || state->adam_v.size() != entries.size()) {
      throw ContractError("optimizer state does not match the parameter list");
    }
    file.header["training"] = {{"epoch", state->epoch},         {"step", state->step},
                               {"rng", state->rng_state},       {"best_val", state->best_val},
                               {"bad_epochs", state->bad_epochs}, {"adam_steps", state->adam_steps},
                               {"train_config", state->train_config}};
    for (std::size_t i = 0; i < entries.size(); ++i) {
      file.blobs.emplace_back("adam.m/" + entries[i].first, state->adam_m[i]);
      file.blobs.emplace_back("adam.v/" + entries[i].first, state->adam_v[i]);
    }
  }
  write_param_file(path, kCheckpointMagic, std::move(file));
}

std::pair<DenoiserModel, Checkpoint> load_checkpoint(const std::string& path) {
  const ParamFile file = read_param_file(path, kCheckpointMagic);
  Checkpoint ck;
  try {
    ck.config = DenoiserConfig::from_json(file.header.at("config"));
    ck.skeleton = skeleton_from_json(file.header.at("skeleton"));
    ck.fps = file.header.at("fps").get<double>();
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid checkpoint header: " + e.what());
  }
  Rng init(0);
  DenoiserModel model(ck.config, init);
  load_params(file, model.params());
  if (file.header.contains("training")) {
    const auto& tr = file.header["training"];
    TrainingState st;
    st.epoch = tr.at("epoch");
    st.step = tr.at("step");
    st.rng_state = tr.at("rng");
    st.best_val = tr.at("best_val");
    st.bad_epochs = tr.at("bad_epochs");
    st.adam_steps = tr.at("adam_steps");
    st.train_config = tr.at("train_config");
    for (const auto& [name, var] : model.params().entries()) {
      st.adam_m.push_back(file.blob("adam.m/" + name));
      st.adam_v.push_back(file.blob("adam.v/" + name));
    }
    ck.state = std::move(st);
  }
  return {std::move(model), std::move(ck)};
}

}  // namespace mstitch
