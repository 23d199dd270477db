#include "mstitch/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

namespace mstitch {

namespace fs = std::filesystem;

void TrainConfig::validate(std::size_t block) const {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (timesteps < 1) throw ConfigError("timesteps must be at least 1");
  if (!(learning_rate >= 0)) throw ConfigError("learning rate must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam moments must be in [0, 1)");
  const std::size_t upper = context_upper(block);
  if (min_context < 1 || min_context > upper || upper > block / 2) {
    throw ConfigError("context length bounds must satisfy 1 ≤ min ≤ max ≤ B/2 = " + std::to_string(block / 2));
  }
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},   {"timesteps", timesteps},     {"epochs", epochs},
          {"learning_rate", learning_rate}, {"beta1", beta1},          {"beta2", beta2},
          {"adam_eps", adam_eps},       {"seed", seed},               {"min_context", min_context},
          {"max_context", max_context}, {"grad_clip", grad_clip},     {"patience", patience},
          {"eval_seed", eval_seed},
          {"weights",
           {weights.model, weights.reconstruction, weights.context, weights.rotation_velocity,
            weights.position_velocity}}};
}

Adam::Adam(const nn::ParamStore& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params.entries()) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(nn::ParamStore& params) {
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw ContractError("optimizer built for a different parameter set");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var& p = entries[i].second;
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& value = p.value_mut();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double gk = g[k];
      const double m = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
      const double v = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
      m_[i][k] = static_cast<Real>(m);
      v_[i][k] = static_cast<Real>(v);
      value[k] -= static_cast<Real>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
    }
  }
}

void Adam::export_state(TrainingState& state) const {
  state.adam_steps = steps_;
  state.adam_m = m_;
  state.adam_v = v_;
}

void Adam::import_state(const TrainingState& state) {
  if (state.adam_m.size() != m_.size() || state.adam_v.size() != v_.size()) {
    throw ContractError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (state.adam_m[i].shape() != m_[i].shape() || state.adam_v[i].shape() != v_[i].shape()) {
      throw ContractError("optimizer moment shape mismatch");
    }
  }
  steps_ = state.adam_steps;
  m_ = state.adam_m;
  v_ = state.adam_v;
}

nlohmann::ordered_json loss_json(const LossBreakdown& l) {
  return {{"l_g", l.model},
          {"l_r", l.reconstruction},
          {"l_c", l.context},
          {"l_r_vel", l.rotation_velocity},
          {"l_p_vel", l.position_velocity},
          {"total", l.total}};
}

namespace {

struct Draw {
  Context context;
  std::size_t t;
  Tensor noisy;
};

Draw draw_example(const MotionSequence& motion, const Tensor& x0, const DiffusionSchedule& sched, Rng& rng,
                  const TrainConfig& config) {
  const std::size_t block = motion.frame_count();
  const auto length = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.min_context),
                                                                static_cast<std::int64_t>(config.context_upper(block))));
  Draw d;
  d.context = sample_context(motion, length, rng);
  d.t = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(sched.steps())));
  d.noisy = add_noise(x0, d.t, standard_normal(x0.shape(), rng), sched);
  return d;
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.model) && std::isfinite(l.reconstruction) && std::isfinite(l.context) &&
         std::isfinite(l.rotation_velocity) && std::isfinite(l.position_velocity) && std::isfinite(l.total);
}

}  // namespace

StepResult train_step(std::span<const TrainingExample* const> batch, DenoiserModel& model,
                      const DiffusionSchedule& sched, Adam& optimizer, Rng& rng, const TrainConfig& config) {
  if (batch.empty()) throw ContractError("empty training batch");
  const auto& cfg = model.config();
  model.params().zero_grad();
  const ForwardMode mode{true, &rng};
  const Real inv_batch = Real(1) / static_cast<Real>(batch.size());
  StepResult result;
  for (const TrainingExample* ex : batch) {
    if (ex->motion.frame_count() != cfg.block || ex->motion.width() != cfg.feature_dim) {
      throw DimensionError("training example '" + ex->id + "' does not match the model block/features");
    }
    const Tensor x0 = to_tensor(ex->motion);
    Draw d = draw_example(ex->motion, x0, sched, rng, config);
    const Var memory = model.encode_context(model.build_masked_input(d.context, d.t), mode);
    const Var x0_hat = model.denoise(constant(std::move(d.noisy)), memory, d.t, mode);
    const LossTerms terms = total_loss(x0_hat, constant(x0), d.context.indices, ex->motion.skeleton(), config.weights);
    const LossBreakdown values = terms.values();
    if (!finite(values)) {
      std::vector<std::string> ids;
      for (const auto* e : batch) ids.push_back(e->id);
      throw NonFiniteLoss("non-finite loss on example '" + ex->id + "'", std::move(ids));
    }
    result.loss += values;
    result.t_mean += static_cast<double>(d.t);
    backward(scale(terms.total, inv_batch));
  }
  result.loss /= static_cast<double>(batch.size());
  result.t_mean /= static_cast<double>(batch.size());

  double sq = 0;
  for (const auto& [name, p] : model.params().entries())
    for (Real g : p.grad().values()) sq += static_cast<double>(g) * g;
  result.grad_norm = std::sqrt(sq);
  if (config.grad_clip > 0 && result.grad_norm > config.grad_clip) {
    const auto factor = static_cast<Real>(config.grad_clip / result.grad_norm);
    for (auto& [name, p] : model.params().entries())
      for (Real& g : p.grad_mut().values()) g *= factor;
    result.clipped = true;
  }
  optimizer.step(model.params());
  return result;
}

LossBreakdown evaluate_epoch(std::span<const TrainingExample> examples, const DenoiserModel& model,
                             const DiffusionSchedule& sched, const TrainConfig& config) {
  LossBreakdown mean;
  if (examples.empty()) return mean;
  NoGradGuard no_grad;
  Rng rng(config.eval_seed);
  const ForwardMode eval;
  for (const auto& ex : examples) {
    const Tensor x0 = to_tensor(ex.motion);
    Draw d = draw_example(ex.motion, x0, sched, rng, config);
    const Var memory = model.encode_context(model.build_masked_input(d.context, d.t), eval);
    const Var x0_hat = model.denoise(constant(std::move(d.noisy)), memory, d.t, eval);
    mean += total_loss(x0_hat, constant(x0), d.context.indices, ex.motion.skeleton(), config.weights).values();
  }
  mean /= static_cast<double>(examples.size());
  return mean;
}

namespace {

// Keep only log records at or before the resumed position.
void truncate_log(const fs::path& log, std::size_t step, std::size_t epoch) {
  if (!fs::exists(log)) return;
  std::ifstream in(log);
  std::vector<std::string> kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.contains("step") && j["step"].get<std::size_t>() > step) continue;
    if (j.contains("val") && j["epoch"].get<std::size_t>() > epoch) continue;
    kept.push_back(line);
  }
  in.close();
  std::ofstream out(log, std::ios::trunc);
  for (const auto& l : kept) out << l << "\n";
}

}  // namespace

TrainResult run_training(std::span<const TrainingExample> train, std::span<const TrainingExample> val,
                         DenoiserModel& model, const Skeleton& skeleton, double fps, const TrainConfig& config,
                         const std::string& out_dir, std::optional<TrainingState> resume, std::ostream* progress) {
  config.validate(model.config().block);
  if (train.empty() && config.epochs > 0) throw ContractError("training split is empty");
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const fs::path log_path = dir / "train_log.jsonl";
  const DiffusionSchedule sched = model.config().schedule();

  Adam optimizer(model.params(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  Rng rng(config.seed);
  TrainingState state;
  state.best_val = std::numeric_limits<double>::max();
  state.train_config = config.to_json();
  if (resume) {
    state = *resume;
    state.train_config = config.to_json();
    optimizer.import_state(state);
    rng.set_state(state.rng_state);
    truncate_log(log_path, state.step, state.epoch);
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }

  auto save_state = [&](const fs::path& path) {
    state.rng_state = rng.state();
    optimizer.export_state(state);
    save_checkpoint(path.string(), model, skeleton, fps, &state);
  };
  if (!resume) save_state(dir / "latest.ckpt");

  std::ofstream log(log_path, std::ios::app);
  TrainResult result;
  std::vector<std::size_t> order(train.size());
  while (state.epoch < config.epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      std::vector<const TrainingExample*> batch;
      for (std::size_t i = begin; i < std::min(order.size(), begin + config.batch_size); ++i) {
        batch.push_back(&train[order[i]]);
      }
      StepResult step;
      try {
        step = train_step(batch, model, sched, optimizer, rng, config);
      } catch (const NonFiniteLoss& e) {
        nlohmann::ordered_json dump{{"step", state.step + 1}, {"error", e.what()}, {"batch_ids", e.batch_ids}};
        log << dump.dump() << "\n";
        throw;
      }
      ++state.step;
      nlohmann::ordered_json rec{{"step", state.step},
                                 {"epoch", state.epoch + 1},
                                 {"t_mean", step.t_mean},
                                 {"loss", loss_json(step.loss)},
                                 {"grad_norm", step.grad_norm}};
      if (step.clipped) rec["clipped"] = true;
      log << rec.dump() << "\n";
    }
    ++state.epoch;
    if (!val.empty()) {
      const LossBreakdown v = evaluate_epoch(val, model, sched, config);
      result.last_val = v;
      log << nlohmann::ordered_json{{"epoch", state.epoch}, {"val", loss_json(v)}}.dump() << "\n";
      if (v.total < state.best_val) {
        state.best_val = v.total;
        state.bad_epochs = 0;
        save_state(dir / "best.ckpt");
      } else {
        ++state.bad_epochs;
      }
      if (progress) *progress << "epoch " << state.epoch << " val total " << v.total << "\n";
    } else if (progress) {
      *progress << "epoch " << state.epoch << " done (" << state.step << " steps)\n";
    }
    log.flush();
    save_state(dir / "latest.ckpt");
    if (config.patience > 0 && state.bad_epochs >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.epochs_completed = state.epoch;
  result.steps = state.step;
  return result;
}

}  // namespace mstitch
