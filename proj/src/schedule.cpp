#include "mstitch/schedule.hpp"

#include <cmath>

namespace mstitch {

DiffusionSchedule make_schedule(std::size_t steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("diffusion schedule needs at least one step");
  if (!(beta_min > 0 && beta_min < beta_max && beta_max < 1)) {
    throw ConfigError("diffusion schedule needs 0 < beta_min < beta_max < 1");
  }
  DiffusionSchedule s;
  s.beta_min_ = beta_min;
  s.beta_max_ = beta_max;
  const double increment = (beta_max - beta_min) / static_cast<double>(steps);
  double running = 1.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    // Exact at t = T, where the linear formula may round past beta_max.
    const double beta = t == steps ? beta_max : beta_min + static_cast<double>(t) * increment;
    const double previous = running;
    running *= 1.0 - beta;
    s.betas_.push_back(beta);
    s.alpha_bars_.push_back(running);
    s.posterior_.push_back(t == 1 ? beta : (1.0 - previous) / (1.0 - running) * beta);
  }
  return s;
}

Tensor add_noise(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw ContractError("add_noise: step " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) +
                        "]");
  }
  if (x0.shape() != eps.shape()) throw DimensionError("add_noise: noise shape differs from data");
  const double ab = sched.alpha_bar(t);
  const double signal = std::sqrt(ab), noise = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Real>(signal * static_cast<double>(x0[i]) + noise * static_cast<double>(eps[i]));
  }
  return out;
}

Tensor reverse_step(const Tensor& x0_hat, std::size_t t, const DiffusionSchedule& sched, Rng& rng, ReverseMode mode,
                    const Tensor* x_t) {
  if (t < 1 || t > sched.steps()) throw ContractError("reverse_step: step out of range");
  if (t == 1) return x0_hat;
  Tensor out = x0_hat;
  if (mode == ReverseMode::DdpmPosterior) {
    if (!x_t || x_t->shape() != x0_hat.shape()) throw ContractError("reverse_step: posterior mode needs x_t");
    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1), beta = sched.beta(t);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<Real>(c0 * static_cast<double>(x0_hat[i]) + ct * static_cast<double>((*x_t)[i]));
    }
  }
  const double sigma = std::sqrt(sched.posterior_variance(t));
  if (sigma > 0) {
    for (auto& v : out.values()) v += static_cast<Real>(sigma * rng.normal());
  }
  return out;
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  Tensor out(shape);
  for (auto& v : out.values()) v = static_cast<Real>(rng.normal());
  return out;
}

}  // namespace mstitch
