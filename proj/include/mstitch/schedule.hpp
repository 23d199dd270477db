#pragma once

#include <vector>

#include "mstitch/rng.hpp"
#include "mstitch/tensor.hpp"

namespace mstitch {

/// How the sampler forms x_{t−1} from the predicted clean motion.
enum class ReverseMode {
  /// x_{t−1} = x̂₀ + √β̃_t · ε (default).
  Direct,
  /// Standard DDPM posterior mean μ̃(x̂₀, x_t) plus √β̃_t · ε.
  DdpmPosterior,
};

/// Linear beta schedule with its cumulative products and posterior
/// variances. Steps are numbered 1..T; t = 0 is clean data. The arrays are
/// stored 0-based, so `beta(t)` reads `betas[t − 1]`.
class DiffusionSchedule {
 public:
  static constexpr double kDefaultBetaMin = 1e-4;
  static constexpr double kDefaultBetaMax = 0.02;

  DiffusionSchedule() = default;

  std::size_t steps() const { return betas_.size(); }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars_.at(t - 1); }
  double posterior_variance(std::size_t t) const { return posterior_.at(t - 1); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& posterior_variances() const { return posterior_; }

  friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;

 private:
  friend DiffusionSchedule make_schedule(std::size_t, double, double);
  double beta_min_ = 0, beta_max_ = 0;
  std::vector<double> betas_, alpha_bars_, posterior_;
};

/// beta_t = beta_min + t·(beta_max − beta_min)/T, ᾱ_t = Π_{s≤t}(1 − β_s),
/// β̃_t = (1 − ᾱ_{t−1})/(1 − ᾱ_t)·β_t with β̃_1 = β_1.
/// Throws ConfigError unless T ≥ 1 and 0 < beta_min < beta_max < 1.
DiffusionSchedule make_schedule(std::size_t steps, double beta_min = DiffusionSchedule::kDefaultBetaMin,
                                double beta_max = DiffusionSchedule::kDefaultBetaMax);

/// √ᾱ_t·x0 + √(1 − ᾱ_t)·eps. Throws ContractError when t ∉ [1, T] and
/// DimensionError when shapes differ.
Tensor add_noise(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched);

/// One reverse step from t to t−1. At t = 1 the clean prediction is returned
/// unchanged. `x_t` is only read in DdpmPosterior mode.
Tensor reverse_step(const Tensor& x0_hat, std::size_t t, const DiffusionSchedule& sched, Rng& rng,
                    ReverseMode mode = ReverseMode::Direct, const Tensor* x_t = nullptr);

/// Tensor of i.i.d. standard normal draws.
Tensor standard_normal(const Shape& shape, Rng& rng);

}  // namespace mstitch
