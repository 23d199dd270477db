#pragma once

#include <span>

#include "mstitch/kinematics.hpp"
#include "mstitch/tensor.hpp"

namespace mstitch {

/// Plain values of the five loss terms and their sum.
struct LossBreakdown {
  double model = 0;           // feature RMSE
  double reconstruction = 0;  // FK position RMSE, all frames
  double context = 0;         // FK position RMSE, keyframes only
  double rotation_velocity = 0;
  double position_velocity = 0;
  double total = 0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown& operator/=(double n);
};

/// Per-term multipliers; all ones reproduces the unweighted sum.
struct LossWeights {
  double model = 1, reconstruction = 1, context = 1, rotation_velocity = 1, position_velocity = 1;
};

/// Differentiable terms plus the total.
struct LossTerms {
  Var model, reconstruction, context, rotation_velocity, position_velocity, total;
  LossBreakdown values() const;
};

// Every term is sqrt(mean of squared differences + 1e-12), averaged over all
// trailing entries (features, or joints × xyz) as well as frames.

Var model_loss(const Var& x0_hat, const Var& x0);
Var reconstruction_loss(const Var& x0_hat, const Var& x0, const Skeleton& skeleton);
/// Throws ContractError when `indices` is empty.
Var context_loss(const Var& x0_hat, const Var& x0, std::span<const std::size_t> indices, const Skeleton& skeleton);
/// Throws ContractError for fewer than two frames.
Var rotation_velocity_loss(const Var& x0_hat, const Var& x0);
Var position_velocity_loss(const Var& x0_hat, const Var& x0, const Skeleton& skeleton);

/// All five terms sharing one FK evaluation per input.
LossTerms total_loss(const Var& x0_hat, const Var& x0, std::span<const std::size_t> indices,
                     const Skeleton& skeleton, const LossWeights& weights = {});

}  // namespace mstitch
