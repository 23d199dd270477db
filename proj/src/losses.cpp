#include "mstitch/losses.hpp"

namespace mstitch {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  model += o.model;
  reconstruction += o.reconstruction;
  context += o.context;
  rotation_velocity += o.rotation_velocity;
  position_velocity += o.position_velocity;
  total += o.total;
  return *this;
}

LossBreakdown& LossBreakdown::operator/=(double n) {
  model /= n;
  reconstruction /= n;
  context /= n;
  rotation_velocity /= n;
  position_velocity /= n;
  total /= n;
  return *this;
}

LossBreakdown LossTerms::values() const {
  return {model.value()[0],
          reconstruction.value()[0],
          context.value()[0],
          rotation_velocity.value()[0],
          position_velocity.value()[0],
          total.value()[0]};
}

namespace {

void require_frames(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("loss inputs differ in shape: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_velocity(const Var& a) {
  if (a.rows() < 2) throw ContractError("velocity losses need at least two frames");
}

Var weighted(const Var& term, double w) { return w == 1.0 ? term : scale(term, static_cast<Real>(w)); }

}  // namespace

Var model_loss(const Var& x0_hat, const Var& x0) {
  require_frames(x0_hat, x0);
  return rmse(x0_hat, x0);
}

Var reconstruction_loss(const Var& x0_hat, const Var& x0, const Skeleton& skeleton) {
  require_frames(x0_hat, x0);
  return rmse(motion_fk(x0_hat, skeleton), motion_fk(x0, skeleton));
}

Var context_loss(const Var& x0_hat, const Var& x0, std::span<const std::size_t> indices, const Skeleton& skeleton) {
  require_frames(x0_hat, x0);
  if (indices.empty()) throw ContractError("context loss needs at least one keyframe index");
  return rmse(gather_rows(motion_fk(x0_hat, skeleton), indices), gather_rows(motion_fk(x0, skeleton), indices));
}

Var rotation_velocity_loss(const Var& x0_hat, const Var& x0) {
  require_frames(x0_hat, x0);
  require_velocity(x0_hat);
  return rmse(diff_rows(x0_hat), diff_rows(x0));
}

Var position_velocity_loss(const Var& x0_hat, const Var& x0, const Skeleton& skeleton) {
  require_frames(x0_hat, x0);
  require_velocity(x0_hat);
  return rmse(diff_rows(motion_fk(x0_hat, skeleton)), diff_rows(motion_fk(x0, skeleton)));
}

LossTerms total_loss(const Var& x0_hat, const Var& x0, std::span<const std::size_t> indices,
                     const Skeleton& skeleton, const LossWeights& weights) {
  require_frames(x0_hat, x0);
  require_velocity(x0_hat);
  if (indices.empty()) throw ContractError("context loss needs at least one keyframe index");
  const Var fk_hat = motion_fk(x0_hat, skeleton);
  const Var fk_ref = motion_fk(x0, skeleton);
  LossTerms terms;
  terms.model = rmse(x0_hat, x0);
  terms.reconstruction = rmse(fk_hat, fk_ref);
  terms.context = rmse(gather_rows(fk_hat, indices), gather_rows(fk_ref, indices));
  terms.rotation_velocity = rmse(diff_rows(x0_hat), diff_rows(x0));
  terms.position_velocity = rmse(diff_rows(fk_hat), diff_rows(fk_ref));
  terms.total = add_scalars({weighted(terms.model, weights.model),
                             weighted(terms.reconstruction, weights.reconstruction),
                             weighted(terms.context, weights.context),
                             weighted(terms.rotation_velocity, weights.rotation_velocity),
                             weighted(terms.position_velocity, weights.position_velocity)});
  return terms;
}

}  // namespace mstitch
