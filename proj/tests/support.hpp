#pragma once

// Shared helpers for the unit and acceptance tests: independent oracles,
// random generators and a central-difference gradient checker.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mstitch/motion.hpp"
#include "mstitch/tensor.hpp"

namespace testing {

using namespace mstitch;

inline std::string fixture(const std::string& name) { return std::string(MSTITCH_FIXTURE_DIR) + "/" + name; }

/// Uniform random rotation from a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

/// Random tree with parent[i] < i and rest positions within a unit box.
inline Skeleton random_skeleton(std::size_t joints, Rng& rng) {
  std::vector<int> parents{-1};
  std::vector<Eigen::Vector3d> rest{Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
  for (std::size_t i = 1; i < joints; ++i) {
    const int p = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    parents.push_back(p);
    rest.push_back(rest[static_cast<std::size_t>(p)] +
                   Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)));
  }
  return Skeleton(parents, rest);
}

/// Small branching body: hips → spine → head, hips → two legs.
inline std::shared_ptr<const Skeleton> toy_skeleton() {
  std::vector<int> parents{-1, 0, 1, 0, 3, 0, 5};
  std::vector<Eigen::Vector3d> rest{{0, 1, 0},      {0, 1.3, 0},     {0, 1.6, 0},   {0.15, 0.95, 0},
                                    {0.15, 0.5, 0}, {-0.15, 0.95, 0}, {-0.15, 0.5, 0}};
  return std::make_shared<const Skeleton>(parents, rest);
}

/// Smooth synthetic motion: each joint swings with its own phase, the root drifts.
inline MotionSequence synthetic_motion(std::shared_ptr<const Skeleton> skeleton, std::size_t frames, double fps,
                                       std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t joints = skeleton->joint_count();
  std::vector<Eigen::Vector3d> amp(joints), phase(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    amp[j] = Eigen::Vector3d(rng.uniform(0.1, 0.8), rng.uniform(0.1, 0.8), rng.uniform(0.1, 0.4));
    phase[j] = Eigen::Vector3d(rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28));
  }
  const Eigen::Vector3d velocity(rng.uniform(-0.05, 0.05), 0, rng.uniform(-0.05, 0.05));
  const double freq = rng.uniform(0.05, 0.2);
  std::vector<Eigen::Vector3d> roots;
  std::vector<std::vector<RotationMatrix>> rots;
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f);
    roots.push_back(velocity * t + Eigen::Vector3d(0, 0.05 * std::sin(freq * t), 0));
    std::vector<RotationMatrix> r;
    for (std::size_t j = 0; j < joints; ++j) {
      const Eigen::Vector3d aa(amp[j].x() * std::sin(freq * t + phase[j].x()),
                               amp[j].y() * std::sin(freq * t + phase[j].y()),
                               amp[j].z() * std::sin(freq * t + phase[j].z()));
      r.push_back(axis_angle_to_matrix(aa));
    }
    rots.push_back(std::move(r));
  }
  return MotionSequence::from_rotations(std::move(skeleton), fps, roots, rots);
}

/// Recursive FK written independently of the library:
/// p_child = p_parent + G_parent (B_child − B_parent), G_child = G_parent R_child.
inline std::vector<Eigen::Vector3d> oracle_fk(const std::vector<int>& parents,
                                              const std::vector<Eigen::Vector3d>& rest,
                                              const std::vector<Eigen::Matrix3d>& local, const Eigen::Vector3d& root) {
  const std::size_t n = parents.size();
  std::vector<Eigen::Matrix3d> g(n);
  std::vector<Eigen::Vector3d> p(n);
  std::vector<bool> done(n, false);
  std::function<void(std::size_t)> visit = [&](std::size_t j) {
    if (done[j]) return;
    const int par = parents[j];
    if (par < 0) {
      g[j] = local[j];
      p[j] = rest[j] + root;
    } else {
      visit(static_cast<std::size_t>(par));
      g[j] = g[par] * local[j];
      p[j] = p[par] + g[par] * (rest[j] - rest[par]);
    }
    done[j] = true;
  };
  for (std::size_t j = 0; j < n; ++j) visit(j);
  return p;
}

/// Norm-wise relative error ‖a − b‖ / max(‖a‖, ‖b‖, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

struct GradCheck {
  std::vector<double> analytic, numeric;
  double rel_error() const { return relative_error(analytic, numeric); }
};

/// Compares backward() against central differences for every entry of
/// `leaves`. `loss` must rebuild the graph from the leaves' current values.
inline GradCheck grad_check(const std::function<Var()>& loss, std::vector<Var> leaves, std::size_t max_per_leaf = 0) {
  for (auto& l : leaves) l.zero_grad();
  backward(loss());
  GradCheck out;
  const double eps = std::numeric_limits<Real>::epsilon();
  for (auto& l : leaves) {
    const Tensor grad = l.grad().empty() ? Tensor(l.shape()) : l.grad();
    Tensor& v = l.value_mut();
    const std::size_t count = max_per_leaf ? std::min(max_per_leaf, v.size()) : v.size();
    const std::size_t stride = std::max<std::size_t>(1, v.size() / std::max<std::size_t>(count, 1));
    for (std::size_t i = 0, k = 0; k < count && i < v.size(); i += stride, ++k) {
      const Real x = v[i];
      const Real h = static_cast<Real>(std::cbrt(eps) * std::max(1.0, std::abs(static_cast<double>(x))));
      v[i] = x + h;
      const double up = loss().value()[0];
      v[i] = x - h;
      const double down = loss().value()[0];
      v[i] = x;
      out.analytic.push_back(grad[i]);
      out.numeric.push_back((up - down) / (2.0 * static_cast<double>(h)));
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(scale * rng.normal());
  return t;
}

}  // namespace testing
