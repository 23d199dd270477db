#include "mstitch/kinematics.hpp"

#include <Eigen/Dense>
#include <functional>

namespace mstitch {

Skeleton::Skeleton(std::vector<int> parents, std::vector<Eigen::Vector3d> rest_offsets,
                   std::vector<std::string> names) {
  const std::size_t n = parents.size();
  if (n == 0) throw ConfigError("skeleton has no joints");
  if (rest_offsets.size() != n) throw ConfigError("skeleton: one rest offset per joint required");
  if (names.empty()) {
    for (std::size_t i = 0; i < n; ++i) names.push_back("joint" + std::to_string(i));
  }
  if (names.size() != n) throw ConfigError("skeleton: one name per joint required");

  std::vector<std::vector<std::size_t>> children(n);
  int root = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const int p = parents[i];
    if (p == -1) {
      if (root != -1) throw ConfigError("skeleton has more than one root");
      root = static_cast<int>(i);
    } else if (p < 0 || p >= static_cast<int>(n) || p == static_cast<int>(i)) {
      throw ConfigError("skeleton: joint " + std::to_string(i) + " has invalid parent " + std::to_string(p));
    } else {
      children[p].push_back(i);
    }
  }
  if (root == -1) throw ConfigError("skeleton has no root");

  // Depth-first order from the root; joints unreachable from it sit on a cycle.
  std::vector<std::size_t> order;
  std::vector<std::size_t> stack{static_cast<std::size_t>(root)};
  while (!stack.empty()) {
    const std::size_t j = stack.back();
    stack.pop_back();
    order.push_back(j);
    for (auto it = children[j].rbegin(); it != children[j].rend(); ++it) stack.push_back(*it);
  }
  if (order.size() != n) throw ConfigError("skeleton hierarchy contains a cycle");

  bool ordered = true;
  for (std::size_t i = 0; i < n; ++i) ordered = ordered && parents[i] < static_cast<int>(i);
  if (ordered) {
    parents_ = std::move(parents);
    offsets_ = std::move(rest_offsets);
    names_ = std::move(names);
  } else {
    std::vector<int> new_index(n);
    for (std::size_t k = 0; k < n; ++k) new_index[order[k]] = static_cast<int>(k);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t old = order[k];
      parents_.push_back(parents[old] < 0 ? -1 : new_index[parents[old]]);
      offsets_.push_back(rest_offsets[old]);
      names_.push_back(names[old]);
    }
  }
  end_sites_.assign(n, std::nullopt);
}

Eigen::Vector3d Skeleton::local_offset(std::size_t joint) const {
  const int p = parents_[joint];
  return p < 0 ? offsets_[joint] : Eigen::Vector3d(offsets_[joint] - offsets_[p]);
}

std::vector<std::size_t> kinematic_chain(const Skeleton& s, std::size_t joint) {
  if (joint >= s.joint_count()) {
    throw ContractError("joint index " + std::to_string(joint) + " out of range for " +
                        std::to_string(s.joint_count()) + " joints");
  }
  std::vector<std::size_t> chain;
  for (int j = static_cast<int>(joint); j >= 0; j = s.parent(j)) chain.push_back(static_cast<std::size_t>(j));
  std::reverse(chain.begin(), chain.end());
  return chain;
}

namespace {

void check_rotations(const Skeleton& s, std::span<const RotationMatrix> rotations) {
  if (rotations.size() != s.joint_count()) {
    throw DimensionError("forward kinematics: expected " + std::to_string(s.joint_count()) + " rotations, got " +
                         std::to_string(rotations.size()));
  }
}

}  // namespace

JointPositions forward_kinematics(const Skeleton& s, std::span<const RotationMatrix> local_rotations,
                                  const Eigen::Vector3d& root_position) {
  check_rotations(s, local_rotations);
  const std::size_t n = s.joint_count();
  std::vector<RotationMatrix> global(n);
  JointPositions p(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int parent = s.parent(j);
    if (parent < 0) {
      global[j] = local_rotations[j];
      p[j] = s.rest_offset(j) + root_position;
    } else {
      global[j] = global[parent] * local_rotations[j];
      p[j] = p[parent] + global[parent] * s.local_offset(j);
    }
  }
  return p;
}

JointPositions forward_kinematics_chain_product(const Skeleton& s, std::span<const RotationMatrix> local_rotations,
                                                const Eigen::Vector3d& root_position) {
  check_rotations(s, local_rotations);
  JointPositions p(s.joint_count());
  for (std::size_t i = 0; i < s.joint_count(); ++i) {
    Eigen::Matrix4d product = Eigen::Matrix4d::Identity();
    for (const std::size_t j : kinematic_chain(s, i)) {
      Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
      t.topLeftCorner<3, 3>() = local_rotations[j];
      t.topRightCorner<3, 1>() = s.local_offset(j);
      product = product * t;
    }
    p[i] = (product * Eigen::Vector4d(0, 0, 0, 1)).head<3>() + root_position;
  }
  return p;
}

// ---- differentiable motion FK --------------------------------------------

namespace {

struct FrameCache {
  std::vector<Eigen::Matrix3d> local;   // orthonormalized local rotations
  std::vector<Eigen::Matrix3d> global;  // accumulated rotations
  std::vector<Eigen::Vector3d> b1, b2;  // Gram–Schmidt columns
  std::vector<double> n1, n2;           // norms before normalization
  std::vector<double> proj;             // b1·a2
  std::vector<Eigen::Vector3d> a2;
};

Eigen::Vector3d read3(const Real* p) { return {p[0], p[1], p[2]}; }

// Gradient of Gram–Schmidt outputs (columns gb1, gb2, gb3) w.r.t. the 6 inputs.
void gram_schmidt_backward(const FrameCache& c, std::size_t j, const Eigen::Matrix3d& g_rot, Real* g_out) {
  const Eigen::Vector3d& b1 = c.b1[j];
  const Eigen::Vector3d& b2 = c.b2[j];
  Eigen::Vector3d gb1 = g_rot.col(0);
  Eigen::Vector3d gb2 = g_rot.col(1);
  const Eigen::Vector3d gb3 = g_rot.col(2);
  // b3 = b1 × b2
  gb1 += b2.cross(gb3);
  gb2 += gb3.cross(b1);
  // b2 = u2 / |u2|
  const Eigen::Vector3d gu2 = (gb2 - b2 * b2.dot(gb2)) / c.n2[j];
  // u2 = a2 − (b1·a2) b1
  const Eigen::Vector3d ga2 = gu2 - b1 * b1.dot(gu2);
  gb1 -= c.proj[j] * gu2 + c.a2[j] * b1.dot(gu2);
  // b1 = a1 / |a1|
  const Eigen::Vector3d ga1 = (gb1 - b1 * b1.dot(gb1)) / c.n1[j];
  for (int k = 0; k < 3; ++k) {
    g_out[k] += static_cast<Real>(ga1[k]);
    g_out[3 + k] += static_cast<Real>(ga2[k]);
  }
}

}  // namespace

Var motion_fk(const Var& features, const Skeleton& s) {
  const std::size_t joints = s.joint_count();
  const std::size_t width = 3 + 6 * joints;
  if (features.value().rank() != 2 || features.cols() != width) {
    throw DimensionError("motion_fk: expected frames × " + std::to_string(width) + " features, got " +
                         shape_string(features.shape()));
  }
  const std::size_t frames = features.rows();
  auto caches = std::make_shared<std::vector<FrameCache>>(frames);
  Tensor out({frames, 3 * joints});
  for (std::size_t f = 0; f < frames; ++f) {
    const Real* row = features.value().data() + f * width;
    FrameCache& c = (*caches)[f];
    c.local.resize(joints);
    c.global.resize(joints);
    c.b1.resize(joints);
    c.b2.resize(joints);
    c.n1.resize(joints);
    c.n2.resize(joints);
    c.proj.resize(joints);
    c.a2.resize(joints);
    std::vector<Eigen::Vector3d> pos(joints);
    const Eigen::Vector3d root = read3(row);
    for (std::size_t j = 0; j < joints; ++j) {
      const Eigen::Vector3d a1 = read3(row + 3 + 6 * j);
      const Eigen::Vector3d a2 = read3(row + 6 + 6 * j);
      c.n1[j] = a1.norm();
      if (!(c.n1[j] >= kDegeneracyThreshold)) throw DegenerateRotation("motion_fk: zero first column");
      c.b1[j] = a1 / c.n1[j];
      c.a2[j] = a2;
      c.proj[j] = c.b1[j].dot(a2);
      const Eigen::Vector3d u2 = a2 - c.proj[j] * c.b1[j];
      c.n2[j] = u2.norm();
      if (!(c.n2[j] >= kDegeneracyThreshold)) throw DegenerateRotation("motion_fk: parallel columns");
      c.b2[j] = u2 / c.n2[j];
      c.local[j].col(0) = c.b1[j];
      c.local[j].col(1) = c.b2[j];
      c.local[j].col(2) = c.b1[j].cross(c.b2[j]);

      const int parent = s.parent(j);
      if (parent < 0) {
        c.global[j] = c.local[j];
        pos[j] = s.rest_offset(j) + root;
      } else {
        c.global[j] = c.global[parent] * c.local[j];
        pos[j] = pos[parent] + c.global[parent] * s.local_offset(j);
      }
      for (int k = 0; k < 3; ++k) out[f * 3 * joints + 3 * j + k] = static_cast<Real>(pos[j][k]);
    }
  }

  return detail::make_op(std::move(out), {features}, [caches, s, joints, width](detail::Node& self) {
    Tensor& g_in = self.input(0).ensure_grad();
    const std::size_t frames = caches->size();
    std::vector<Eigen::Vector3d> g_pos(joints);
    std::vector<Eigen::Matrix3d> g_global(joints);
    for (std::size_t f = 0; f < frames; ++f) {
      const FrameCache& c = (*caches)[f];
      for (std::size_t j = 0; j < joints; ++j) {
        g_pos[j] = read3(self.grad.data() + f * 3 * joints + 3 * j);
        g_global[j].setZero();
      }
      Real* g_row = g_in.data() + f * width;
      // Children have larger indices, so a reverse sweep sees every joint
      // after all of its descendants have pushed their gradients up.
      for (std::size_t jj = joints; jj-- > 0;) {
        const int parent = s.parent(jj);
        Eigen::Matrix3d g_local;
        if (parent < 0) {
          for (int k = 0; k < 3; ++k) g_row[k] += static_cast<Real>(g_pos[jj][k]);
          g_local = g_global[jj];
        } else {
          g_pos[parent] += g_pos[jj];
          g_global[parent] += g_pos[jj] * s.local_offset(jj).transpose();
          g_global[parent] += g_global[jj] * c.local[jj].transpose();
          g_local = c.global[parent].transpose() * g_global[jj];
        }
        gram_schmidt_backward(c, jj, g_local, g_row + 3 + 6 * jj);
      }
    }
  });
}

}  // namespace mstitch
