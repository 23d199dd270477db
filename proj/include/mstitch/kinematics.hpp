#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mstitch/rotation.hpp"
#include "mstitch/tensor.hpp"

namespace mstitch {

/// Joint hierarchy plus rest pose. Joints are stored so that every parent
/// index is smaller than its child's; the root has parent −1.
class Skeleton {
 public:
  Skeleton() = default;
  /// Validates and, if needed, reorders joints topologically. Throws
  /// ConfigError on zero or several roots, cycles, or bad parent indices.
  Skeleton(std::vector<int> parents, std::vector<Eigen::Vector3d> rest_offsets, std::vector<std::string> names = {});

  std::size_t joint_count() const { return parents_.size(); }
  int parent(std::size_t joint) const { return parents_[joint]; }
  const std::vector<int>& parents() const { return parents_; }
  /// Rest-pose position of each joint (meters).
  const Eigen::Vector3d& rest_offset(std::size_t joint) const { return offsets_[joint]; }
  const std::vector<Eigen::Vector3d>& rest_offsets() const { return offsets_; }
  const std::string& name(std::size_t joint) const { return names_[joint]; }
  const std::vector<std::string>& names() const { return names_; }

  /// Optional BVH "End Site" offset (relative to the joint) kept for export.
  const std::optional<Eigen::Vector3d>& end_site(std::size_t joint) const { return end_sites_[joint]; }
  void set_end_site(std::size_t joint, std::optional<Eigen::Vector3d> offset) { end_sites_[joint] = offset; }

  /// Offset of a joint relative to its parent (the root's parent offset is zero).
  Eigen::Vector3d local_offset(std::size_t joint) const;

  friend bool operator==(const Skeleton&, const Skeleton&) = default;

 private:
  std::vector<int> parents_;
  std::vector<Eigen::Vector3d> offsets_;
  std::vector<std::string> names_;
  std::vector<std::optional<Eigen::Vector3d>> end_sites_;
};

/// Global joint positions (meters), one per joint.
using JointPositions = std::vector<Eigen::Vector3d>;

/// Root-first path of joints ending at `joint`.
std::vector<std::size_t> kinematic_chain(const Skeleton& s, std::size_t joint);

/// Global positions from local (parent-relative) rotations and the root
/// translation, by propagating transforms down the hierarchy.
JointPositions forward_kinematics(const Skeleton& s, std::span<const RotationMatrix> local_rotations,
                                  const Eigen::Vector3d& root_position);

/// Same result as forward_kinematics, evaluated joint by joint as the
/// product of homogeneous transforms along each kinematic chain.
JointPositions forward_kinematics_chain_product(const Skeleton& s, std::span<const RotationMatrix> local_rotations,
                                                const Eigen::Vector3d& root_position);

/// Differentiable FK over a whole motion: `features` is frames × (3 + 6J)
/// laid out as [root position | 6-D rotation of joint 0 | joint 1 | …];
/// the result is frames × 3J global joint positions. Throws
/// DegenerateRotation if any 6-D group cannot be orthonormalized.
Var motion_fk(const Var& features, const Skeleton& s);

}  // namespace mstitch
