#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

#include "mstitch/common.hpp"

namespace mstitch {

/// 3×3 rotation, acting on column vectors.
using RotationMatrix = Eigen::Matrix3d;

/// Continuous 6-D rotation encoding: the first column of the rotation
/// matrix followed by its second column.
struct SixD {
  std::array<double, 6> v{};
  friend bool operator==(const SixD&, const SixD&) = default;
};

/// Raised when a 6-D vector cannot be orthonormalized.
class DegenerateRotation : public std::domain_error {
  using std::domain_error::domain_error;
};

/// Below this residual norm Gram–Schmidt refuses to invent a frame.
inline constexpr double kDegeneracyThreshold = 1e-8;

RotationMatrix sixd_to_matrix(const SixD& r);
SixD matrix_to_sixd(const RotationMatrix& m);

/// Quaternion as (w, x, y, z). Inputs within 1e-3 of unit length are
/// renormalized; anything further off throws ContractError.
RotationMatrix quat_to_matrix(const std::array<double, 4>& wxyz);

/// Rodrigues: direction is the axis, magnitude the angle in radians.
RotationMatrix axis_angle_to_matrix(const Eigen::Vector3d& v);

/// Rotation by `radians` about coordinate axis 0, 1 or 2.
RotationMatrix axis_rotation(int axis, double radians);

/// Angle of the relative rotation between a and b.
double geodesic_distance(const RotationMatrix& a, const RotationMatrix& b);

/// Intrinsic Euler composition R = R_{axes[0]}(angles[0]) · R_{axes[1]}(angles[1]) · …
/// for up to three axes (radians).
RotationMatrix euler_to_matrix(std::span<const int> axes, std::span<const double> angles);

/// Inverse of euler_to_matrix for 1 axis or 3 distinct axes. Near gimbal
/// lock the last angle is set to zero.
std::array<double, 3> matrix_to_euler(const RotationMatrix& m, std::span<const int> axes);

/// ‖MᵀM − I‖_F and |det M − 1| both under `tol`.
bool is_rotation(const RotationMatrix& m, double tol = 1e-6);

}  // namespace mstitch
