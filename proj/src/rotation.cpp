#include "mstitch/rotation.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <span>

namespace mstitch {

RotationMatrix sixd_to_matrix(const SixD& r) {
  const Eigen::Vector3d a1(r.v[0], r.v[1], r.v[2]);
  const Eigen::Vector3d a2(r.v[3], r.v[4], r.v[5]);
  const double n1 = a1.norm();
  if (!(n1 >= kDegeneracyThreshold)) throw DegenerateRotation("6D rotation: first column is zero");
  const Eigen::Vector3d b1 = a1 / n1;
  const Eigen::Vector3d u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 >= kDegeneracyThreshold)) throw DegenerateRotation("6D rotation: columns are parallel");
  const Eigen::Vector3d b2 = u2 / n2;
  RotationMatrix m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

SixD matrix_to_sixd(const RotationMatrix& m) {
  return SixD{{m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)}};
}

RotationMatrix quat_to_matrix(const std::array<double, 4>& wxyz) {
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-3) throw ContractError("quaternion is not unit length (norm " + std::to_string(n) + ")");
  q.coeffs() /= n;
  return q.toRotationMatrix();
}

RotationMatrix axis_angle_to_matrix(const Eigen::Vector3d& v) {
  const double angle = v.norm();
  if (angle == 0.0) return RotationMatrix::Identity();
  return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

RotationMatrix axis_rotation(int axis, double radians) {
  return Eigen::AngleAxisd(radians, Eigen::Vector3d::Unit(axis)).toRotationMatrix();
}

double geodesic_distance(const RotationMatrix& a, const RotationMatrix& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

RotationMatrix euler_to_matrix(std::span<const int> axes, std::span<const double> angles) {
  RotationMatrix m = RotationMatrix::Identity();
  for (std::size_t i = 0; i < axes.size(); ++i) m = m * axis_rotation(axes[i], angles[i]);
  return m;
}

std::array<double, 3> matrix_to_euler(const RotationMatrix& m, std::span<const int> axes) {
  if (axes.size() == 1) {
    const int a = axes[0], b = (a + 1) % 3, c = (a + 2) % 3;
    return {std::atan2(m(c, b), m(b, b)), 0.0, 0.0};
  }
  if (axes.size() != 3 || axes[0] == axes[1] || axes[1] == axes[2] || axes[0] == axes[2]) {
    throw ContractError("matrix_to_euler supports one axis or three distinct axes");
  }
  const int a = axes[0], b = axes[1], c = axes[2];
  // +1 for cyclic orders (XYZ, YZX, ZXY), −1 otherwise.
  const double s = ((b - a + 3) % 3 == 1) ? 1.0 : -1.0;
  const double sin_mid = std::clamp(s * m(a, c), -1.0, 1.0);
  const double mid = std::asin(sin_mid);
  if (std::abs(sin_mid) > 1.0 - 1e-12) {
    return {std::atan2(s * m(c, b), m(b, b)), mid, 0.0};
  }
  return {std::atan2(-s * m(b, c), m(c, c)), mid, std::atan2(-s * m(a, b), m(a, a))};
}

bool is_rotation(const RotationMatrix& m, double tol) {
  return (m.transpose() * m - RotationMatrix::Identity()).norm() < tol && std::abs(m.determinant() - 1.0) < tol;
}

}  // namespace mstitch
