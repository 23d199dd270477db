#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mstitch/rotation.hpp"
#include "support.hpp"

using namespace mstitch;
using testing::random_rotation;

namespace {

const RotationMatrix kRotZ90 = (RotationMatrix() << 0, -1, 0, 1, 0, 0, 0, 0, 1).finished();

SixD sixd(std::initializer_list<double> v) {
  SixD s;
  std::copy(v.begin(), v.end(), s.v.begin());
  return s;
}

}  // namespace

TEST_CASE("sixd_to_matrix: identity and scale invariance") {
  CHECK(sixd_to_matrix(sixd({1, 0, 0, 0, 1, 0})) == RotationMatrix::Identity());
  CHECK((sixd_to_matrix(sixd({2, 0, 0, 0, 5, 0})) - RotationMatrix::Identity()).norm() < 1e-15);
}

TEST_CASE("sixd_to_matrix reproduces a rotation from its first two columns") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const RotationMatrix r = random_rotation(rng);
    const SixD s = sixd({r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)});
    CHECK((sixd_to_matrix(s) - r).norm() < 1e-9);
  }
}

TEST_CASE("sixd_to_matrix rejects degenerate input") {
  CHECK_THROWS_AS(sixd_to_matrix(sixd({0, 0, 0, 0, 1, 0})), DegenerateRotation);
  CHECK_THROWS_AS(sixd_to_matrix(sixd({1, 0, 0, 2, 0, 0})), DegenerateRotation);
  CHECK_THROWS_AS(sixd_to_matrix(sixd({1, 0, 0, 3, 1e-10, 0})), DegenerateRotation);
}

TEST_CASE("matrix_to_sixd") {
  CHECK(matrix_to_sixd(RotationMatrix::Identity()) == sixd({1, 0, 0, 0, 1, 0}));
  const SixD z = matrix_to_sixd(kRotZ90);
  const std::array<double, 6> expect{0, 1, 0, -1, 0, 0};
  for (int i = 0; i < 6; ++i) CHECK(z.v[i] == doctest::Approx(expect[i]));
}

TEST_CASE("property: random non-degenerate 6-vectors decode to rotations") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    SixD s;
    for (auto& x : s.v) x = rng.normal();
    const RotationMatrix m = sixd_to_matrix(s);
    CHECK((m.transpose() * m - RotationMatrix::Identity()).norm() < 1e-6);
    CHECK(std::abs(m.determinant() - 1) < 1e-6);
  }
}

TEST_CASE("property: round trip matrix → 6D → matrix") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const RotationMatrix r = random_rotation(rng);
    CHECK((sixd_to_matrix(matrix_to_sixd(r)) - r).norm() < 1e-9);
  }
}

TEST_CASE("property: nearby rotations have nearby 6D encodings") {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const RotationMatrix a = random_rotation(rng);
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    const RotationMatrix b = a * axis_angle_to_matrix(axis.normalized() * rng.uniform(0, 0.0099));
    REQUIRE(geodesic_distance(a, b) < 0.01);
    const SixD sa = matrix_to_sixd(a), sb = matrix_to_sixd(b);
    double d = 0;
    for (int k = 0; k < 6; ++k) d += (sa.v[k] - sb.v[k]) * (sa.v[k] - sb.v[k]);
    CHECK(std::sqrt(d) < 0.05);
  }
}

TEST_CASE("quat_to_matrix") {
  CHECK((quat_to_matrix({1, 0, 0, 0}) - RotationMatrix::Identity()).norm() < 1e-15);
  const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  CHECK((quat_to_matrix({c, 0, 0, s}) - kRotZ90).norm() < 1e-12);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    CHECK((quat_to_matrix({q[0], q[1], q[2], q[3]}) - quat_to_matrix({-q[0], -q[1], -q[2], -q[3]})).norm() < 1e-15);
  }
  CHECK(is_rotation(quat_to_matrix({1.0005, 0, 0, 0})));
  CHECK_THROWS_AS(quat_to_matrix({1.1, 0, 0, 0}), ContractError);
}

TEST_CASE("axis_angle_to_matrix") {
  CHECK(axis_angle_to_matrix(Eigen::Vector3d::Zero()) == RotationMatrix::Identity());
  CHECK((axis_angle_to_matrix(Eigen::Vector3d(0, 0, M_PI / 2)) - kRotZ90).norm() < 1e-12);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    CHECK((axis_angle_to_matrix(v) * axis_angle_to_matrix(v) - axis_angle_to_matrix(2 * v)).norm() < 1e-9);
  }
}

TEST_CASE("Euler angles round trip for every channel order") {
  Rng rng(7);
  const std::vector<std::array<int, 3>> orders{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& order : orders) {
    for (int i = 0; i < 50; ++i) {
      const std::array<double, 3> angles{rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)};
      const RotationMatrix m = euler_to_matrix(order, angles);
      const auto back = matrix_to_euler(m, order);
      CHECK((euler_to_matrix(order, back) - m).norm() < 1e-9);
    }
    // gimbal lock: middle angle ±90°
    const std::array<double, 3> locked{0.3, M_PI / 2, -0.4};
    const RotationMatrix m = euler_to_matrix(order, locked);
    CHECK((euler_to_matrix(order, matrix_to_euler(m, order)) - m).norm() < 1e-9);
  }
  const std::array<int, 1> z{2};
  const std::array<double, 1> ang{M_PI / 2};
  CHECK((euler_to_matrix(z, ang) - kRotZ90).norm() < 1e-12);
}

TEST_CASE("geodesic distance") {
  CHECK(geodesic_distance(RotationMatrix::Identity(), kRotZ90) == doctest::Approx(M_PI / 2));
  CHECK(geodesic_distance(kRotZ90, kRotZ90) == doctest::Approx(0).epsilon(1e-12));
}
