#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mstitch/losses.hpp"
#include "support.hpp"

using namespace mstitch;
using testing::oracle_fk;
using testing::random_rotation;
using testing::random_skeleton;

namespace {

// sqrt(0 + 1e-12)
constexpr double kFloor = 1e-6;

Tensor random_motion(std::size_t frames, std::size_t joints, Rng& rng) {
  Tensor t({frames, feature_width(joints)});
  for (std::size_t f = 0; f < frames; ++f) {
    for (int k = 0; k < 3; ++k) t.at(f, k) = rng.normal();
    for (std::size_t j = 0; j < joints; ++j) {
      const SixD s = matrix_to_sixd(random_rotation(rng));
      for (int k = 0; k < 6; ++k) t.at(f, 3 + 6 * j + k) = s.v[k];
    }
  }
  return t;
}

double flat_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

// FK through the test oracle, frames × (J·3) flattened.
std::vector<std::vector<double>> oracle_positions(const Tensor& x, const Skeleton& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t f = 0; f < x.rows(); ++f) {
    std::vector<Eigen::Matrix3d> local;
    for (std::size_t j = 0; j < s.joint_count(); ++j) {
      SixD six;
      for (int k = 0; k < 6; ++k) six.v[k] = x.at(f, 3 + 6 * j + k);
      local.push_back(sixd_to_matrix(six));
    }
    const auto p = oracle_fk(s.parents(), s.rest_offsets(), local, Eigen::Vector3d(x.at(f, 0), x.at(f, 1), x.at(f, 2)));
    std::vector<double> row;
    for (const auto& v : p) row.insert(row.end(), {v.x(), v.y(), v.z()});
    out.push_back(row);
  }
  return out;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<double> differences(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (std::size_t f = 1; f < rows.size(); ++f)
    for (std::size_t k = 0; k < rows[f].size(); ++k) out.push_back(rows[f][k] - rows[f - 1][k]);
  return out;
}

double value(const Var& v) { return v.value()[0]; }

Tensor add_root_offset(Tensor t, const Eigen::Vector3d& d) {
  for (std::size_t f = 0; f < t.rows(); ++f)
    for (int k = 0; k < 3; ++k) t.at(f, k) += d[k];
  return t;
}

}  // namespace

TEST_CASE("model loss") {
  Rng rng(1);
  const Tensor a = random_motion(6, 3, rng), b = random_motion(6, 3, rng);
  CHECK(value(model_loss(constant(a), constant(a))) == doctest::Approx(kFloor).epsilon(1e-12));
  Tensor shifted = a;
  for (auto& v : shifted.values()) v += 0.25;
  CHECK(value(model_loss(constant(shifted), constant(a))) == doctest::Approx(0.25).epsilon(1e-10));
  const std::vector<double> va(a.values().begin(), a.values().end()), vb(b.values().begin(), b.values().end());
  CHECK(std::abs(value(model_loss(constant(a), constant(b))) - flat_rmse(va, vb)) < 1e-12);
  CHECK_THROWS_AS(model_loss(constant(a), constant(Tensor({5, a.cols()}))), DimensionError);
}

TEST_CASE("reconstruction loss") {
  Rng rng(2);
  const Skeleton sk = random_skeleton(8, rng);
  const Tensor a = random_motion(5, 8, rng), b = random_motion(5, 8, rng);
  CHECK(value(reconstruction_loss(constant(a), constant(a), sk)) == doctest::Approx(kFloor).epsilon(1e-12));
  const Eigen::Vector3d d(0.3, -0.4, 1.2);
  CHECK(value(reconstruction_loss(constant(add_root_offset(a, d)), constant(a), sk)) ==
        doctest::Approx(d.norm() / std::sqrt(3.0)).epsilon(1e-9));
  const double oracle = flat_rmse(flatten(oracle_positions(a, sk)), flatten(oracle_positions(b, sk)));
  CHECK(std::abs(value(reconstruction_loss(constant(a), constant(b), sk)) - oracle) < 1e-9);
}

TEST_CASE("context loss") {
  Rng rng(3);
  const Skeleton sk = random_skeleton(4, rng);
  const Tensor a = random_motion(6, 4, rng), b = random_motion(6, 4, rng);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  CHECK(value(context_loss(constant(a), constant(b), all, sk)) ==
        doctest::Approx(value(reconstruction_loss(constant(a), constant(b), sk))).epsilon(1e-14));

  // differences only at frames 1 and 4
  Tensor c = a;
  for (std::size_t f : {1, 4})
    for (int k = 0; k < 3; ++k) c.at(f, k) += 1.0;
  const std::vector<std::size_t> keep{0, 2, 5};
  CHECK(value(context_loss(constant(c), constant(a), keep, sk)) == doctest::Approx(kFloor).epsilon(1e-9));

  const std::vector<std::size_t> one{4};
  const auto pa = oracle_positions(a, sk), pb = oracle_positions(b, sk);
  CHECK(std::abs(value(context_loss(constant(a), constant(b), one, sk)) - flat_rmse(pa[4], pb[4])) < 1e-9);
  CHECK_THROWS_AS(context_loss(constant(a), constant(b), std::vector<std::size_t>{}, sk), ContractError);
}

TEST_CASE("rotation velocity loss") {
  Rng rng(4);
  const Tensor a = random_motion(7, 2, rng);
  CHECK(value(rotation_velocity_loss(constant(a), constant(a))) == doctest::Approx(kFloor).epsilon(1e-12));
  Tensor shifted = a;
  for (auto& v : shifted.values()) v -= 3.0;
  CHECK(value(rotation_velocity_loss(constant(shifted), constant(a))) < 1e-5);
  Tensor ramp = a;
  const double s = 0.07;
  for (std::size_t f = 0; f < ramp.rows(); ++f)
    for (std::size_t c = 0; c < ramp.cols(); ++c) ramp.at(f, c) += s * static_cast<double>(f);
  CHECK(value(rotation_velocity_loss(constant(ramp), constant(a))) == doctest::Approx(s).epsilon(1e-9));
  CHECK_THROWS_AS(rotation_velocity_loss(constant(Tensor({1, 15})), constant(Tensor({1, 15}))), ContractError);
}

TEST_CASE("position velocity loss") {
  Rng rng(5);
  const Skeleton sk = random_skeleton(5, rng);
  const Tensor a = random_motion(6, 5, rng), b = random_motion(6, 5, rng);
  CHECK(value(position_velocity_loss(constant(a), constant(a), sk)) == doctest::Approx(kFloor).epsilon(1e-12));
  CHECK(value(position_velocity_loss(constant(add_root_offset(a, {1, 2, 3})), constant(a), sk)) < 1e-5);
  const double oracle = flat_rmse(differences(oracle_positions(a, sk)), differences(oracle_positions(b, sk)));
  CHECK(std::abs(value(position_velocity_loss(constant(a), constant(b), sk)) - oracle) < 1e-9);
  CHECK_THROWS_AS(position_velocity_loss(constant(Tensor({1, 33})), constant(Tensor({1, 33})), sk), ContractError);
}

TEST_CASE("total loss is the plain sum of the five terms") {
  Rng rng(6);
  const Skeleton sk = random_skeleton(3, rng);
  const Tensor a = random_motion(5, 3, rng), b = random_motion(5, 3, rng);
  const std::vector<std::size_t> idx{1, 3};
  const auto terms = total_loss(constant(a), constant(b), idx, sk);
  const LossBreakdown l = terms.values();
  CHECK(l.total == l.model + l.reconstruction + l.context + l.rotation_velocity + l.position_velocity);
  CHECK(l.model == value(model_loss(constant(a), constant(b))));
  CHECK(l.reconstruction == value(reconstruction_loss(constant(a), constant(b), sk)));
  CHECK(l.context == value(context_loss(constant(a), constant(b), idx, sk)));
  CHECK(l.rotation_velocity == value(rotation_velocity_loss(constant(a), constant(b))));
  CHECK(l.position_velocity == value(position_velocity_loss(constant(a), constant(b), sk)));

  const LossBreakdown z = total_loss(constant(a), constant(a), idx, sk).values();
  for (double v : {z.model, z.reconstruction, z.context, z.rotation_velocity, z.position_velocity})
    CHECK(v == doctest::Approx(kFloor).epsilon(1e-9));

  LossWeights w;
  w.context = 2.0;
  const LossBreakdown lw = total_loss(constant(a), constant(b), idx, sk, w).values();
  CHECK(lw.total == doctest::Approx(l.total + l.context).epsilon(1e-14));
}

TEST_CASE("every term is symmetric") {
  Rng rng(7);
  const Skeleton sk = random_skeleton(4, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_motion(4, 4, rng), b = random_motion(4, 4, rng);
    const std::vector<std::size_t> idx{0, 2};
    const auto ab = total_loss(constant(a), constant(b), idx, sk).values();
    const auto ba = total_loss(constant(b), constant(a), idx, sk).values();
    CHECK(ab.model == doctest::Approx(ba.model).epsilon(1e-14));
    CHECK(ab.reconstruction == doctest::Approx(ba.reconstruction).epsilon(1e-14));
    CHECK(ab.context == doctest::Approx(ba.context).epsilon(1e-14));
    CHECK(ab.rotation_velocity == doctest::Approx(ba.rotation_velocity).epsilon(1e-14));
    CHECK(ab.position_velocity == doctest::Approx(ba.position_velocity).epsilon(1e-14));
    CHECK(ab.total >= 0);
  }
}

TEST_CASE("total loss gradient matches central differences") {
  Rng rng(8);
  const Skeleton sk = random_skeleton(2, rng);
  const Var x = parameter(random_motion(3, 2, rng));
  const Tensor target = random_motion(3, 2, rng);
  const std::vector<std::size_t> idx{0, 2};
  const auto check = testing::grad_check([&] { return total_loss(x, constant(target), idx, sk).total; }, {x});
  CHECK(check.rel_error() < 1e-5);
}
