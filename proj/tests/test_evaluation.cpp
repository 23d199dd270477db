#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "mstitch/evaluation.hpp"
#include "support.hpp"

using namespace mstitch;
using testing::synthetic_motion;
using testing::toy_skeleton;

namespace {

Eigen::MatrixXd gaussian_rows(std::size_t n, std::size_t d, Rng& rng, double sigma = 1.0) {
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sigma * rng.normal();
  return m;
}

// Random orthogonal matrix from a QR of a Gaussian matrix.
Eigen::MatrixXd random_orthogonal(std::size_t d, Rng& rng) {
  return Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_rows(d, d, rng)).householderQ();
}

GaussianStats diagonal_stats(const Eigen::VectorXd& mean, const Eigen::VectorXd& var) {
  GaussianStats s;
  s.mean = mean;
  s.covariance = var.asDiagonal();
  s.samples = 1000;
  return s;
}

}  // namespace

TEST_CASE("fit_gaussian") {
  Rng rng(1);
  const Eigen::MatrixXd x = gaussian_rows(300, 4, rng);
  const auto s = fit_gaussian(x);
  CHECK_FALSE(s.shrunk);
  CHECK(s.samples == 300);
  const Eigen::VectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 299.0;
  CHECK((s.mean - mean).norm() < 1e-12);
  CHECK((s.covariance - cov).norm() < 1e-12);
  CHECK((s.covariance - s.covariance.transpose()).norm() < 1e-12);

  // n ≤ d: shrink toward the diagonal
  const Eigen::MatrixXd few = gaussian_rows(5, 8, rng);
  const auto t = fit_gaussian(few);
  CHECK(t.shrunk);
  const Eigen::VectorXd m2 = few.colwise().mean();
  const Eigen::MatrixXd c2 = few.rowwise() - m2.transpose();
  const Eigen::MatrixXd full = c2.transpose() * c2 / 4.0;
  const double lambda = 8.0 / 13.0;
  const Eigen::MatrixXd expect = (1 - lambda) * full + lambda * Eigen::MatrixXd(full.diagonal().asDiagonal());
  CHECK((t.covariance - expect).norm() < 1e-12);
  CHECK(t.covariance.diagonal().minCoeff() >= 0);
  CHECK_THROWS_AS(fit_gaussian(gaussian_rows(1, 3, rng)), ContractError);
}

TEST_CASE("fid closed forms") {
  Rng rng(2);
  const auto a = fit_gaussian(gaussian_rows(400, 6, rng));
  CHECK(std::abs(fid(a, a)) < 1e-6);

  GaussianStats shifted = a;
  Eigen::VectorXd m(6);
  m << 0.5, -1, 2, 0, 0.25, 3;
  shifted.mean += m;
  CHECK(fid(a, shifted) == doctest::Approx(m.squaredNorm()).epsilon(1e-9));

  Eigen::VectorXd mu1(3), mu2(3), v1(3), v2(3);
  mu1 << 0, 1, 2;
  mu2 << 1, 1, -1;
  v1 << 1, 4, 0.25;
  v2 << 9, 1, 0.25;
  double oracle = (mu1 - mu2).squaredNorm();
  for (int i = 0; i < 3; ++i) oracle += std::pow(std::sqrt(v1[i]) - std::sqrt(v2[i]), 2);
  CHECK(std::abs(fid(diagonal_stats(mu1, v1), diagonal_stats(mu2, v2)) - oracle) < 1e-6);

  CHECK_THROWS_AS(fid(a, diagonal_stats(mu1, v1)), DimensionError);
  GaussianStats bad = a;
  bad.mean[0] = std::nan("");
  CHECK_THROWS_AS(fid(a, bad), ContractError);
}

TEST_CASE("fid is symmetric and rotation invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd x = gaussian_rows(200, 6, rng);
    Eigen::MatrixXd y = gaussian_rows(200, 6, rng, 1.5);
    y.col(0).array() += 0.7;
    y.col(2) += 0.5 * y.col(1);
    const auto sx = fit_gaussian(x), sy = fit_gaussian(y);
    CHECK(std::abs(fid(sx, sy) - fid(sy, sx)) < 1e-6);
    const Eigen::MatrixXd q = random_orthogonal(6, rng);
    const double rotated = fid(fit_gaussian(x * q), fit_gaussian(y * q));
    CHECK(std::abs(rotated - fid(sx, sy)) < 1e-6);
    CHECK(fid(sx, sy) > 0);
  }
}

TEST_CASE("diversity") {
  Rng rng(4);
  CHECK(diversity(Eigen::MatrixXd::Ones(10, 4), 50, rng) == 0);
  Eigen::MatrixXd two(2, 3);
  two << 0, 0, 0, 3, 4, 0;
  CHECK(diversity(two, 20, rng) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(mean_pairwise_distance(two) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK_THROWS_AS(diversity(Eigen::MatrixXd::Ones(1, 3), 5, rng), ContractError);

  // E‖x − y‖ for x, y ~ N(0, σ²I_d): x − y ~ N(0, 2σ²I), so the mean is σ√2 · √2 Γ((d+1)/2) / Γ(d/2)
  const std::size_t d = 8, pairs = 20000;
  const double sigma = 0.7;
  const Eigen::MatrixXd x = gaussian_rows(40000, d, rng, sigma);
  const double expect =
      sigma * std::sqrt(2.0) * std::sqrt(2.0) * std::exp(std::lgamma((d + 1) / 2.0) - std::lgamma(d / 2.0));
  const double var = 2 * sigma * sigma * d - expect * expect;
  CHECK(std::abs(diversity(x, pairs, rng) - expect) < 4 * std::sqrt(var / pairs));

  // translation invariance
  Rng r1(9), r2(9);
  const Eigen::MatrixXd small = gaussian_rows(30, 5, rng);
  Eigen::MatrixXd moved = small;
  moved.rowwise() += Eigen::RowVectorXd::Constant(5, 3.0);
  CHECK(std::abs(diversity(small, 100, r1) - diversity(moved, 100, r2)) < 1e-12);
}

TEST_CASE("multimodality") {
  Rng rng(5);
  std::vector<Eigen::MatrixXd> same{Eigen::MatrixXd::Constant(4, 3, 1.0), Eigen::MatrixXd::Constant(4, 3, -2.0)};
  CHECK(multimodality(same) == 0);

  std::vector<Eigen::MatrixXd> groups{gaussian_rows(5, 3, rng), gaussian_rows(7, 3, rng, 2.0)};
  const double expect = (mean_pairwise_distance(groups[0]) + mean_pairwise_distance(groups[1])) / 2;
  CHECK(multimodality(groups) == doctest::Approx(expect).epsilon(1e-14));

  // a single group: exact mean over all pairs, the limit of diversity restricted to that group
  double brute = 0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < groups[1].rows(); ++i)
    for (Eigen::Index j = i + 1; j < groups[1].rows(); ++j, ++count) brute += (groups[1].row(i) - groups[1].row(j)).norm();
  CHECK(multimodality(std::span(groups).subspan(1)) == doctest::Approx(brute / count).epsilon(1e-14));
  Rng big(6);
  CHECK(diversity(groups[1], 200000, big) == doctest::Approx(brute / count).epsilon(0.01));

  std::vector<Eigen::MatrixXd> tiny{Eigen::MatrixXd::Zero(1, 3)};
  CHECK_THROWS_AS(multimodality(tiny), ContractError);
}

TEST_CASE("bootstrap") {
  Rng rng(7);
  const auto constant_metric = bootstrap(10, 5, rng, [](std::span<const std::size_t>, Rng&) { return 2.5; });
  CHECK(constant_metric.mean == 2.5);
  CHECK(constant_metric.std == 0);
  CHECK_THROWS_AS(bootstrap(10, 1, rng, [](std::span<const std::size_t>, Rng&) { return 0.0; }), ContractError);

  // resampling: indices stay in range and repeat
  bool repeated = false;
  bootstrap(20, 10, rng, [&](std::span<const std::size_t> idx, Rng&) {
    CHECK(idx.size() == 20);
    for (auto i : idx) CHECK(i < 20);
    std::vector<std::size_t> s(idx.begin(), idx.end());
    std::sort(s.begin(), s.end());
    repeated = repeated || std::adjacent_find(s.begin(), s.end()) != s.end();
    return 0.0;
  });
  CHECK(repeated);

  // std of the bootstrapped mean shrinks like 1/√n
  auto column_mean = [](const Eigen::MatrixXd& m, Rng&) { return m.col(0).mean(); };
  const auto small = bootstrap_metric(column_mean, gaussian_rows(100, 1, rng), 400, rng);
  const auto large = bootstrap_metric(column_mean, gaussian_rows(1600, 1, rng), 400, rng);
  CHECK(small.std / large.std == doctest::Approx(4.0).epsilon(0.25));
  CHECK(small.std == doctest::Approx(0.1).epsilon(0.25));
}

TEST_CASE("feature extractor") {
  const auto sk = toy_skeleton();
  std::vector<MotionSequence> seqs;
  for (std::uint64_t s = 0; s < 6; ++s) seqs.push_back(synthetic_motion(sk, 12, 15, s));
  ExtractorConfig cfg;
  cfg.block = 12;
  cfg.feature_dim = seqs[0].width();
  cfg.conv1 = 8;
  cfg.conv2 = 8;
  cfg.decoder_hidden = 32;
  CHECK(ExtractorConfig::conv_length(75) == 38);
  CHECK(ExtractorConfig::conv_length(38) == 19);
  Rng rng(8);
  FeatureExtractor ex(cfg, rng);

  const Eigen::MatrixXd f = extract_features(seqs, ex);
  CHECK(f.rows() == 6);
  CHECK(f.cols() == 256);
  std::vector<MotionSequence> twice{seqs[2], seqs[2]};
  const Eigen::MatrixXd g = extract_features(twice, ex);
  CHECK(g.row(0) == g.row(1));
  CHECK(g.row(0) == f.row(2));

  const double before = reconstruction_mse(seqs, ex);
  ExtractorTrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 3;
  const double after = train_extractor(ex, seqs, tc);
  CHECK(after < before);
  CHECK(reconstruction_mse(seqs, ex) < 0.5 * before);

  const auto path = (std::filesystem::temp_directory_path() / "mstitch_test_extractor.fex").string();
  save_extractor(ex, path);
  const auto back = load_extractor(path);
  CHECK(back.train_mse == ex.train_mse);
  CHECK(extract_features(seqs, back) == extract_features(seqs, ex));

  std::vector<MotionSequence> wrong{synthetic_motion(sk, 10, 15, 1)};
  CHECK_THROWS_AS(extract_features(wrong, ex), DimensionError);
}
