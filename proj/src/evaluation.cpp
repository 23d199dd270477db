#include "mstitch/evaluation.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "mstitch/param_io.hpp"
#include "mstitch/training.hpp"

namespace mstitch {

nlohmann::ordered_json ExtractorConfig::to_json() const {
  return {{"block", block},
          {"feature_dim", feature_dim},
          {"conv1", conv1},
          {"conv2", conv2},
          {"decoder_hidden", decoder_hidden},
          {"embedding", kEmbeddingDim}};
}

ExtractorConfig ExtractorConfig::from_json(const nlohmann::json& j) {
  ExtractorConfig c;
  c.block = j.at("block");
  c.feature_dim = j.at("feature_dim");
  c.conv1 = j.at("conv1");
  c.conv2 = j.at("conv2");
  c.decoder_hidden = j.at("decoder_hidden");
  if (j.at("embedding").get<std::size_t>() != kEmbeddingDim) throw ParseError("extractor embedding must be 256-d");
  return c;
}

FeatureExtractor::FeatureExtractor(ExtractorConfig config, Rng& rng) : config_(config) {
  if (config_.block < 1 || config_.feature_dim < 1) throw ConfigError("extractor needs block and feature_dim");
  const std::size_t l2 = ExtractorConfig::conv_length(ExtractorConfig::conv_length(config_.block));
  conv1_ = nn::Linear::create(params_, "enc.conv1", 5 * config_.feature_dim, config_.conv1, rng);
  conv2_ = nn::Linear::create(params_, "enc.conv2", 5 * config_.conv1, config_.conv2, rng);
  to_code_ = nn::Linear::create(params_, "enc.code", l2 * config_.conv2, kEmbeddingDim, rng);
  dec_hidden_ = nn::Linear::create(params_, "dec.hidden", kEmbeddingDim, config_.decoder_hidden, rng);
  dec_out_ = nn::Linear::create(params_, "dec.out", config_.decoder_hidden, config_.block * config_.feature_dim, rng);
}

Var FeatureExtractor::encode(const Var& x) const {
  if (x.rows() != config_.block || x.cols() != config_.feature_dim) {
    throw DimensionError("extractor expects " + std::to_string(config_.block) + "×" +
                         std::to_string(config_.feature_dim) + " input, got " + shape_string(x.shape()));
  }
  const Var h1 = relu(conv1_(unfold_rows(x, 5, 2, 2)));
  const Var h2 = relu(conv2_(unfold_rows(h1, 5, 2, 2)));
  return to_code_(reshape(h2, {1, h2.rows() * h2.cols()}));
}

Var FeatureExtractor::decode(const Var& code) const {
  const Var flat = dec_out_(relu(dec_hidden_(code)));
  return reshape(flat, {config_.block, config_.feature_dim});
}

double train_extractor(FeatureExtractor& extractor, std::span<const MotionSequence> train,
                       const ExtractorTrainConfig& config, std::ostream* progress) {
  if (train.empty()) throw ContractError("extractor training set is empty");
  if (config.batch_size < 1) throw ConfigError("extractor batch size must be at least 1");
  Adam optimizer(extractor.params(), config.learning_rate);
  Rng rng(config.seed);
  std::vector<Tensor> inputs;
  for (const auto& s : train) inputs.push_back(to_tensor(s));
  std::vector<std::size_t> order(train.size());
  double epoch_mse = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    epoch_mse = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      extractor.params().zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const Var x = constant(inputs[order[i]]);
        const Var diff = sub(extractor.decode(extractor.encode(x)), x);
        const Var mse = mean(mul(diff, diff));
        epoch_mse += mse.value()[0];
        backward(scale(mse, Real(1) / static_cast<Real>(end - begin)));
      }
      optimizer.step(extractor.params());
    }
    epoch_mse /= static_cast<double>(order.size());
    if (progress && (epoch + 1) % 10 == 0) *progress << "extractor epoch " << epoch + 1 << " mse " << epoch_mse << "\n";
  }
  extractor.train_mse = reconstruction_mse(train, extractor);
  return extractor.train_mse;
}

Eigen::MatrixXd extract_features(std::span<const MotionSequence> seqs, const FeatureExtractor& extractor) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(seqs.size()), static_cast<Eigen::Index>(kEmbeddingDim));
  const auto n = static_cast<std::ptrdiff_t>(seqs.size());
  FirstException error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    error.run([&] {
      NoGradGuard no_grad;
      const Var code = extractor.encode(constant(to_tensor(seqs[static_cast<std::size_t>(i)])));
      for (std::size_t k = 0; k < kEmbeddingDim; ++k) out(i, static_cast<Eigen::Index>(k)) = code.value()[k];
    });
  }
  error.rethrow();
  return out;
}

double reconstruction_mse(std::span<const MotionSequence> seqs, const FeatureExtractor& extractor) {
  if (seqs.empty()) return 0;
  NoGradGuard no_grad;
  double total = 0;
  for (const auto& s : seqs) {
    const Var x = constant(to_tensor(s));
    const Var diff = sub(extractor.decode(extractor.encode(x)), x);
    total += mean(mul(diff, diff)).value()[0];
  }
  return total / static_cast<double>(seqs.size());
}

void save_extractor(const FeatureExtractor& extractor, const std::string& path) {
  ParamFile file;
  file.header["format"] = "mstitch-extractor";
  file.header["version"] = 1;
  file.header["config"] = extractor.config().to_json();
  file.header["train_mse"] = extractor.train_mse;
  append_params(file, extractor.params());
  write_param_file(path, kExtractorMagic, std::move(file));
}

FeatureExtractor load_extractor(const std::string& path) {
  const ParamFile file = read_param_file(path, kExtractorMagic);
  ExtractorConfig config;
  try {
    config = ExtractorConfig::from_json(file.header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid extractor header: " + e.what());
  }
  Rng init(0);
  FeatureExtractor extractor(config, init);
  load_params(file, extractor.params());
  extractor.train_mse = file.header.value("train_mse", 0.0);
  return extractor;
}

// ---- statistics -----------------------------------------------------------

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ContractError(std::string(what) + " contains non-finite values");
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

GaussianStats fit_gaussian(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n < 2) throw ContractError("covariance needs at least 2 samples");
  check_finite(features, "features");
  GaussianStats s;
  s.samples = static_cast<std::size_t>(n);
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  if (n <= d) {
    const double lambda = static_cast<double>(d) / static_cast<double>(n + d);
    const Eigen::MatrixXd diag = s.covariance.diagonal().asDiagonal();
    s.covariance = (1.0 - lambda) * s.covariance + lambda * diag;
    s.shrunk = true;
  }
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows() ||
      a.covariance.rows() != a.mean.size() || a.covariance.cols() != a.covariance.rows() ||
      b.covariance.cols() != b.covariance.rows()) {
    throw DimensionError("fid: statistics have different dimensions");
  }
  check_finite(a.mean, "mean");
  check_finite(b.mean, "mean");
  check_finite(a.covariance, "covariance");
  check_finite(b.covariance, "covariance");
  // Tr((C₁C₂)^{1/2}) = Tr((√C₁ C₂ √C₁)^{1/2}), which is symmetric.
  const Eigen::MatrixXd r1 = sqrt_psd(a.covariance);
  const Eigen::MatrixXd inner = r1 * b.covariance * r1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double mean_term = (a.mean - b.mean).squaredNorm();
  return mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
}

double diversity(const Eigen::MatrixXd& features, std::size_t pair_count, Rng& rng) {
  const auto n = static_cast<std::int64_t>(features.rows());
  if (n < 2) throw ContractError("diversity needs at least 2 samples");
  if (pair_count < 1) throw ContractError("diversity needs at least one pair");
  double total = 0;
  for (std::size_t p = 0; p < pair_count; ++p) {
    const std::int64_t i = rng.uniform_int(0, n - 1);
    std::int64_t j = rng.uniform_int(0, n - 2);
    if (j >= i) ++j;
    total += (features.row(i) - features.row(j)).norm();
  }
  return total / static_cast<double>(pair_count);
}

double mean_pairwise_distance(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw ContractError("pairwise distance needs at least 2 samples");
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) total += (features.row(i) - features.row(j)).norm();
  return total / static_cast<double>(n * (n - 1) / 2);
}

double multimodality(std::span<const Eigen::MatrixXd> groups) {
  if (groups.empty()) throw ContractError("multimodality needs at least one group");
  double total = 0;
  for (const auto& g : groups) {
    if (g.rows() < 2) throw ContractError("multimodality group has fewer than 2 samples");
    total += mean_pairwise_distance(g);
  }
  return total / static_cast<double>(groups.size());
}

MeanStd bootstrap(std::size_t n, std::size_t repeats, Rng& rng,
                  const std::function<double(std::span<const std::size_t>, Rng&)>& metric) {
  if (repeats < 2) throw ContractError("bootstrap needs at least 2 repeats");
  if (n < 1) throw ContractError("bootstrap needs at least one item");
  std::vector<double> values;
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < repeats; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    values.push_back(metric(idx, rng));
  }
  MeanStd out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(repeats);
  double sq = 0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(repeats - 1));
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

MeanStd bootstrap_metric(const std::function<double(const Eigen::MatrixXd&, Rng&)>& metric,
                         const Eigen::MatrixXd& features, std::size_t repeats, Rng& rng) {
  return bootstrap(static_cast<std::size_t>(features.rows()), repeats, rng,
                   [&](std::span<const std::size_t> idx, Rng& r) { return metric(select_rows(features, idx), r); });
}

}  // namespace mstitch
