#pragma once

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <span>

#include "mstitch/motion.hpp"
#include "mstitch/nn.hpp"

namespace mstitch {

inline constexpr std::size_t kEmbeddingDim = 256;

struct ExtractorConfig {
  std::size_t block = 75;
  std::size_t feature_dim = 0;
  std::size_t conv1 = 64;
  std::size_t conv2 = 128;
  std::size_t decoder_hidden = 512;

  /// Length after one kernel-5, stride-2, pad-2 convolution.
  static std::size_t conv_length(std::size_t n) { return (n + 4 - 5) / 2 + 1; }
  nlohmann::ordered_json to_json() const;
  static ExtractorConfig from_json(const nlohmann::json& j);
};

/// Temporal-convolution autoencoder. The encoder maps one B × F sequence to
/// a 256-d embedding; the decoder exists only to train it.
class FeatureExtractor {
 public:
  FeatureExtractor(ExtractorConfig config, Rng& rng);

  const ExtractorConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  Var encode(const Var& x) const;      // B×F → 1×256
  Var decode(const Var& code) const;   // 1×256 → B×F
  /// Reconstruction MSE recorded at the end of training (0 if untrained).
  double train_mse = 0;

 private:
  ExtractorConfig config_;
  nn::ParamStore params_;
  nn::Linear conv1_, conv2_, to_code_, dec_hidden_, dec_out_;
};

struct ExtractorTrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Plain reconstruction-MSE training; returns the final mean train MSE.
double train_extractor(FeatureExtractor& extractor, std::span<const MotionSequence> train,
                       const ExtractorTrainConfig& config, std::ostream* progress = nullptr);

/// n × 256 embeddings, computed in parallel across sequences.
Eigen::MatrixXd extract_features(std::span<const MotionSequence> seqs, const FeatureExtractor& extractor);
/// Mean reconstruction MSE of the autoencoder on `seqs`.
double reconstruction_mse(std::span<const MotionSequence> seqs, const FeatureExtractor& extractor);

inline constexpr char kExtractorMagic[8] = {'M', 'S', 'F', 'E', 'X', '0', '1', '\0'};
void save_extractor(const FeatureExtractor& extractor, const std::string& path);
FeatureExtractor load_extractor(const std::string& path);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  /// True when n ≤ dim forced the diagonal-plus-shrinkage estimate.
  bool shrunk = false;
  std::size_t samples = 0;
};

/// Mean and (n − 1)-normalized covariance of the rows. With n ≤ dim the
/// covariance is pulled toward its diagonal by λ = dim / (n + dim).
GaussianStats fit_gaussian(const Eigen::MatrixXd& features);

/// ‖μ₁ − μ₂‖² + Tr(C₁ + C₂ − 2(C₁C₂)^{1/2}).
double fid(const GaussianStats& a, const GaussianStats& b);

/// Mean distance over `pair_count` random pairs of distinct rows.
double diversity(const Eigen::MatrixXd& features, std::size_t pair_count, Rng& rng);
/// Mean over all distinct row pairs.
double mean_pairwise_distance(const Eigen::MatrixXd& features);
/// Mean over groups of each group's mean pairwise distance.
double multimodality(std::span<const Eigen::MatrixXd> groups);

struct MeanStd {
  double mean = 0;
  double std = 0;
};

/// Evaluates `metric` on `repeats` resamples (with replacement) of the
/// item indices 0..n−1 and reports mean and sample standard deviation.
MeanStd bootstrap(std::size_t n, std::size_t repeats, Rng& rng,
                  const std::function<double(std::span<const std::size_t>, Rng&)>& metric);

/// bootstrap over feature rows.
MeanStd bootstrap_metric(const std::function<double(const Eigen::MatrixXd&, Rng&)>& metric,
                         const Eigen::MatrixXd& features, std::size_t repeats, Rng& rng);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows);

}  // namespace mstitch
