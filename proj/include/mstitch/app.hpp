#pragma once

// Library side of the command-line tool: each command is a function taking
// plain options so tests can drive it without a process boundary.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mstitch/chunk_io.hpp"
#include "mstitch/denoiser.hpp"
#include "mstitch/evaluation.hpp"
#include "mstitch/plot.hpp"
#include "mstitch/training.hpp"

namespace mstitch::app {

inline constexpr const char* kDatasetFile = "dataset.mstc";
inline constexpr const char* kManifestFile = "manifest.json";

struct PreprocessOptions {
  std::string input_dir;
  std::string out_dir;
  double fps = 15;
  std::size_t block = 75;
  std::size_t augment = 2;  // rotated copies per chunk, in addition to the chunk itself
  std::uint64_t split_seed = 0;
  double unit_scale = 1.0;
  UpAxis up = UpAxis::Y;
};

struct PreprocessReport {
  std::size_t files_ok = 0;
  std::size_t files_failed = 0;
  std::size_t source_chunks = 0;
  std::size_t total_chunks = 0;
  std::vector<std::string> errors;  // "file: message"
};

/// BVH directory → chunk dataset + manifest in out_dir. Writes nothing if no
/// file could be used.
PreprocessReport cmd_preprocess(const PreprocessOptions& options, std::ostream& log);

struct LoadedSplit {
  ChunkDataset dataset;
  Manifest manifest;
  std::vector<TrainingExample> examples(const std::vector<std::string>& ids) const;
  const std::vector<std::string>& ids(const std::string& split) const;
};
/// Reads `dir`/manifest.json and the dataset it names.
LoadedSplit load_split(const std::string& dir);

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  TrainConfig train;
  DenoiserConfig model;  // block and feature_dim come from the dataset
  bool resume = false;
};

TrainResult cmd_train(const TrainOptions& options, std::ostream& log);

struct GenerateOptions {
  std::string checkpoint;
  std::string context_path;  // .bvh file, or a preprocessed data directory
  std::string chunk_id;      // chunk to take context from (data directory input)
  std::size_t start_frame = 0;  // window start inside a BVH input
  std::vector<std::size_t> indices;  // explicit keyframes, or…
  std::size_t context_len = 0;       // …this many drawn at random
  std::string out_path;              // BVH; metadata goes to out_path + ".json"
  std::string chunk_out;             // optional single-chunk dataset copy
  std::uint64_t seed = 0;
  SampleOptions sampling;
};

MotionSequence cmd_generate(const GenerateOptions& options, std::ostream& log);

struct EvaluateOptions {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  std::string extractor;
  std::string out_path;  // text report; JSON goes to out_path + ".json"
  std::vector<std::size_t> context_lens{10, 20};
  std::size_t reps = 10;       // samples per condition
  std::size_t bootstrap = 10;  // resamples for the ± columns
  std::size_t pair_count = 300;
  std::size_t max_conditions = 0;  // 0 = every sequence in the split
  std::uint64_t seed = 0;
  SampleOptions sampling;
};

struct MetricRow {
  std::string method;
  MeanStd fid, diversity;
  std::optional<MeanStd> multimodality;
  bool shrunk_covariance = false;
};

struct EvaluationReport {
  std::string dataset;
  std::vector<MetricRow> rows;
  std::string text() const;
  nlohmann::ordered_json json() const;
};

EvaluationReport cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

struct ExtractorOptions {
  std::string data_dir;
  std::string split = "train";
  std::string out_path;
  ExtractorTrainConfig train;
};

double cmd_train_extractor(const ExtractorOptions& options, std::ostream& log);

struct PlotCommandOptions {
  std::string input;     // .bvh (context read from a sibling .json if present) or data directory
  std::string chunk_id;  // for data directory input
  std::string out_path;  // .svg
  std::vector<std::size_t> context_indices;
  PlotOptions plot;
};

void cmd_export_plot(const PlotCommandOptions& options, std::ostream& log);

/// `reps` samples for each condition, one context of `context_len` frames
/// drawn per condition. Sample k of condition c uses stream seed.split(…c, k)
/// so results do not depend on thread scheduling.
std::vector<std::vector<MotionSequence>> generate_groups(const DenoiserModel& model,
                                                         std::span<const MotionSequence> conditions,
                                                         std::size_t context_len, std::size_t reps,
                                                         std::uint64_t seed, const SampleOptions& sampling);

/// Same hierarchy and rest offsets within `tol`.
bool same_skeleton(const Skeleton& a, const Skeleton& b, double tol = 1e-6);

}  // namespace mstitch::app
