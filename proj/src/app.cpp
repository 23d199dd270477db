#include "mstitch/app.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mstitch/bvh.hpp"
#include "mstitch/plot.hpp"

namespace mstitch::app {

namespace fs = std::filesystem;

namespace {

Rng stream(std::uint64_t seed, std::uint64_t salt) {
  Rng base(seed);
  return base.split(salt);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string describe_context_bound(std::size_t block) {
  return "[1, B/2 = " + std::to_string(max_context_length(block)) + "] for block B = " + std::to_string(block);
}

}  // namespace

bool same_skeleton(const Skeleton& a, const Skeleton& b, double tol) {
  if (a.parents() != b.parents() || a.names() != b.names()) return false;
  for (std::size_t j = 0; j < a.joint_count(); ++j) {
    if ((a.rest_offset(j) - b.rest_offset(j)).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

// ---- preprocess -------------------------------------------------------------

namespace {

struct FileResult {
  std::optional<Skeleton> skeleton;
  double fps = 0;
  std::vector<std::pair<std::string, MotionSequence>> source_chunks;
  std::vector<std::vector<std::pair<std::string, MotionSequence>>> augmented;  // per source chunk
  std::string error;
  std::size_t frames = 0;
};

}  // namespace

PreprocessReport cmd_preprocess(const PreprocessOptions& options, std::ostream& log) {
  if (!fs::is_directory(options.input_dir)) throw std::runtime_error("input is not a directory: " + options.input_dir);
  if (options.block < 2) throw ConfigError("block must be at least 2 frames");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(options.input_dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".bvh") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .bvh files in " + options.input_dir);

  std::vector<FileResult> results(files.size());
  const auto n = static_cast<std::ptrdiff_t>(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& r = results[static_cast<std::size_t>(i)];
    try {
      const bvh::Clip clip = bvh::load(files[static_cast<std::size_t>(i)].string(), options.unit_scale);
      const MotionSequence full = bvh::to_sequence(clip);
      validate_poses(full);
      r.frames = full.frame_count();
      const MotionSequence down = downsample(full, options.fps);
      r.fps = down.fps();
      r.skeleton = clip.skeleton;
      Rng rng = stream(options.split_seed, static_cast<std::uint64_t>(i) + 1);
      const std::string stem = files[static_cast<std::size_t>(i)].stem().string();
      const auto chunks = chunk(down, options.block);
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        char id[32];
        std::snprintf(id, sizeof id, "/c%04zu", c);
        const std::string base = stem + id;
        r.source_chunks.emplace_back(base, chunks[c]);
        auto copies = augment_rotations(chunks[c], options.augment, rng, options.up);
        std::vector<std::pair<std::string, MotionSequence>> named;
        for (std::size_t a = 0; a < copies.size(); ++a) named.emplace_back(base + "/r" + std::to_string(a + 1), std::move(copies[a]));
        r.augmented.push_back(std::move(named));
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }

  PreprocessReport report;
  std::optional<Skeleton> skeleton;
  double fps = 0;
  std::vector<std::string> base_ids;
  std::map<std::string, std::vector<std::string>> family;  // base id → itself plus rotated copies
  ChunkDataset data;
  data.block = options.block;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& r = results[i];
    const std::string name = files[i].filename().string();
    if (r.error.empty() && skeleton && !same_skeleton(*skeleton, *r.skeleton)) {
      r.error = "skeleton differs from the first file's hierarchy";
    }
    if (r.error.empty() && skeleton && std::abs(r.fps - fps) > 1e-9) {
      r.error = "frame rate after downsampling (" + std::to_string(r.fps) + ") differs from " + std::to_string(fps);
    }
    if (!r.error.empty()) {
      ++report.files_failed;
      report.errors.push_back(name + ": " + r.error);
      log << "  FAIL " << name << ": " << r.error << "\n";
      continue;
    }
    if (!skeleton) {
      skeleton = r.skeleton;
      fps = r.fps;
    }
    ++report.files_ok;
    log << "  ok   " << name << ": " << r.frames << " frames → " << r.source_chunks.size() << " chunks at "
        << r.fps << " fps\n";
    for (std::size_t c = 0; c < r.source_chunks.size(); ++c) {
      auto& [id, seq] = r.source_chunks[c];
      base_ids.push_back(id);
      family[id].push_back(id);
      data.ids.push_back(id);
      data.chunks.push_back(seq);
      for (auto& [aid, aseq] : r.augmented[c]) {
        family[id].push_back(aid);
        data.ids.push_back(aid);
        data.chunks.push_back(std::move(aseq));
      }
    }
  }
  if (report.files_ok == 0) throw std::runtime_error("no usable BVH files (" + std::to_string(report.files_failed) + " failed)");

  // Rebind every chunk to the shared skeleton instance.
  data.skeleton = std::make_shared<const Skeleton>(*skeleton);
  data.fps = fps;
  for (auto& c : data.chunks) c = MotionSequence(data.skeleton, fps, c.values());

  report.source_chunks = base_ids.size();
  report.total_chunks = data.ids.size();
  const DatasetSplit base_split = split_dataset(base_ids, options.split_seed);
  Manifest manifest;
  manifest.dataset = kDatasetFile;
  manifest.split.seed = options.split_seed;
  auto expand = [&](const std::vector<std::string>& ids, std::vector<std::string>& out) {
    for (const auto& id : ids) out.insert(out.end(), family[id].begin(), family[id].end());
  };
  expand(base_split.train, manifest.split.train);
  expand(base_split.val, manifest.split.val);
  expand(base_split.test, manifest.split.test);
  manifest.settings = {{"fps", std::to_string(options.fps)},
                       {"block", std::to_string(options.block)},
                       {"augment", std::to_string(options.augment)},
                       {"unit_scale", std::to_string(options.unit_scale)},
                       {"up_axis", options.up == UpAxis::Y ? "y" : "z"}};

  fs::create_directories(options.out_dir);
  write_dataset(data, (fs::path(options.out_dir) / kDatasetFile).string());
  write_manifest(manifest, (fs::path(options.out_dir) / kManifestFile).string());
  log << report.files_ok << " files, " << report.source_chunks << " chunks, " << report.total_chunks
      << " with augmentation; split " << manifest.split.train.size() << "/" << manifest.split.val.size() << "/"
      << manifest.split.test.size() << "\n";
  return report;
}

// ---- data loading -----------------------------------------------------------

std::vector<TrainingExample> LoadedSplit::examples(const std::vector<std::string>& ids) const {
  std::vector<TrainingExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back({id, dataset.at(id)});
  return out;
}

const std::vector<std::string>& LoadedSplit::ids(const std::string& split) const {
  if (split == "train") return manifest.split.train;
  if (split == "val") return manifest.split.val;
  if (split == "test") return manifest.split.test;
  throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

LoadedSplit load_split(const std::string& dir) {
  LoadedSplit s;
  s.manifest = read_manifest((fs::path(dir) / kManifestFile).string());
  s.dataset = read_dataset((fs::path(dir) / s.manifest.dataset).string());
  return s;
}

// ---- train ------------------------------------------------------------------

TrainResult cmd_train(const TrainOptions& options, std::ostream& log) {
  const LoadedSplit data = load_split(options.data_dir);
  const auto train = data.examples(data.manifest.split.train);
  const auto val = data.examples(data.manifest.split.val);
  const fs::path latest = fs::path(options.out_dir) / "latest.ckpt";

  if (options.resume) {
    auto [model, ck] = load_checkpoint(latest.string());
    if (!ck.state) throw std::runtime_error(latest.string() + " carries no training state");
    if (!same_skeleton(ck.skeleton, *data.dataset.skeleton)) throw std::runtime_error("checkpoint skeleton differs from the dataset");
    log << "resuming at epoch " << ck.state->epoch << ", step " << ck.state->step << "\n";
    return run_training(train, val, model, *data.dataset.skeleton, data.dataset.fps, options.train, options.out_dir,
                        ck.state, &log);
  }
  DenoiserConfig cfg = options.model;
  cfg.block = data.dataset.block;
  cfg.feature_dim = feature_width(data.dataset.skeleton->joint_count());
  cfg.timesteps = options.train.timesteps;
  Rng init = stream(options.train.seed, 0x1417);
  DenoiserModel model(cfg, init);
  log << "denoiser: " << model.params().scalar_count() << " parameters, " << train.size() << " train / " << val.size()
      << " val chunks\n";
  return run_training(train, val, model, *data.dataset.skeleton, data.dataset.fps, options.train, options.out_dir,
                      std::nullopt, &log);
}

// ---- generate -----------------------------------------------------------------

namespace {

bool is_bvh(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".bvh";
}

MotionSequence load_window(const std::string& path, const std::string& chunk_id, std::size_t start,
                           const Checkpoint& ck, const std::shared_ptr<const Skeleton>& skeleton) {
  const std::size_t block = ck.config.block;
  if (is_bvh(path)) {
    MotionSequence seq = bvh::to_sequence(bvh::load(path));
    if (!same_skeleton(seq.skeleton(), *skeleton)) throw std::runtime_error(path + ": skeleton differs from the checkpoint's");
    if (seq.fps() > ck.fps * 1.01) seq = downsample(seq, ck.fps);
    if (start + block > seq.frame_count()) {
      throw std::runtime_error(path + ": needs " + std::to_string(block) + " frames from " + std::to_string(start) +
                               ", has " + std::to_string(seq.frame_count()));
    }
    MotionSequence window = seq.slice(start, start + block);
    window.rebase();
    return MotionSequence(skeleton, ck.fps, window.values());
  }
  const LoadedSplit data = load_split(path);
  if (!same_skeleton(*data.dataset.skeleton, *skeleton)) throw std::runtime_error(path + ": skeleton differs from the checkpoint's");
  if (data.dataset.block != block) throw std::runtime_error(path + ": dataset block differs from the checkpoint's");
  const std::string id = chunk_id.empty() ? data.dataset.ids.front() : chunk_id;
  return MotionSequence(skeleton, ck.fps, data.dataset.at(id).values());
}

}  // namespace

MotionSequence cmd_generate(const GenerateOptions& options, std::ostream& log) {
  auto [model, ck] = load_checkpoint(options.checkpoint);
  const auto skeleton = std::make_shared<const Skeleton>(ck.skeleton);
  const std::size_t block = ck.config.block;
  const MotionSequence source = load_window(options.context_path, options.chunk_id, options.start_frame, ck, skeleton);

  Rng rng(options.seed);
  Context ctx;
  if (!options.indices.empty()) {
    if (options.indices.size() > max_context_length(block)) {
      throw ContractError("context length " + std::to_string(options.indices.size()) + " outside " +
                          describe_context_bound(block));
    }
    ctx = make_context(source, options.indices);
  } else {
    if (options.context_len < 1 || options.context_len > max_context_length(block)) {
      throw ContractError("context length " + std::to_string(options.context_len) + " outside " +
                          describe_context_bound(block));
    }
    ctx = sample_context(source, options.context_len, rng);
  }
  const MotionSequence out = sample(ctx, model, ck.config.schedule(), rng, skeleton, ck.fps, options.sampling);

  if (!options.out_path.empty()) {
    const fs::path out_path(options.out_path);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    bvh::save(bvh::from_sequence(out), options.out_path);
    nlohmann::ordered_json meta{{"checkpoint", fs::path(options.checkpoint).filename().string()},
                                {"source", fs::path(options.context_path).filename().string()},
                                {"chunk_id", options.chunk_id},
                                {"seed", options.seed},
                                {"frames", out.frame_count()},
                                {"fps", out.fps()},
                                {"context_indices", ctx.indices},
                                {"sampler", options.sampling.mode == ReverseMode::Direct ? "direct" : "ddpm"}};
    write_text(options.out_path + ".json", meta.dump(2) + "\n");
  }
  if (!options.chunk_out.empty()) {
    ChunkDataset single;
    single.skeleton = skeleton;
    single.fps = ck.fps;
    single.block = block;
    single.ids = {"generated"};
    single.chunks = {out};
    write_dataset(single, options.chunk_out);
  }
  log << "generated " << out.frame_count() << " frames at " << out.fps() << " fps from " << ctx.size()
      << " keyframes\n";
  return out;
}

std::vector<std::vector<MotionSequence>> generate_groups(const DenoiserModel& model,
                                                         std::span<const MotionSequence> conditions,
                                                         std::size_t context_len, std::size_t reps,
                                                         std::uint64_t seed, const SampleOptions& sampling) {
  const DiffusionSchedule sched = model.config().schedule();
  std::vector<Context> contexts;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    Rng r = stream(seed, (context_len << 32) | c);
    contexts.push_back(sample_context(conditions[c], context_len, r));
  }
  std::vector<std::vector<MotionSequence>> groups(conditions.size(), std::vector<MotionSequence>(reps));
  const auto total = static_cast<std::ptrdiff_t>(conditions.size() * reps);
  FirstException error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    error.run([&] {
      const auto c = static_cast<std::size_t>(k) / reps;
      const auto r = static_cast<std::size_t>(k) % reps;
      Rng rng = stream(seed, (std::uint64_t{context_len} << 40) + c * reps + r + 1);
      groups[c][r] =
          sample(contexts[c], model, sched, rng, conditions[c].skeleton_ptr(), conditions[c].fps(), sampling);
    });
  }
  error.rethrow();
  return groups;
}

// ---- evaluate -----------------------------------------------------------------

namespace {

std::string pm(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", m.mean, m.std);
  return buf;
}

nlohmann::ordered_json ms_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

std::string EvaluationReport::text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-14s %-18s %-18s %-18s\n", "Dataset", "Method", "FID", "Diversity",
                "Multimodality");
  out << line;
  bool any_shrunk = false;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %-14s %-18s %-18s %-18s\n", dataset.c_str(), r.method.c_str(),
                  (pm(r.fid) + (r.shrunk_covariance ? "*" : "")).c_str(), pm(r.diversity).c_str(),
                  r.multimodality ? pm(*r.multimodality).c_str() : "-");
    out << line;
    any_shrunk = any_shrunk || r.shrunk_covariance;
  }
  if (any_shrunk) out << "* covariance estimated with diagonal shrinkage (too few samples for a full 256-d fit)\n";
  out << "FID values are relative to the feature extractor used.\n";
  return out.str();
}

nlohmann::ordered_json EvaluationReport::json() const {
  nlohmann::ordered_json j{{"dataset", dataset}, {"rows", nlohmann::ordered_json::array()}};
  for (const auto& r : rows) {
    nlohmann::ordered_json row{{"method", r.method},
                               {"fid", ms_json(r.fid)},
                               {"diversity", ms_json(r.diversity)},
                               {"shrunk_covariance", r.shrunk_covariance}};
    row["multimodality"] = r.multimodality ? ms_json(*r.multimodality) : nlohmann::ordered_json(nullptr);
    j["rows"].push_back(row);
  }
  return j;
}

EvaluationReport cmd_evaluate(const EvaluateOptions& options, std::ostream& log) {
  if (!fs::exists(options.extractor)) {
    throw std::runtime_error("feature extractor '" + options.extractor +
                             "' not found; create one with `mstitch train-extractor --data <dir> --out <file>`");
  }
  const FeatureExtractor extractor = load_extractor(options.extractor);
  auto [model, ck] = load_checkpoint(options.checkpoint);
  const LoadedSplit data = load_split(options.data_dir);
  if (!same_skeleton(ck.skeleton, *data.dataset.skeleton)) throw std::runtime_error("checkpoint skeleton differs from the dataset");
  const std::vector<MotionSequence> real = data.dataset.select(data.ids(options.split));
  if (real.size() < 4) throw std::runtime_error("split '" + options.split + "' has fewer than 4 sequences");
  if (extractor.config().block != ck.config.block || extractor.config().feature_dim != ck.config.feature_dim) {
    throw DimensionError("extractor input shape differs from the checkpoint's");
  }

  EvaluationReport report;
  report.dataset = options.split;
  Rng rng(options.seed);
  const Eigen::MatrixXd real_features = extract_features(real, extractor);
  const GaussianStats real_stats = fit_gaussian(real_features);

  // Real row: two random halves against each other.
  {
    std::vector<std::size_t> perm(real.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i-- > 1;) std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    const std::size_t half = perm.size() / 2;
    const Eigen::MatrixXd a = select_rows(real_features, std::span(perm).first(half));
    const Eigen::MatrixXd b = select_rows(real_features, std::span(perm).subspan(half, half));
    MetricRow row;
    row.method = "Real";
    row.fid = bootstrap(half, options.bootstrap, rng, [&](std::span<const std::size_t> idx, Rng&) {
      return fid(fit_gaussian(select_rows(a, idx)), fit_gaussian(select_rows(b, idx)));
    });
    row.diversity = bootstrap_metric([&](const Eigen::MatrixXd& f, Rng& r) { return diversity(f, options.pair_count, r); },
                                     real_features, options.bootstrap, rng);
    row.shrunk_covariance = static_cast<Eigen::Index>(half) <= real_features.cols();
    report.rows.push_back(row);
  }

  const std::size_t n_cond = options.max_conditions ? std::min(options.max_conditions, real.size()) : real.size();
  const std::span<const MotionSequence> conditions(real.data(), n_cond);
  if (options.reps < 2) throw ConfigError("need at least 2 samples per condition for multimodality");
  for (const std::size_t len : options.context_lens) {
    if (len < 1 || len > max_context_length(ck.config.block)) {
      throw ContractError("context length " + std::to_string(len) + " outside " + describe_context_bound(ck.config.block));
    }
    log << "sampling |c|=" << len << ": " << n_cond << " conditions × " << options.reps << "\n";
    const auto groups = generate_groups(model, conditions, len, options.reps, options.seed, options.sampling);
    std::vector<MotionSequence> flat;
    for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
    const Eigen::MatrixXd gen = extract_features(flat, extractor);
    std::vector<Eigen::MatrixXd> group_features;
    for (std::size_t c = 0; c < n_cond; ++c) group_features.push_back(gen.middleRows(static_cast<Eigen::Index>(c * options.reps), static_cast<Eigen::Index>(options.reps)));

    auto rows_of = [&](std::span<const std::size_t> conds) {
      std::vector<std::size_t> rows;
      for (std::size_t c : conds)
        for (std::size_t r = 0; r < options.reps; ++r) rows.push_back(c * options.reps + r);
      return select_rows(gen, rows);
    };
    MetricRow row;
    row.method = "Ours_|c|=" + std::to_string(len);
    row.fid = bootstrap(n_cond, options.bootstrap, rng,
                        [&](std::span<const std::size_t> idx, Rng&) { return fid(real_stats, fit_gaussian(rows_of(idx))); });
    row.diversity = bootstrap(n_cond, options.bootstrap, rng, [&](std::span<const std::size_t> idx, Rng& r) {
      return diversity(rows_of(idx), options.pair_count, r);
    });
    row.multimodality = bootstrap(n_cond, options.bootstrap, rng, [&](std::span<const std::size_t> idx, Rng&) {
      std::vector<Eigen::MatrixXd> chosen;
      for (std::size_t c : idx) chosen.push_back(group_features[c]);
      return multimodality(chosen);
    });
    row.shrunk_covariance = real_stats.shrunk || static_cast<Eigen::Index>(n_cond * options.reps) <= gen.cols();
    report.rows.push_back(row);
  }

  if (!options.out_path.empty()) {
    const fs::path out(options.out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, report.text());
    write_text(options.out_path + ".json", report.json().dump(2) + "\n");
  }
  log << report.text();
  return report;
}

// ---- feature extractor --------------------------------------------------------

double cmd_train_extractor(const ExtractorOptions& options, std::ostream& log) {
  const LoadedSplit data = load_split(options.data_dir);
  const std::vector<MotionSequence> train = data.dataset.select(data.ids(options.split));
  ExtractorConfig cfg;
  cfg.block = data.dataset.block;
  cfg.feature_dim = feature_width(data.dataset.skeleton->joint_count());
  Rng init = stream(options.train.seed, 0xfea7);
  FeatureExtractor extractor(cfg, init);
  const double mse = train_extractor(extractor, train, options.train, &log);
  const fs::path out(options.out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_extractor(extractor, options.out_path);
  log << "extractor trained on " << train.size() << " sequences, reconstruction MSE " << mse << "\n";
  return mse;
}

// ---- plot ---------------------------------------------------------------------

void cmd_export_plot(const PlotCommandOptions& options, std::ostream& log) {
  MotionSequence seq;
  std::vector<std::size_t> context = options.context_indices;
  if (is_bvh(options.input)) {
    seq = bvh::to_sequence(bvh::load(options.input));
    const fs::path sidecar = options.input + ".json";
    if (context.empty() && fs::exists(sidecar)) {
      std::ifstream in(sidecar);
      const auto meta = nlohmann::json::parse(in);
      if (meta.contains("context_indices")) context = meta["context_indices"].get<std::vector<std::size_t>>();
    }
  } else {
    const LoadedSplit data = load_split(options.input);
    seq = data.dataset.at(options.chunk_id.empty() ? data.dataset.ids.front() : options.chunk_id);
  }
  const std::string svg = render_strip_svg(seq, context, options.plot);
  const fs::path out(options.out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, svg);
  log << "wrote " << plotted_frames(seq.frame_count(), options.plot.stride).size() << " frames to " << options.out_path
      << "\n";
}

}  // namespace mstitch::app
