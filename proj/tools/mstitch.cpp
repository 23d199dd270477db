// mstitch: preprocess, train, generate, evaluate, train-extractor, export-plot.
//
// Every subcommand accepts --config <file.toml>; flags override file values.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mstitch/app.hpp"

namespace fs = std::filesystem;
using namespace mstitch;

namespace {

void echo_config(const CLI::App& app, const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::trunc);
  out << "[" << app.get_name() << "]\n" << app.config_to_str(true, false);
}

fs::path parent_or_here(const std::string& path) {
  const fs::path p(path);
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

ReverseMode parse_sampler(const std::string& name) {
  if (name == "direct") return ReverseMode::Direct;
  if (name == "ddpm") return ReverseMode::DdpmPosterior;
  throw CLI::ValidationError("--sampler", "expected direct or ddpm");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Keyframe-conditioned motion diffusion: data, training, sampling and metrics"};
  cli.require_subcommand(1);
  cli.set_config("--config", "", "TOML config file with one [section] per subcommand; flags override its values");
  cli.fallthrough();

  // preprocess
  app::PreprocessOptions pre;
  std::string up_axis = "y";
  auto* c_pre = cli.add_subcommand("preprocess", "BVH directory → chunk dataset + split manifest");
  c_pre->add_option("--input", pre.input_dir, "directory of .bvh files")->required()->check(CLI::ExistingDirectory);
  c_pre->add_option("--out", pre.out_dir, "output directory")->required();
  c_pre->add_option("--fps", pre.fps, "target frame rate")->capture_default_str();
  c_pre->add_option("--block", pre.block, "frames per chunk")->capture_default_str();
  c_pre->add_option("--augment", pre.augment, "rotated copies per chunk")->capture_default_str();
  c_pre->add_option("--split-seed", pre.split_seed, "seed for augmentation and the 80/10/10 split")->capture_default_str();
  c_pre->add_option("--unit-scale", pre.unit_scale, "multiplier from file units to meters")->capture_default_str();
  c_pre->add_option("--up", up_axis, "vertical axis")->check(CLI::IsMember({"y", "z"}))->capture_default_str();

  // train
  app::TrainOptions tr;
  auto* c_train = cli.add_subcommand("train", "train the denoiser");
  c_train->add_option("--data", tr.data_dir, "preprocessed data directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out_dir, "run directory for checkpoints and logs")->required();
  c_train->add_option("--batch", tr.train.batch_size, "batch size")->capture_default_str();
  c_train->add_option("--timesteps", tr.train.timesteps, "diffusion steps T")->capture_default_str();
  c_train->add_option("--epochs", tr.train.epochs, "epochs (0 writes the initial checkpoint only)")->capture_default_str();
  c_train->add_option("--lr", tr.train.learning_rate, "learning rate")->capture_default_str();
  c_train->add_option("--beta1", tr.train.beta1)->capture_default_str();
  c_train->add_option("--beta2", tr.train.beta2)->capture_default_str();
  c_train->add_option("--seed", tr.train.seed)->capture_default_str();
  c_train->add_option("--min-context", tr.train.min_context)->capture_default_str();
  c_train->add_option("--max-context", tr.train.max_context, "0 = B/2")->capture_default_str();
  c_train->add_option("--grad-clip", tr.train.grad_clip, "0 disables")->capture_default_str();
  c_train->add_option("--patience", tr.train.patience, "early-stopping patience in epochs, 0 disables")->capture_default_str();
  c_train->add_option("--layers", tr.model.layers_per_stack, "encoder layers per stack")->capture_default_str();
  c_train->add_option("--model-dim", tr.model.model_dim)->capture_default_str();
  c_train->add_option("--ff-dim", tr.model.ff_dim)->capture_default_str();
  c_train->add_option("--heads", tr.model.heads)->capture_default_str();
  c_train->add_option("--dropout", tr.model.dropout)->capture_default_str();
  c_train->add_option("--beta-min", tr.model.beta_min)->capture_default_str();
  c_train->add_option("--beta-max", tr.model.beta_max)->capture_default_str();
  c_train->add_flag("--resume", tr.resume, "continue from <out>/latest.ckpt");

  // generate
  app::GenerateOptions gen;
  std::string gen_sampler = "direct";
  auto* c_gen = cli.add_subcommand("generate", "sample a motion through given keyframes");
  c_gen->add_option("--checkpoint", gen.checkpoint)->required()->check(CLI::ExistingFile);
  c_gen->add_option("--context", gen.context_path, ".bvh file or preprocessed data directory")->required()->check(CLI::ExistingPath);
  c_gen->add_option("--chunk-id", gen.chunk_id, "chunk id inside a data directory (default: first)");
  c_gen->add_option("--start-frame", gen.start_frame, "window start inside a BVH context")->capture_default_str();
  auto* o_idx = c_gen->add_option("--indices", gen.indices, "keyframe indices")->delimiter(',');
  c_gen->add_option("--context-len", gen.context_len, "number of random keyframes")->excludes(o_idx);
  c_gen->add_option("--out", gen.out_path, "output .bvh")->required();
  c_gen->add_option("--chunk-out", gen.chunk_out, "also write the result as a one-chunk dataset");
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--sampler", gen_sampler, "direct | ddpm")->capture_default_str();
  c_gen->add_flag("--cache-context", gen.sampling.cache_context, "encode the context once");

  // evaluate
  app::EvaluateOptions ev;
  std::string ev_sampler = "direct";
  auto* c_eval = cli.add_subcommand("evaluate", "FID / Diversity / Multimodality report");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", ev.data_dir)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  c_eval->add_option("--extractor", ev.extractor, "feature extractor from train-extractor")->required();
  c_eval->add_option("--out", ev.out_path, "report path")->required();
  c_eval->add_option("--context-len", ev.context_lens, "context lengths to evaluate")->delimiter(',')->capture_default_str();
  c_eval->add_option("--reps", ev.reps, "samples per condition")->capture_default_str();
  c_eval->add_option("--bootstrap", ev.bootstrap, "bootstrap repeats")->capture_default_str();
  c_eval->add_option("--pairs", ev.pair_count, "diversity pairs")->capture_default_str();
  c_eval->add_option("--max-conditions", ev.max_conditions, "0 = whole split")->capture_default_str();
  c_eval->add_option("--seed", ev.seed)->capture_default_str();
  c_eval->add_option("--sampler", ev_sampler, "direct | ddpm")->capture_default_str();
  c_eval->add_flag("--cache-context", ev.sampling.cache_context);

  // train-extractor
  app::ExtractorOptions ex;
  auto* c_ex = cli.add_subcommand("train-extractor", "train the 256-d feature autoencoder used by evaluate");
  c_ex->add_option("--data", ex.data_dir)->required()->check(CLI::ExistingDirectory);
  c_ex->add_option("--split", ex.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  c_ex->add_option("--out", ex.out_path)->required();
  c_ex->add_option("--epochs", ex.train.epochs)->capture_default_str();
  c_ex->add_option("--batch", ex.train.batch_size)->capture_default_str();
  c_ex->add_option("--lr", ex.train.learning_rate)->capture_default_str();
  c_ex->add_option("--seed", ex.train.seed)->capture_default_str();

  // export-plot
  app::PlotCommandOptions pl;
  std::string plot_up = "y";
  auto* c_plot = cli.add_subcommand("export-plot", "SVG strip of skeleton poses");
  c_plot->add_option("--input", pl.input, ".bvh file or data directory")->required()->check(CLI::ExistingPath);
  c_plot->add_option("--chunk-id", pl.chunk_id);
  c_plot->add_option("--out", pl.out_path, "output .svg")->required();
  c_plot->add_option("--stride", pl.plot.stride)->capture_default_str();
  c_plot->add_option("--context", pl.context_indices, "frames to highlight (default: from the .json sidecar)")->delimiter(',');
  c_plot->add_option("--up", plot_up)->check(CLI::IsMember({"y", "z"}))->capture_default_str();

  try {
    cli.parse(argc, argv);
    gen.sampling.mode = parse_sampler(gen_sampler);
    ev.sampling.mode = parse_sampler(ev_sampler);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 1;
  }

  try {
    if (c_pre->parsed()) {
      pre.up = up_axis == "z" ? UpAxis::Z : UpAxis::Y;
      const auto report = app::cmd_preprocess(pre, std::cout);
      echo_config(*c_pre, pre.out_dir, "preprocess_config.toml");
      if (report.files_failed) std::cerr << report.files_failed << " file(s) skipped\n";
    } else if (c_train->parsed()) {
      echo_config(*c_train, tr.out_dir, "train_config.toml");
      const auto result = app::cmd_train(tr, std::cout);
      std::cout << "finished after " << result.epochs_completed << " epochs, " << result.steps << " steps"
                << (result.early_stopped ? " (early stop)" : "") << "\n";
    } else if (c_gen->parsed()) {
      app::cmd_generate(gen, std::cout);
      echo_config(*c_gen, parent_or_here(gen.out_path), fs::path(gen.out_path).filename().string() + ".config.toml");
    } else if (c_eval->parsed()) {
      app::cmd_evaluate(ev, std::cout);
      echo_config(*c_eval, parent_or_here(ev.out_path), fs::path(ev.out_path).filename().string() + ".config.toml");
    } else if (c_ex->parsed()) {
      app::cmd_train_extractor(ex, std::cout);
      echo_config(*c_ex, parent_or_here(ex.out_path), fs::path(ex.out_path).filename().string() + ".config.toml");
    } else if (c_plot->parsed()) {
      pl.plot.up = plot_up == "z" ? UpAxis::Z : UpAxis::Y;
      app::cmd_export_plot(pl, std::cout);
      echo_config(*c_plot, parent_or_here(pl.out_path), fs::path(pl.out_path).filename().string() + ".config.toml");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
