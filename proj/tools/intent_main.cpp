// intent: data generation, training, single-image adaptation and experiment sweeps.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "intent/adaptation.hpp"
#include "intent/checkpoint.hpp"
#include "intent/dataset.hpp"
#include "intent/errors.hpp"
#include "intent/harness.hpp"
#include "intent/pgm.hpp"
#include "intent/trainer.hpp"

namespace fs = std::filesystem;
using namespace intent;

namespace {

enum Exit { kOk = 0, kConfigExit = 2, kDataExit = 3 };

// Command-line values that override the config file when given.
struct Overrides {
  std::optional<std::string> root;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> trials;
  std::optional<double> c;
  std::optional<double> rho;
  std::vector<std::string> strategies;
  std::vector<std::string> targets;
  std::optional<int> max_target_images;
  bool verbose = false;

  void add_to(CLI::App* cmd, bool experiment) {
    cmd->add_option("--root", root, "dataset directory");
    cmd->add_option("--seed", seed, "dataset seed (gen-data) or base training seed");
    cmd->add_option("--epochs", epochs, "maximum training epochs");
    cmd->add_flag("--verbose", verbose, "print per-epoch progress");
    if (experiment) {
      cmd->add_option("--trials", trials, "number of trials");
      cmd->add_option("--c", c, "lambda grid step");
      cmd->add_option("--rho", rho, "sharpness radius");
      cmd->add_option("--strategies", strategies, "weighting strategies");
      cmd->add_option("--targets", targets, "target domains");
      cmd->add_option("--max-target-images", max_target_images, "evaluate at most this many images per target");
    }
  }

  void apply(RunConfig& cfg, bool dataset_seed) const {
    if (root) cfg.dataset.root = *root;
    if (seed) (dataset_seed ? cfg.dataset.seed : cfg.experiment.seed) = *seed;
    if (epochs) cfg.train.epochs = *epochs;
    if (verbose) cfg.train.verbose = true;
    if (trials) cfg.experiment.trials = *trials;
    if (c) cfg.experiment.c = *c;
    if (rho) cfg.experiment.rho = *rho;
    if (!strategies.empty()) {
      cfg.experiment.strategies.clear();
      for (const auto& s : strategies) cfg.experiment.strategies.push_back(Strategy::parse(s));
    }
    if (!targets.empty()) cfg.experiment.targets = targets;
    if (max_target_images) cfg.experiment.max_target_images = *max_target_images;
    cfg.train.validate();
  }
};

RunConfig config_from(const std::string& path) { return path.empty() ? default_run_config() : load_run_config(path); }

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::ordered_json report_json(const AdaptationReport& r, const Strategy& strategy, double c, double rho) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy.name();
  j["c"] = c;
  j["rho"] = rho;
  nlohmann::ordered_json members = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.lambdas.size(); ++i) {
    nlohmann::ordered_json m;
    m["lambda"] = r.lambdas[i];
    m["mean_entropy"] = r.entropy[i].mean_entropy;
    m["fg_entropy"] = r.entropy[i].fg_entropy;
    m["bg_entropy"] = r.entropy[i].bg_entropy;
    if (i < r.sharpness.size()) m["sharpness"] = r.sharpness[i];
    if (i < r.scores.size()) m["score"] = r.scores[i];
    m["weight"] = r.weights[i];
    if (r.member_dice) m["dice"] = (*r.member_dice)[i];
    members.push_back(std::move(m));
  }
  j["members"] = std::move(members);
  if (r.dice) j["dice"] = *r.dice;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Single-image test-time adaptation by entropy-weighted batch-norm statistics ensembles"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  Overrides ov;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic source and target domains");
  gen->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  ov.add_to(gen, false);

  auto* tr = app.add_subcommand("train", "train a segmentation network on the source domain");
  tr->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  tr->add_option("--out", out_dir, "checkpoint directory")->required();
  ov.add_to(tr, false);

  std::string ckpt, image, mask, strategy_name = "ent-baln";
  double c = 0.2, rho = kDefaultRho;
  auto* ad = app.add_subcommand("adapt", "adapt a trained network to one image");
  ad->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ad->add_option("--image", image, "input image (PGM)")->required();
  ad->add_option("--mask", mask, "ground-truth mask (PGM) for scoring");
  ad->add_option("--strategy", strategy_name, "weighting strategy")->capture_default_str();
  ad->add_option("--c", c, "lambda grid step")->capture_default_str();
  ad->add_option("--rho", rho, "sharpness radius")->capture_default_str();
  ad->add_option("--out", out_dir, "output directory")->required();

  auto* sw = app.add_subcommand("sweep", "train per trial and evaluate every method on the target domains");
  sw->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  sw->add_option("--out", out_dir, "results directory")->required();
  ov.add_to(sw, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (gen->parsed()) {
      RunConfig cfg = config_from(config_path);
      ov.apply(cfg, true);
      if (cfg.dataset.root.empty()) throw ConfigError("dataset root not set (config dataset.root or --root)");
      write_dataset(cfg.dataset);
      std::printf("wrote dataset to %s\n", cfg.dataset.root.string().c_str());
    } else if (tr->parsed()) {
      RunConfig cfg = config_from(config_path);
      ov.apply(cfg, false);
      cfg.experiment.validate();
      const DatasetConfig index = read_dataset_index(cfg.dataset.root);
      const auto source = load_domain(index, cfg.experiment.source);
      TrainConfig tc = cfg.train;
      tc.seed = trial_init_seed(cfg.experiment, 0);
      tc.split_seed = trial_split_seed(cfg.experiment, 0);
      TrainResult result = train(build(cfg.network, tc.seed), source, tc);
      save_checkpoint(result.net, out_dir);
      write_history_csv(fs::path(out_dir) / "history.csv", result.history);
      std::printf("best validation dice %.4f at epoch %d\n", result.best_val_dice, result.best_epoch);
    } else if (ad->parsed()) {
      const Strategy strategy = Strategy::parse(strategy_name);
      const LambdaGrid grid = LambdaGrid::from_step(c);
      if (!(rho > 0.0)) throw ConfigError("--rho must be > 0");
      const Network net = load_checkpoint(ckpt);
      int h = 0, w = 0;
      const auto pixels = read_pgm_image(image, &h, &w);
      AdaptationReport report = intent_adapt(net, image_tensor(h, w, pixels), grid, strategy, rho);
      if (!mask.empty()) {
        int mh = 0, mw = 0;
        const auto truth = read_pgm_mask(mask, &mh, &mw);
        if (mh != h || mw != w) throw FormatError("mask size does not match the image");
        score_report(report, truth);
      }
      fs::create_directories(out_dir);
      write_pgm_image(fs::path(out_dir) / "prob.pgm", h, w, report.integrated.values());
      write_pgm_mask(fs::path(out_dir) / "mask.pgm", h, w, report.integrated.threshold());
      write_json(fs::path(out_dir) / "report.json", report_json(report, strategy, c, rho));
      if (report.dice) std::printf("dice %.4f\n", *report.dice);
    } else if (sw->parsed()) {
      RunConfig cfg = config_from(config_path);
      ov.apply(cfg, false);
      SweepHooks hooks;
      hooks.on_trial = [](const TrialInfo& t) {
        std::fprintf(stderr, "trial %d: source val dice %.4f (best epoch %d of %d)\n", t.trial, t.source_val_dice,
                     t.best_epoch, t.epochs_run);
      };
      const SweepResult result = run_sweep_from_disk(cfg, hooks);
      emit_report(result, out_dir);
      write_json(fs::path(out_dir) / "config.json", to_json(cfg));
      std::printf("wrote results to %s\n", out_dir.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const PathError& e) {
    std::fprintf(stderr, "path error: %s\n", e.what());
    return kDataExit;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kDataExit;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kDataExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
