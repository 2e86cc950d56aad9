#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "intent/adaptation.hpp"
#include "intent/dataset.hpp"
#include "intent/network.hpp"
#include "intent/trainer.hpp"

namespace intent {

struct ExperimentConfig {
  std::string source = "source";
  std::vector<std::string> targets;
  double c = 0.2;
  // Explicit ascending lambda values; when non-empty they replace the grid built from `c`.
  std::vector<double> lambdas;
  std::vector<Strategy> strategies = Strategy::all();
  double rho = kDefaultRho;
  int trials = 10;
  std::uint64_t seed = 1;
  // Keep the train/validation split fixed at `seed` while initialization varies per trial.
  bool fixed_split = true;
  TentConfig tent;
  // Extra grid steps evaluated with `c_sensitivity_strategy`; empty disables the analysis.
  std::vector<double> c_sensitivity;
  Strategy c_sensitivity_strategy{StrategyKind::EntBaln, 2};
  int max_target_images = 0;  // 0 = all images of each target domain

  void validate() const;
  LambdaGrid grid() const;
};

// One config file drives every subcommand; each reads the sections it needs.
struct RunConfig {
  DatasetConfig dataset;
  NetConfig network;
  TrainConfig train;
  ExperimentConfig experiment;
};

RunConfig default_run_config();
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

// Per-trial training seeds.
std::uint64_t trial_init_seed(const ExperimentConfig& e, int trial);
std::uint64_t trial_split_seed(const ExperimentConfig& e, int trial);

struct ResultRow {
  std::string method;
  std::string source;
  std::string target;
  int trial = 0;
  double dice = 0.0;
};

struct CSensitivityRow {
  double c = 0.0;
  std::string source;
  std::string target;
  int trial = 0;
  double dice = 0.0;
  double delta = 0.0;  // dice minus the dice at the experiment's default C
};

struct TrialInfo {
  int trial = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t split_seed = 0;
  double source_val_dice = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<CSensitivityRow> c_rows;
  std::vector<TrialInfo> trials;
  std::vector<std::vector<EpochRecord>> histories;
  std::vector<Network> models;
};

std::string lambda_method_name(double lambda);
inline constexpr const char* kTentMethod = "tent";

// Per-method mean Dice over target images for one trained model and one target domain. Row
// order: grid lambdas ascending, then strategies in config order, then Tent.
std::vector<ResultRow> evaluate_target(const Network& net, std::span<const Sample> images,
                                       const ExperimentConfig& e, const std::string& target, int trial);

std::vector<CSensitivityRow> evaluate_c_sensitivity(const Network& net, std::span<const Sample> images,
                                                    const ExperimentConfig& e, const std::string& target, int trial);

struct SweepHooks {
  // Called after each trial's model is trained; may be used for progress reporting.
  std::function<void(const TrialInfo&)> on_trial;
};

// Trains one model per trial on `source` and evaluates every target.
SweepResult run_sweep(const ExperimentConfig& e, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                      std::span<const Sample> source, const std::map<std::string, std::vector<Sample>>& targets,
                      const SweepHooks& hooks = {});

// Loads source/target domains from the dataset directory, then runs the sweep.
SweepResult run_sweep_from_disk(const RunConfig& cfg, const SweepHooks& hooks = {});

struct SummaryRow {
  std::string method;
  std::string source;
  std::string target;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over trials
  int trials = 0;
};

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string c_sensitivity_csv(const std::vector<CSensitivityRow>& rows);
std::string trials_csv(const std::vector<TrialInfo>& trials);
// Horizontal bar chart of mean Dice per method for one source -> target pair.
std::string bar_chart_svg(const std::string& title, const std::vector<SummaryRow>& rows);

// Writes results.csv, summary.csv, trials.csv, c_sensitivity.csv (when present), plots/*.svg,
// and per-trial history/checkpoints under trial_<t>/.
void emit_report(const SweepResult& result, const std::filesystem::path& out_dir);

}  // namespace intent
