#include "intent/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>

#include "intent/errors.hpp"

namespace intent {

void ExperimentConfig::validate() const {
  if (source.empty()) throw ConfigError("experiment: source domain required");
  if (targets.empty()) throw ConfigError("experiment: at least one target domain required");
  std::set<std::string> seen;
  for (const std::string& t : targets) {
    if (t == source) throw ConfigError("experiment: source '" + source + "' listed as a target");
    if (!seen.insert(t).second) throw ConfigError("experiment: duplicate target '" + t + "'");
  }
  (void)grid();
  for (double cs : c_sensitivity) (void)LambdaGrid::from_step(cs);
  if (!(rho > 0.0)) throw ConfigError("experiment: rho must be > 0");
  if (trials < 1) throw ConfigError("experiment: trials must be >= 1");
  if (tent.steps < 0 || !(tent.lr >= 0.0)) throw ConfigError("experiment: invalid tent settings");
  if (max_target_images < 0) throw ConfigError("experiment: max_target_images must be >= 0");
  std::set<std::string> names;
  const std::size_t members = grid().size();
  for (const Strategy& s : strategies) {
    if (!names.insert(s.name()).second) throw ConfigError("experiment: duplicate strategy " + s.name());
    if (s.kind == StrategyKind::EntTopK && members > 1 && static_cast<std::size_t>(s.k) > members) {
      throw ConfigError("experiment: ent-topk K exceeds the lambda grid size");
    }
  }
}

LambdaGrid ExperimentConfig::grid() const {
  return lambdas.empty() ? LambdaGrid::from_step(c) : LambdaGrid::of(lambdas);
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.dataset = default_dataset_config();
  cfg.experiment.targets = {"bright_contrast", "dark_gamma_blur"};
  return cfg;
}

namespace {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

std::vector<Strategy> parse_strategies(const nlohmann::json& j) {
  std::vector<Strategy> out;
  for (const auto& s : j) out.push_back(Strategy::parse(s.get<std::string>()));
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg = default_run_config();
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("domains")) {
        cfg.dataset = dataset_config_from_json(d);
      } else {
        read_opt(d, "seed", cfg.dataset.seed);
        read_opt(d, "height", cfg.dataset.height);
        read_opt(d, "width", cfg.dataset.width);
      }
      if (d.contains("root")) cfg.dataset.root = d.at("root").get<std::string>();
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      read_opt(n, "in_channels", cfg.network.in_channels);
      read_opt(n, "base_width", cfg.network.base_width);
      read_opt(n, "depth", cfg.network.depth);
      read_opt(n, "kernel", cfg.network.kernel);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      read_opt(t, "epochs", cfg.train.epochs);
      read_opt(t, "batch_size", cfg.train.batch_size);
      read_opt(t, "lr", cfg.train.lr);
      read_opt(t, "bn_momentum", cfg.train.bn_momentum);
      read_opt(t, "early_stop_patience", cfg.train.early_stop_patience);
      read_opt(t, "val_fraction", cfg.train.val_fraction);
      read_opt(t, "verbose", cfg.train.verbose);
    }
    if (j.contains("experiment")) {
      const auto& e = j.at("experiment");
      ExperimentConfig& x = cfg.experiment;
      read_opt(e, "source", x.source);
      read_opt(e, "targets", x.targets);
      read_opt(e, "c", x.c);
      read_opt(e, "lambdas", x.lambdas);
      if (e.contains("strategies")) x.strategies = parse_strategies(e.at("strategies"));
      read_opt(e, "rho", x.rho);
      read_opt(e, "trials", x.trials);
      read_opt(e, "seed", x.seed);
      read_opt(e, "fixed_split", x.fixed_split);
      if (e.contains("tent")) {
        read_opt(e.at("tent"), "steps", x.tent.steps);
        read_opt(e.at("tent"), "lr", x.tent.lr);
      }
      read_opt(e, "c_sensitivity", x.c_sensitivity);
      if (e.contains("c_sensitivity_strategy")) {
        x.c_sensitivity_strategy = Strategy::parse(e.at("c_sensitivity_strategy").get<std::string>());
      }
      read_opt(e, "max_target_images", x.max_target_images);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  cfg.network.validate();
  cfg.train.validate();
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["dataset"] = to_json(cfg.dataset);
  j["dataset"]["root"] = cfg.dataset.root.string();
  j["network"] = {{"in_channels", cfg.network.in_channels},
                  {"base_width", cfg.network.base_width},
                  {"depth", cfg.network.depth},
                  {"kernel", cfg.network.kernel}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"bn_momentum", cfg.train.bn_momentum},
                {"early_stop_patience", cfg.train.early_stop_patience},
                {"val_fraction", cfg.train.val_fraction}};
  const ExperimentConfig& e = cfg.experiment;
  nlohmann::ordered_json strategies = nlohmann::ordered_json::array();
  for (const Strategy& s : e.strategies) strategies.push_back(s.name());
  j["experiment"] = {{"source", e.source},
                     {"targets", e.targets},
                     {"c", e.c},
                     {"lambdas", e.lambdas},
                     {"strategies", strategies},
                     {"rho", e.rho},
                     {"trials", e.trials},
                     {"seed", e.seed},
                     {"fixed_split", e.fixed_split},
                     {"tent", {{"steps", e.tent.steps}, {"lr", e.tent.lr}}},
                     {"c_sensitivity", e.c_sensitivity},
                     {"c_sensitivity_strategy", e.c_sensitivity_strategy.name()},
                     {"max_target_images", e.max_target_images}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t trial_init_seed(const ExperimentConfig& e, int trial) { return e.seed + static_cast<std::uint64_t>(trial); }

std::uint64_t trial_split_seed(const ExperimentConfig& e, int trial) {
  return e.fixed_split ? e.seed : trial_init_seed(e, trial);
}

std::string lambda_method_name(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lambda=%.3f", lambda);
  return buf;
}

namespace {

// Images sorted by index so that means do not depend on the order they were supplied in.
std::vector<const Sample*> ordered_subset(std::span<const Sample> images, int limit) {
  std::vector<const Sample*> v;
  for (const Sample& s : images) v.push_back(&s);
  std::stable_sort(v.begin(), v.end(), [](const Sample* a, const Sample* b) { return a->index < b->index; });
  if (limit > 0 && static_cast<std::size_t>(limit) < v.size()) v.resize(static_cast<std::size_t>(limit));
  if (v.empty()) throw ConfigError("no target images to evaluate");
  return v;
}

std::string describe(const std::string& target, const Sample& s) {
  return "target '" + target + "' image " + std::to_string(s.index);
}

// Runs `per_image(i)` over every image (in parallel), collecting the first failure.
template <class F>
void for_each_image(std::size_t n, F&& per_image) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      per_image(i);
    } catch (...) {
#pragma omp critical(intent_sweep_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<ResultRow> evaluate_target(const Network& net, std::span<const Sample> images, const ExperimentConfig& e,
                                       const std::string& target, int trial) {
  const auto subset = ordered_subset(images, e.max_target_images);
  const LambdaGrid grid = e.grid();
  const bool need_sharp = std::any_of(e.strategies.begin(), e.strategies.end(),
                                      [](const Strategy& s) { return s.needs_sharpness(); });
  const std::size_t methods = grid.size() + e.strategies.size() + 1;
  std::vector<std::vector<double>> scores(subset.size(), std::vector<double>(methods, 0.0));

  for_each_image(subset.size(), [&](std::size_t i) {
    const Sample& s = *subset[i];
    const Tensor x = image_tensor(s.height, s.width, s.image);
    std::size_t col = 0;
    EnsembleCache cache;
    try {
      cache = build_ensemble(net, x, grid, need_sharp && grid.size() > 1, e.rho);
    } catch (const Error& err) {
      throw Error(describe(target, s) + ", building the lambda ensemble: " + err.what());
    }
    for (std::size_t k = 0; k < grid.size(); ++k) scores[i][col++] = dice(cache.predictions[k].threshold(), s.mask);
    for (const Strategy& st : e.strategies) {
      try {
        scores[i][col++] = dice(combine(cache, st).integrated.threshold(), s.mask);
      } catch (const Error& err) {
        throw Error(describe(target, s) + ", strategy " + st.name() + ": " + err.what());
      }
    }
    try {
      scores[i][col++] = dice(tent_baseline(net, x, e.tent).threshold(), s.mask);
    } catch (const Error& err) {
      throw Error(describe(target, s) + ", tent baseline: " + err.what());
    }
  });

  std::vector<std::string> names;
  for (double l : grid.values) names.push_back(lambda_method_name(l));
  for (const Strategy& st : e.strategies) names.push_back(st.name());
  names.push_back(kTentMethod);

  std::vector<ResultRow> rows;
  for (std::size_t m = 0; m < methods; ++m) {
    double sum = 0.0;
    for (const auto& per_image : scores) sum += per_image[m];
    rows.push_back({names[m], e.source, target, trial, sum / static_cast<double>(subset.size())});
  }
  return rows;
}

std::vector<CSensitivityRow> evaluate_c_sensitivity(const Network& net, std::span<const Sample> images,
                                                    const ExperimentConfig& e, const std::string& target, int trial) {
  if (e.c_sensitivity.empty()) return {};
  const auto subset = ordered_subset(images, e.max_target_images);
  std::vector<double> steps = e.c_sensitivity;
  steps.push_back(e.c);
  const Strategy& st = e.c_sensitivity_strategy;
  std::vector<std::vector<double>> scores(subset.size(), std::vector<double>(steps.size(), 0.0));

  for_each_image(subset.size(), [&](std::size_t i) {
    const Sample& s = *subset[i];
    const Tensor x = image_tensor(s.height, s.width, s.image);
    for (std::size_t c = 0; c < steps.size(); ++c) {
      try {
        const LambdaGrid grid = LambdaGrid::from_step(steps[c]);
        scores[i][c] = dice(intent_adapt(net, x, grid, st, e.rho).integrated.threshold(), s.mask);
      } catch (const Error& err) {
        throw Error(describe(target, s) + ", C=" + std::to_string(steps[c]) + ", strategy " + st.name() + ": " +
                    err.what());
      }
    }
  });

  std::vector<double> mean(steps.size(), 0.0);
  for (const auto& per_image : scores) {
    for (std::size_t c = 0; c < steps.size(); ++c) mean[c] += per_image[c];
  }
  for (double& m : mean) m /= static_cast<double>(subset.size());
  std::vector<CSensitivityRow> rows;
  for (std::size_t c = 0; c + 1 < steps.size(); ++c) {
    rows.push_back({steps[c], e.source, target, trial, mean[c], mean[c] - mean.back()});
  }
  return rows;
}

SweepResult run_sweep(const ExperimentConfig& e, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                      std::span<const Sample> source, const std::map<std::string, std::vector<Sample>>& targets,
                      const SweepHooks& hooks) {
  e.validate();
  for (const std::string& t : e.targets) {
    if (!targets.count(t)) throw ConfigError("sweep: no images for target '" + t + "'");
  }
  SweepResult result;
  for (int trial = 0; trial < e.trials; ++trial) {
    TrainConfig tc = train_cfg;
    tc.seed = trial_init_seed(e, trial);
    tc.split_seed = trial_split_seed(e, trial);
    TrainResult trained = train(build(net_cfg, tc.seed), source, tc);

    TrialInfo info{trial, tc.seed, *tc.split_seed, trained.best_val_dice, trained.best_epoch,
                   static_cast<int>(trained.history.size())};
    result.trials.push_back(info);
    if (hooks.on_trial) hooks.on_trial(info);

    for (const std::string& t : e.targets) {
      const auto& images = targets.at(t);
      for (ResultRow& r : evaluate_target(trained.net, images, e, t, trial)) result.rows.push_back(std::move(r));
      for (CSensitivityRow& r : evaluate_c_sensitivity(trained.net, images, e, t, trial)) result.c_rows.push_back(r);
    }
    result.histories.push_back(std::move(trained.history));
    result.models.push_back(std::move(trained.net));
  }
  return result;
}

SweepResult run_sweep_from_disk(const RunConfig& cfg, const SweepHooks& hooks) {
  cfg.experiment.validate();
  const DatasetConfig index = read_dataset_index(cfg.dataset.root);
  const std::vector<Sample> source = load_domain(index, cfg.experiment.source);
  std::map<std::string, std::vector<Sample>> targets;
  for (const std::string& t : cfg.experiment.targets) targets[t] = load_domain(index, t);
  return run_sweep(cfg.experiment, cfg.network, cfg.train, source, targets, hooks);
}

}  // namespace intent
