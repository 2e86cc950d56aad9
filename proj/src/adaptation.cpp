#include "intent/adaptation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "intent/trainer.hpp"

namespace intent {

LambdaGrid LambdaGrid::from_step(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("lambda grid step must be in (0, 1]");
  LambdaGrid g;
  g.step = step;
  const double inv = 1.0 / step;
  const double rounded = std::round(inv);
  if (std::fabs(inv - rounded) < 1e-9) {
    // Integral 1/C: k / n avoids accumulated rounding so endpoints and midpoints are exact.
    const int n = static_cast<int>(rounded);
    for (int k = 0; k <= n; ++k) g.values.push_back(static_cast<double>(k) / n);
  } else {
    for (int k = 0; k * step < 1.0 - 1e-12; ++k) g.values.push_back(k * step);
    g.values.push_back(1.0);
  }
  return g;
}

LambdaGrid LambdaGrid::of(std::vector<double> values) {
  if (values.empty()) throw ConfigError("lambda grid must not be empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) throw ConfigError("lambda grid value outside [0, 1]");
    if (i && !(values[i] > values[i - 1])) throw ConfigError("lambda grid must be strictly ascending");
  }
  LambdaGrid g;
  g.step = values.size() > 1 ? values[1] - values[0] : 1.0;
  g.values = std::move(values);
  return g;
}

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::Average: return "average";
    case StrategyKind::Entropy: return "entropy";
    case StrategyKind::EntMin: return "ent-min";
    case StrategyKind::EntTopK: return k == 2 ? "ent-topk" : "ent-topk:" + std::to_string(k);
    case StrategyKind::EntNorm: return "ent-norm";
    case StrategyKind::EntBaln: return "ent-baln";
    case StrategyKind::Sharpness: return "sharpness";
  }
  return "?";
}

Strategy Strategy::parse(std::string_view text) {
  std::string s;
  for (char c : text) s.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  int k = 2;
  if (const auto colon = s.find(':'); colon != std::string::npos) {
    try {
      k = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad K in strategy '" + std::string(text) + "'");
    }
    s.resize(colon);
    if (s != "ent-topk") throw ConfigError("only ent-topk takes a K: '" + std::string(text) + "'");
  }
  if (k < 1) throw ConfigError("ent-topk K must be >= 1");
  if (s == "average") return {StrategyKind::Average, 2};
  if (s == "entropy") return {StrategyKind::Entropy, 2};
  if (s == "ent-min") return {StrategyKind::EntMin, 2};
  if (s == "ent-topk") return {StrategyKind::EntTopK, k};
  if (s == "ent-norm") return {StrategyKind::EntNorm, 2};
  if (s == "ent-baln") return {StrategyKind::EntBaln, 2};
  if (s == "sharpness") return {StrategyKind::Sharpness, 2};
  throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

std::vector<Strategy> Strategy::all() {
  return {{StrategyKind::Average, 2}, {StrategyKind::Entropy, 2}, {StrategyKind::EntMin, 2},
          {StrategyKind::EntTopK, 2}, {StrategyKind::EntNorm, 2}, {StrategyKind::EntBaln, 2},
          {StrategyKind::Sharpness, 2}};
}

std::vector<double> strategy_scores(const Strategy& s, std::span<const EntropyStats> stats,
                                    std::span<const double> sharpness) {
  std::vector<double> scores(stats.size());
  switch (s.kind) {
    case StrategyKind::Average:
      std::fill(scores.begin(), scores.end(), 0.0);
      break;
    case StrategyKind::EntBaln:
      for (std::size_t i = 0; i < stats.size(); ++i) scores[i] = -stats[i].balanced();
      break;
    case StrategyKind::Sharpness:
      if (sharpness.size() != stats.size()) throw ShapeError("sharpness strategy needs one value per member");
      scores.assign(stats.size(), 0.0);
      for (std::size_t i = 0; i < sharpness.size(); ++i) scores[i] = -sharpness[i];
      break;
    default:
      for (std::size_t i = 0; i < stats.size(); ++i) scores[i] = -stats[i].mean_entropy;
      break;
  }
  return scores;
}

std::vector<double> softmax_weights(const Strategy& s, std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("softmax_weights: no scores");
  std::vector<double> z(scores.begin(), scores.end());
  if (s.kind != StrategyKind::Entropy) {
    const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
    const double range = *hi - *lo;
    if (range > 0.0) {
      for (double& v : z) v /= range;
    } else {
      std::fill(z.begin(), z.end(), 0.0);
    }
  }
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

namespace {

// Member indices sorted by mean entropy; ties resolved toward smaller lambda (lower index).
std::vector<std::size_t> by_entropy(std::span<const EntropyStats> stats) {
  std::vector<std::size_t> idx(stats.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return stats[a].mean_entropy < stats[b].mean_entropy; });
  return idx;
}

}  // namespace

std::vector<double> compute_weights(const Strategy& s, std::span<const EntropyStats> stats,
                                    std::span<const double> sharpness) {
  const std::size_t n = stats.size();
  if (n < 2) throw ConfigError("compute_weights: need at least 2 ensemble members");
  std::vector<double> w(n, 0.0);
  switch (s.kind) {
    case StrategyKind::Average:
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
      return w;
    case StrategyKind::EntMin:
      w[by_entropy(stats).front()] = 1.0;
      return w;
    case StrategyKind::EntTopK: {
      if (s.k < 1 || static_cast<std::size_t>(s.k) > n) {
        throw ConfigError("ent-topk: K=" + std::to_string(s.k) + " outside [1, " + std::to_string(n) + "]");
      }
      const auto order = by_entropy(stats);
      for (int i = 0; i < s.k; ++i) w[order[static_cast<std::size_t>(i)]] = 1.0 / s.k;
      return w;
    }
    default:
      return softmax_weights(s, strategy_scores(s, stats, sharpness));
  }
}

ProbMap integrate(std::span<const ProbMap> preds, std::span<const double> weights) {
  if (preds.empty() || preds.size() != weights.size()) throw ShapeError("integrate: need one weight per prediction");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("integrate: negative weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-6) throw ConfigError("integrate: weights sum to " + std::to_string(total));
  const int h = preds[0].height(), wd = preds[0].width();
  for (const ProbMap& p : preds) {
    if (p.height() != h || p.width() != wd) throw ShapeError("integrate: prediction size mismatch");
  }
  std::vector<float> out(preds[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < preds.size(); ++k) acc += weights[k] * preds[k][i];
    out[i] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
  }
  return ProbMap(h, wd, std::move(out));
}

std::vector<EnsembleMember> ensemble_predict(const Network& net, const Tensor& x, const LambdaGrid& grid) {
  std::vector<EnsembleMember> members;
  members.reserve(grid.size());
  for (double lambda : grid.values) members.push_back({lambda, predict(net, x, StatMode{lambda})});
  return members;
}

double sharpness(const Network& net, const Tensor& x, double lambda, double rho, const AffineParams* base) {
  if (!(rho > 0.0)) throw ConfigError("sharpness: rho must be > 0");
  const AffineParams theta = base ? *base : net.affine();
  ForwardOptions opt;
  opt.mode = StatMode{lambda};
  opt.grads = GradScope::Affine;
  opt.affine_override = &theta;
  ForwardResult rec = forward(net, x, opt);
  const double h0 = mask_entropy_sum(rec.probs.values());
  ops::sum_entropy(*rec.tape, rec.output);
  const AffineParams g = grad_entropy_wrt_affine(rec);

  double sq = 0.0;
  for (const BnAffine& a : g) {
    for (float v : a.gamma.values()) sq += static_cast<double>(v) * v;
    for (float v : a.beta.values()) sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) return 0.0;

  AffineParams moved = theta;
  const double scale = rho / norm;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    for (std::size_t j = 0; j < moved[i].gamma.size(); ++j) moved[i].gamma[j] += static_cast<float>(scale * g[i].gamma[j]);
    for (std::size_t j = 0; j < moved[i].beta.size(); ++j) moved[i].beta[j] += static_cast<float>(scale * g[i].beta[j]);
  }
  ForwardOptions perturbed;
  perturbed.mode = StatMode{lambda};
  perturbed.affine_override = &moved;
  const double h1 = mask_entropy_sum(forward(net, x, perturbed).probs.values());
  return h1 - h0;
}

EnsembleCache build_ensemble(const Network& net, const Tensor& x, const LambdaGrid& grid, bool with_sharpness,
                             double rho) {
  EnsembleCache cache;
  for (EnsembleMember& m : ensemble_predict(net, x, grid)) {
    cache.lambdas.push_back(m.lambda);
    cache.entropy.push_back(balanced_entropy(m.prediction));
    cache.predictions.push_back(std::move(m.prediction));
  }
  if (with_sharpness) {
    for (double lambda : cache.lambdas) cache.sharpness.push_back(sharpness(net, x, lambda, rho));
  }
  return cache;
}

AdaptationReport combine(const EnsembleCache& cache, const Strategy& strategy) {
  if (cache.predictions.empty()) throw ConfigError("combine: empty ensemble");
  AdaptationReport r;
  r.lambdas = cache.lambdas;
  r.predictions = cache.predictions;
  r.entropy = cache.entropy;
  r.sharpness = cache.sharpness;
  if (cache.predictions.size() == 1) {
    r.weights = {1.0};
    r.integrated = cache.predictions.front();
    return r;
  }
  if (strategy.needs_sharpness() && cache.sharpness.size() != cache.predictions.size()) {
    throw ConfigError("combine: sharpness strategy requires sharpness values");
  }
  r.scores = strategy_scores(strategy, cache.entropy, cache.sharpness);
  r.weights = compute_weights(strategy, cache.entropy, cache.sharpness);
  r.integrated = integrate(cache.predictions, r.weights);
  return r;
}

AdaptationReport intent_adapt(const Network& net, const Tensor& x, const LambdaGrid& grid, const Strategy& strategy,
                              double rho) {
  return combine(build_ensemble(net, x, grid, strategy.needs_sharpness() && grid.size() > 1, rho), strategy);
}

void score_report(AdaptationReport& report, std::span<const std::uint8_t> truth) {
  std::vector<double> member;
  for (const ProbMap& p : report.predictions) member.push_back(dice(p.threshold(), truth));
  report.member_dice = std::move(member);
  report.dice = dice(report.integrated.threshold(), truth);
}

ProbMap tent_baseline(const Network& net, const Tensor& x, const TentConfig& config) {
  if (config.steps < 0) throw ConfigError("tent: steps must be >= 0");
  AffineParams theta = net.affine();
  for (int step = 0; step < config.steps; ++step) {
    ForwardOptions opt;
    opt.mode = StatMode::instant();
    opt.grads = GradScope::Affine;
    opt.affine_override = &theta;
    ForwardResult rec = forward(net, x, opt);
    ops::mean_entropy(*rec.tape, rec.output);
    const AffineParams g = grad_entropy_wrt_affine(rec);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      for (std::size_t j = 0; j < theta[i].gamma.size(); ++j) theta[i].gamma[j] -= static_cast<float>(config.lr * g[i].gamma[j]);
      for (std::size_t j = 0; j < theta[i].beta.size(); ++j) theta[i].beta[j] -= static_cast<float>(config.lr * g[i].beta[j]);
    }
  }
  return predict(net, x, StatMode::instant(), config.steps > 0 ? &theta : nullptr);
}

}  // namespace intent
