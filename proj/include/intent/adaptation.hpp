#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intent/entropy.hpp"
#include "intent/network.hpp"

namespace intent {

// Ascending mixing coefficients {0, C, 2C, ..., 1}; both endpoints always present.
struct LambdaGrid {
  double step = 0.2;
  std::vector<double> values;

  static LambdaGrid from_step(double step);
  // Arbitrary ascending set of values in [0, 1], e.g. {1.0} for the unadapted model.
  static LambdaGrid of(std::vector<double> values);
  std::size_t size() const { return values.size(); }
};

enum class StrategyKind { Average, Entropy, EntMin, EntTopK, EntNorm, EntBaln, Sharpness };

struct Strategy {
  StrategyKind kind = StrategyKind::EntBaln;
  int k = 2;  // ENT_TOPK only

  std::string name() const;
  bool needs_sharpness() const { return kind == StrategyKind::Sharpness; }
  // Accepts the names produced by name(), case-insensitive, '_' or '-' separated;
  // "ent-topk:3" selects K.
  static Strategy parse(std::string_view text);
  static std::vector<Strategy> all();
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

// Higher score = more trusted member. Sharpness may be empty unless the strategy needs it.
std::vector<double> strategy_scores(const Strategy& s, std::span<const EntropyStats> stats,
                                    std::span<const double> sharpness);

// softmax(scores / (max - min)) for the range-normalized strategies, softmax(scores) for
// ENTROPY. With max == min the normalization is skipped (uniform result).
std::vector<double> softmax_weights(const Strategy& s, std::span<const double> scores);

// Normalized, nonnegative member weights summing to 1. Requires >= 2 members.
std::vector<double> compute_weights(const Strategy& s, std::span<const EntropyStats> stats,
                                    std::span<const double> sharpness = {});

// Pixelwise convex combination. Weights must sum to 1 within 1e-6.
ProbMap integrate(std::span<const ProbMap> preds, std::span<const double> weights);

struct EnsembleMember {
  double lambda;
  ProbMap prediction;
};

// One forward pass per lambda, in ascending lambda order.
std::vector<EnsembleMember> ensemble_predict(const Network& net, const Tensor& x, const LambdaGrid& grid);

inline constexpr double kDefaultRho = 0.1;

// Entropy sharpness of the member at `lambda`: the sum-over-pixels entropy after moving the
// BN affine parameters by rho * g / ||g|| minus the entropy before, with g the entropy
// gradient. `base` overrides the network's affine parameters. The network is not touched.
double sharpness(const Network& net, const Tensor& x, double lambda, double rho = kDefaultRho,
                 const AffineParams* base = nullptr);

// Everything strategies need, computed once per image.
struct EnsembleCache {
  std::vector<double> lambdas;
  std::vector<ProbMap> predictions;
  std::vector<EntropyStats> entropy;
  std::vector<double> sharpness;  // empty unless requested
};

EnsembleCache build_ensemble(const Network& net, const Tensor& x, const LambdaGrid& grid,
                             bool with_sharpness, double rho = kDefaultRho);

struct AdaptationReport {
  std::vector<double> lambdas;
  std::vector<ProbMap> predictions;
  std::vector<EntropyStats> entropy;
  std::vector<double> sharpness;
  std::vector<double> scores;   // raw per-member scores (empty for single-member ensembles)
  std::vector<double> weights;  // normalized
  ProbMap integrated;
  std::optional<std::vector<double>> member_dice;
  std::optional<double> dice;
};

// Applies a strategy to a cached ensemble. A single-member ensemble gets weight 1.
AdaptationReport combine(const EnsembleCache& cache, const Strategy& strategy);

// The full procedure: ensemble -> entropy statistics -> (sharpness) -> weights -> integration.
AdaptationReport intent_adapt(const Network& net, const Tensor& x, const LambdaGrid& grid,
                              const Strategy& strategy, double rho = kDefaultRho);

// Fills the Dice fields of a report against a binary ground-truth mask.
void score_report(AdaptationReport& report, std::span<const std::uint8_t> truth);

struct TentConfig {
  int steps = 1;
  double lr = 1e-3;
};

// Gradient descent on mean entropy w.r.t. a private copy of the BN affine parameters using
// instant statistics, then prediction with the updated copy.
ProbMap tent_baseline(const Network& net, const Tensor& x, const TentConfig& config = {});

}  // namespace intent
