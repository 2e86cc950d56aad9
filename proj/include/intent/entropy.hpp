#pragma once

#include <cstddef>
#include <span>

#include "intent/probmap.hpp"

namespace intent {

inline constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
  return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}

// Binary entropy in nats, after clamping p to [1e-7, 1 - 1e-7].
double pixel_entropy(double p);
// d/dp of pixel_entropy evaluated at the clamped p: ln((1 - p) / p).
double pixel_entropy_slope(double p);

double mask_entropy(std::span<const float> probs);
double mask_entropy(const ProbMap& p);
double mask_entropy_sum(std::span<const float> probs);

struct EntropyStats {
  double mean_entropy = 0.0;
  double fg_entropy = 0.0;  // mean over pixels with p >= 0.5; 0 when there are none
  double bg_entropy = 0.0;  // mean over the complement; 0 when empty
  std::size_t fg_count = 0;
  std::size_t bg_count = 0;

  double balanced() const { return 0.5 * (fg_entropy + bg_entropy); }
};

EntropyStats balanced_entropy(const ProbMap& p);

}  // namespace intent
