#include "intent/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace intent {

ProbMap::ProbMap(int height, int width, std::vector<float> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height <= 0 || width <= 0 ||
      values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("ProbMap: value count does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

ProbMap ProbMap::from_tensor(const Tensor& probs, int index) {
  require_rank(probs, 4, "ProbMap::from_tensor");
  if (probs.dim(1) != 1) throw ShapeError("ProbMap::from_tensor: expected one channel");
  if (index < 0 || index >= probs.dim(0)) throw ShapeError("ProbMap::from_tensor: index out of range");
  const std::size_t plane = static_cast<std::size_t>(probs.dim(2)) * probs.dim(3);
  const float* src = probs.data() + plane * index;
  return ProbMap(probs.dim(2), probs.dim(3), std::vector<float>(src, src + plane));
}

std::vector<std::uint8_t> ProbMap::threshold(float level) const {
  std::vector<std::uint8_t> mask(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) mask[i] = values_[i] >= level ? 1 : 0;
  return mask;
}

double max_abs_diff(const ProbMap& a, const ProbMap& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

double mean_abs_diff(const ProbMap& a, const ProbMap& b) {
  if (a.size() != b.size()) throw ShapeError("mean_abs_diff: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<double>(a[i]) - b[i]);
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

// Evaluated on the smaller of p and 1 - p so that H(p) and H(1 - p) agree bit-for-bit.
double pixel_entropy(double p) {
  const double s = std::max(p < 0.5 ? p : 1.0 - p, kProbEps);
  const double t = 1.0 - s;
  return -(s * std::log(s) + t * std::log(t));
}

double pixel_entropy_slope(double p) {
  const double q = clamp_prob(p);
  return std::log(1.0 - q) - std::log(q);
}

double mask_entropy_sum(std::span<const float> probs) {
  double s = 0.0;
  for (float p : probs) s += pixel_entropy(p);
  return s;
}

double mask_entropy(std::span<const float> probs) {
  return probs.empty() ? 0.0 : mask_entropy_sum(probs) / static_cast<double>(probs.size());
}

double mask_entropy(const ProbMap& p) { return mask_entropy(p.values()); }

EntropyStats balanced_entropy(const ProbMap& p) {
  EntropyStats s;
  double fg = 0.0, bg = 0.0;
  for (float v : p.values()) {
    const double h = pixel_entropy(v);
    if (v >= 0.5f) {
      fg += h;
      ++s.fg_count;
    } else {
      bg += h;
      ++s.bg_count;
    }
  }
  s.fg_entropy = s.fg_count ? fg / static_cast<double>(s.fg_count) : 0.0;
  s.bg_entropy = s.bg_count ? bg / static_cast<double>(s.bg_count) : 0.0;
  s.mean_entropy = p.size() ? (fg + bg) / static_cast<double>(p.size()) : 0.0;
  return s;
}

}  // namespace intent
