#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "intent/errors.hpp"
#include "intent/tensor.hpp"

namespace intent {

// H x W foreground probabilities in [0, 1].
class ProbMap {
 public:
  ProbMap() = default;
  ProbMap(int height, int width, std::vector<float> values);
  // Takes sample `index` of an [N, 1, H, W] tensor.
  static ProbMap from_tensor(const Tensor& probs, int index = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  // Pixels with p >= 0.5 become 1.
  std::vector<std::uint8_t> threshold(float level = 0.5f) const;

  friend bool operator==(const ProbMap&, const ProbMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

double max_abs_diff(const ProbMap& a, const ProbMap& b);
double mean_abs_diff(const ProbMap& a, const ProbMap& b);

}  // namespace intent
