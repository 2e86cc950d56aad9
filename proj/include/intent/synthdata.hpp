#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace intent {

// Appearance of one imaging domain. Geometry (and therefore masks) never depends on it.
struct DomainSpec {
  std::string name = "source";
  double intensity_bias = 0.0;  // additive, [-0.3, 0.3]
  double contrast = 1.0;        // multiplicative about mid-gray 0.5, [0.5, 2.0]
  double gamma = 1.0;           // [0.5, 2.0]
  double noise_sigma = 0.0;     // Gaussian, [0, 0.15]
  int blur_radius = 0;          // box blur, {0, 1, 2}
  double texture_freq = 4.0;    // background sinusoid cycles across the image, >= 0

  void validate() const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct Sample {
  int height = 0;
  int width = 0;
  std::vector<float> image;        // [0, 1]
  std::vector<std::uint8_t> mask;  // {0, 1}
  std::string domain;
  int index = 0;

  double foreground_fraction() const;
};

inline constexpr double kMinForeground = 0.03;
inline constexpr double kMaxForeground = 0.6;

// Samples first_index .. first_index + n - 1. Each sample draws from its own RNG streams keyed
// by (seed, index), so any subset can be generated independently and in any order.
std::vector<Sample> generate(const DomainSpec& spec, int n, int height, int width, std::uint64_t seed,
                             int first_index = 0);

Sample generate_one(const DomainSpec& spec, int height, int width, std::uint64_t seed, int index);

// Base scene before any domain transform (contrast 1, bias 0, gamma 1, no blur, no noise).
Sample base_scene(int height, int width, std::uint64_t seed, int index, double texture_freq);

// Transform pipeline, applied in this fixed order: contrast, bias, gamma, blur, noise, clamp.
std::vector<float> apply_domain(const DomainSpec& spec, const std::vector<float>& clean, int height, int width,
                                std::uint64_t seed, int index);

}  // namespace intent
