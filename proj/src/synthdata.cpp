#include "intent/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>

#include "intent/errors.hpp"
#include "intent/rng.hpp"

namespace intent {

namespace {

constexpr std::uint64_t kGeometryStream = 0x6765'6f6d;  // "geom"
constexpr std::uint64_t kNoiseStream = 0x6e6f'6973;     // "nois"
constexpr int kMaxAttempts = 1000;

constexpr double kBackgroundLevel = 0.30;
constexpr double kTextureAmplitude = 0.08;

void check_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError(std::string("DomainSpec.") + what + " = " + std::to_string(v) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void DomainSpec::validate() const {
  if (name.empty()) throw ConfigError("DomainSpec.name must not be empty");
  check_range(intensity_bias, -0.3, 0.3, "intensity_bias");
  check_range(contrast, 0.5, 2.0, "contrast");
  check_range(gamma, 0.5, 2.0, "gamma");
  check_range(noise_sigma, 0.0, 0.15, "noise_sigma");
  if (blur_radius < 0 || blur_radius > 2) throw ConfigError("DomainSpec.blur_radius must be 0, 1 or 2");
  if (!(texture_freq >= 0.0)) throw ConfigError("DomainSpec.texture_freq must be >= 0");
}

double Sample::foreground_fraction() const {
  if (mask.empty()) return 0.0;
  std::size_t fg = 0;
  for (std::uint8_t m : mask) fg += m;
  return static_cast<double>(fg) / static_cast<double>(mask.size());
}

Sample base_scene(int height, int width, std::uint64_t seed, int index, double texture_freq) {
  const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(index));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(sample_seed, kGeometryStream), static_cast<std::uint64_t>(attempt));
    struct Blob {
      double cy, cx, ry, rx, cos_t, sin_t, level;
    };
    const int count = rng.uniform_int(1, 3);
    std::vector<Blob> blobs;
    for (int b = 0; b < count; ++b) {
      const double theta = rng.uniform(0.0, std::numbers::pi);
      blobs.push_back({rng.uniform(0.15, 0.85) * height, rng.uniform(0.15, 0.85) * width,
                       rng.uniform(0.08, 0.25) * height, rng.uniform(0.08, 0.25) * width, std::cos(theta),
                       std::sin(theta), rng.uniform(0.60, 0.75)});
    }
    const double tex_theta = rng.uniform(0.0, std::numbers::pi);
    const double tex_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    Sample s;
    s.height = height;
    s.width = width;
    s.index = index;
    s.image.resize(static_cast<std::size_t>(height) * width);
    s.mask.resize(s.image.size());
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        const double u = (x * std::cos(tex_theta) + y * std::sin(tex_theta)) / width;
        double v = kBackgroundLevel + kTextureAmplitude * std::sin(2.0 * std::numbers::pi * texture_freq * u + tex_phase);
        bool inside = false;
        for (const Blob& b : blobs) {
          const double dy = y + 0.5 - b.cy, dx = x + 0.5 - b.cx;
          const double a = (dx * b.cos_t + dy * b.sin_t) / b.rx;
          const double c = (-dx * b.sin_t + dy * b.cos_t) / b.ry;
          if (a * a + c * c <= 1.0) {
            inside = true;
            v = b.level;
          }
        }
        s.image[i] = static_cast<float>(v);
        s.mask[i] = inside ? 1 : 0;
      }
    }
    const double frac = s.foreground_fraction();
    if (frac >= kMinForeground && frac <= kMaxForeground) return s;
  }
  throw ConfigError("could not generate a scene with a valid foreground fraction for index " + std::to_string(index));
}

std::vector<float> apply_domain(const DomainSpec& spec, const std::vector<float>& clean, int height, int width,
                                std::uint64_t seed, int index) {
  std::vector<double> v(clean.begin(), clean.end());
  if (spec.contrast != 1.0) {
    for (double& p : v) p = 0.5 + spec.contrast * (p - 0.5);
  }
  if (spec.intensity_bias != 0.0) {
    for (double& p : v) p += spec.intensity_bias;
  }
  if (spec.gamma != 1.0) {
    for (double& p : v) p = std::pow(std::clamp(p, 0.0, 1.0), spec.gamma);
  }
  if (spec.blur_radius > 0) {
    const int r = spec.blur_radius;
    std::vector<double> tmp(v.size());
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += v[static_cast<std::size_t>(y) * width + std::clamp(x + d, 0, width - 1)];
        tmp[static_cast<std::size_t>(y) * width + x] = acc / (2 * r + 1);
      }
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += tmp[static_cast<std::size_t>(std::clamp(y + d, 0, height - 1)) * width + x];
        v[static_cast<std::size_t>(y) * width + x] = acc / (2 * r + 1);
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(index)), kNoiseStream));
    for (double& p : v) p += spec.noise_sigma * rng.normal();
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
  return out;
}

Sample generate_one(const DomainSpec& spec, int height, int width, std::uint64_t seed, int index) {
  Sample s = base_scene(height, width, seed, index, spec.texture_freq);
  s.image = apply_domain(spec, s.image, height, width, seed, index);
  s.domain = spec.name;
  return s;
}

std::vector<Sample> generate(const DomainSpec& spec, int n, int height, int width, std::uint64_t seed,
                             int first_index) {
  spec.validate();
  if (n <= 0) throw ConfigError("generate: n must be positive");
  if (height <= 0 || width <= 0 || height % 8 || width % 8) {
    throw ConfigError("generate: height and width must be positive multiples of 8");
  }
  if (first_index < 0) throw ConfigError("generate: first_index must be >= 0");
  std::vector<Sample> out(static_cast<std::size_t>(n));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = generate_one(spec, height, width, seed, first_index + i);
    } catch (...) {
#pragma omp critical(intent_generate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace intent
