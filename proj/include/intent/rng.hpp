#pragma once

#include <cstdint>

namespace intent {

// Stateless 64-bit mixer; used to derive independent streams from (seed, index) pairs.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Portable generator: xoshiro256** with uniform and Box-Muller normal draws, so that
// outputs do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t stream) : Rng(derive_seed(seed, stream)) {}

  std::uint64_t next_u64();
  double uniform();                     // [0, 1)
  double uniform(double lo, double hi); // [lo, hi)
  int uniform_int(int lo, int hi);      // inclusive bounds
  double normal();                      // N(0, 1)

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace intent
