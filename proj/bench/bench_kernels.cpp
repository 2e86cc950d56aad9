// Serial reference kernels vs the OpenMP/BLAS kernels on UNet-sized layers.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "intent/kernels.hpp"
#include "intent/reference.hpp"
#include "intent/rng.hpp"

using namespace intent;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

double seconds_per_call(const std::function<void()>& fn, double budget = 0.5) {
  fn();
  int calls = 0;
  const auto start = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++calls;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } while (elapsed < budget);
  return elapsed / calls;
}

void row(const std::string& name, double serial, double parallel) {
  std::printf("%-34s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %13s %13s %9s\n", "kernel", "reference", "parallel", "speedup");

  struct ConvCase {
    int n, cin, cout, hw;
  };
  for (const ConvCase& c : std::vector<ConvCase>{{1, 1, 8, 64}, {1, 8, 8, 64}, {10, 16, 16, 32}, {10, 64, 32, 8}}) {
    const Tensor x = random_tensor({c.n, c.cin, c.hw, c.hw}, 1);
    const Tensor w = random_tensor({c.cout, c.cin, 3, 3}, 2);
    const std::vector<float> b(static_cast<std::size_t>(c.cout), 0.1f);
    char name[80];
    std::snprintf(name, sizeof name, "conv3x3 n%d %d->%d %dx%d", c.n, c.cin, c.cout, c.hw, c.hw);
    row(name, seconds_per_call([&] { (void)reference::conv2d(x, w, b, 1, 1); }),
        seconds_per_call([&] { (void)kernels::conv2d(x, w, b, 1, 1); }));
  }

  const Tensor h = random_tensor({10, 16, 64, 64}, 3);
  const std::vector<float> gamma(16, 1.0f), beta(16, 0.0f);
  row("instant_stats n10 c16 64x64", seconds_per_call([&] { (void)reference::instant_stats(h); }),
      seconds_per_call([&] { (void)kernels::instant_stats(h); }));
  const BnStats stats = kernels::instant_stats(h);
  row("batchnorm_apply n10 c16 64x64",
      seconds_per_call([&] { (void)reference::batchnorm_apply(h, stats, gamma, beta); }),
      seconds_per_call([&] { (void)kernels::batchnorm_apply(h, stats, gamma, beta); }));
  row("relu n10 c16 64x64", seconds_per_call([&] { (void)reference::relu(h); }),
      seconds_per_call([&] { (void)kernels::relu(h); }));
  row("maxpool2 n10 c16 64x64", seconds_per_call([&] { (void)reference::maxpool2(h); }),
      seconds_per_call([&] { (void)kernels::maxpool2(h); }));
  return 0;
}
