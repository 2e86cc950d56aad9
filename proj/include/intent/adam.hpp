#pragma once

#include <cstdint>
#include <vector>

#include "intent/tensor.hpp"

namespace intent {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one per parameter tensor, plus the shared step counter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` in place. State buffers are created lazily on
// the first call. Throws ShapeError on any param/grad/state mismatch.
void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamConfig& config = {});

}  // namespace intent
