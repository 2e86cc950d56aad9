#pragma once

#include <span>

#include "intent/kernels.hpp"

// Straightforward single-threaded loop implementations of the forward kernels. They are
// kept as the correctness baseline for tests and as the serial side of the benchmark.
namespace intent::reference {

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias, int stride,
              int padding);
BnStats instant_stats(const Tensor& h);
Tensor batchnorm_apply(const Tensor& h, const BnStats& stats, std::span<const float> gamma,
                       std::span<const float> beta, float eps = kBnEps);
Tensor relu(const Tensor& x);
Tensor maxpool2(const Tensor& x);
Tensor upsample2(const Tensor& x);
Tensor sigmoid(const Tensor& z);

}  // namespace intent::reference
