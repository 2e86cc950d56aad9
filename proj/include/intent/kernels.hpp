#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "intent/tensor.hpp"

namespace intent {

// Per-channel normalization statistics. `var` is a variance, not a standard deviation.
struct BnStats {
  std::vector<float> mean;
  std::vector<float> var;

  std::size_t channels() const { return mean.size(); }
  void validate() const;
  friend bool operator==(const BnStats&, const BnStats&) = default;
};

inline constexpr float kBnEps = 1e-5f;

// Parallel (OpenMP) forward/backward kernels over NCHW float tensors. All kernels are
// deterministic: reductions are performed per output element in a fixed order, so the
// result does not depend on the thread count.
namespace kernels {

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias, int stride,
              int padding);

struct ConvGrads {
  Tensor dinput;              // empty unless requested
  Tensor dweight;             // empty unless requested
  std::vector<float> dbias;   // empty unless requested
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& dout, int stride,
                          int padding, bool need_dinput, bool need_dparams);

// Biased mean/variance over N, H, W for every channel, accumulated in double.
BnStats instant_stats(const Tensor& h);

// lambda * tracked + (1 - lambda) * instant, elementwise on mean and variance.
BnStats mix_stats(const BnStats& tracked, const BnStats& instant, double lambda);

Tensor batchnorm_apply(const Tensor& h, const BnStats& stats, std::span<const float> gamma,
                       std::span<const float> beta, float eps = kBnEps);

struct BnGrads {
  Tensor dh;
  std::vector<float> dgamma;
  std::vector<float> dbeta;
};

// Backward of batchnorm_apply where the applied statistics are
//   lambda * tracked + (1 - lambda) * instant_stats(h).
// The instant-statistics path is differentiated through unless lambda == 1.
BnGrads batchnorm_backward(const Tensor& h, const BnStats& applied, const BnStats& instant,
                           std::span<const float> gamma, double lambda, float eps, const Tensor& dy,
                           bool need_dh);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// 2x2 stride-2 max pooling; `argmax` receives the flat input index chosen for every output.
Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>* argmax = nullptr);
Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::int32_t>& argmax,
                         const Tensor& dy);

Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a channel-concatenated gradient back into the two inputs' gradients.
void split_channels(const Tensor& dy, int channels_a, Tensor& da, Tensor& db);

Tensor sigmoid(const Tensor& z);
// Uses the pre-activation so the derivative stays accurate where sigmoid saturates in float.
Tensor sigmoid_backward(const Tensor& z, const Tensor& dy);

}  // namespace kernels
}  // namespace intent
