#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "intent/kernels.hpp"
#include "intent/probmap.hpp"
#include "intent/tape.hpp"

namespace intent {

struct NetConfig {
  int in_channels = 1;
  int base_width = 8;
  int depth = 3;  // number of down/up levels
  int kernel = 3;

  void validate() const;
  // Input height/width must be multiples of this.
  int spatial_multiple() const { return 1 << depth; }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Mixing coefficient between tracked (1) and instant (0) statistics.
struct StatMode {
  double lambda = 1.0;

  static StatMode tracked() { return {1.0}; }
  static StatMode instant() { return {0.0}; }
  void validate() const;
};

struct ConvLayer {
  std::string name;
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]
  int stride = 1;
  int padding = 0;
};

struct BnLayer {
  std::string name;
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  BnStats tracked;
};

// Scale/shift of one BN layer; the set of these is what test-time methods perturb.
struct BnAffine {
  Tensor gamma;
  Tensor beta;
};
using AffineParams = std::vector<BnAffine>;

enum class LayerKind { Conv, BatchNorm };
struct LayerRef {
  LayerKind kind;
  int index;
};

// Counts forward passes; copying a network copies the current count.
class ForwardCounter {
 public:
  ForwardCounter() = default;
  ForwardCounter(const ForwardCounter& o) : n_(o.get()) {}
  ForwardCounter& operator=(const ForwardCounter& o) {
    n_.store(o.get());
    return *this;
  }
  void bump() const { n_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t get() const { return n_.load(std::memory_order_relaxed); }
  void reset() const { n_.store(0); }

 private:
  mutable std::atomic<std::uint64_t> n_{0};
};

// UNet-style encoder/decoder: per level two (conv3x3 -> BN -> ReLU) blocks, 2x2 max-pool
// down, nearest x2 upsample + conv3x3 -> BN -> ReLU up, skip concatenation, 1x1 conv and
// sigmoid head.
class Network {
 public:
  NetConfig config;
  std::vector<ConvLayer> convs;
  std::vector<BnLayer> bns;
  std::vector<LayerRef> order;  // execution order of all layers

  AffineParams affine() const;
  void set_affine(const AffineParams& a);
  std::size_t affine_size() const;  // total gamma + beta elements

  const ForwardCounter& forward_counter() const { return counter_; }

 private:
  ForwardCounter counter_;
};

Network build(const NetConfig& config, std::uint64_t seed);

enum class GradScope {
  None,    // inference only
  Affine,  // gradients for BN gamma/beta only
  All,     // gradients for every parameter (training)
};

struct ForwardOptions {
  StatMode mode;
  GradScope grads = GradScope::None;
  // Replaces the network's own gamma/beta for this call without touching the network.
  const AffineParams* affine_override = nullptr;
};

struct ForwardResult {
  Tensor probs;  // [N, 1, H, W]
  // Present when grads != None. Node ids index into the tape.
  std::unique_ptr<GradTape> tape;
  GradTape::NodeId output = -1;
  std::vector<GradTape::NodeId> conv_weight, conv_bias, bn_gamma, bn_beta;
  // Instant statistics seen by every BN layer (empty entries when lambda == 1).
  std::vector<BnStats> instant;
};

// Never mutates parameters or tracked statistics.
ForwardResult forward(const Network& net, const Tensor& x, const ForwardOptions& options);

// Runs backward from the tape's final node (which must be a scalar, e.g. an entropy appended
// to a GradScope::Affine forward) and returns d(final)/d(gamma, beta) for every BN layer.
// Throws ContractError without a tape or when the tape does not end in a scalar.
AffineParams grad_entropy_wrt_affine(ForwardResult& record);

// Single-image convenience: x is [1, C, H, W].
ProbMap predict(const Network& net, const Tensor& x, StatMode mode,
                const AffineParams* affine_override = nullptr);

// Loads an H x W image into a [1, 1, H, W] tensor.
Tensor image_tensor(int height, int width, std::span<const float> pixels);

bool parameters_bit_equal(const Network& a, const Network& b);

}  // namespace intent
