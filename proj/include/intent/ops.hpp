#pragma once

#include "intent/kernels.hpp"
#include "intent/tape.hpp"

// Tape-recording wrappers over the kernels. Each returns the id of the result node.
namespace intent::ops {

using NodeId = GradTape::NodeId;

NodeId conv2d(GradTape& tape, NodeId x, NodeId weight, NodeId bias, int stride, int padding);

// Normalizes with lambda * tracked + (1 - lambda) * instant_stats(x). When `instant_out` is
// non-null it receives the instant statistics of x (empty when lambda == 1).
NodeId batchnorm(GradTape& tape, NodeId x, NodeId gamma, NodeId beta, const BnStats& tracked,
                 double lambda, float eps = kBnEps, BnStats* instant_out = nullptr);

NodeId relu(GradTape& tape, NodeId x);
NodeId maxpool2(GradTape& tape, NodeId x);
NodeId upsample2(GradTape& tape, NodeId x);
NodeId concat_channels(GradTape& tape, NodeId a, NodeId b);
NodeId sigmoid(GradTape& tape, NodeId z);

// Scalar binary prediction entropy of a probability tensor, mean or sum over all elements.
// Probabilities are clamped before the logarithm; the clamp is passed straight through in
// the backward pass.
NodeId mean_entropy(GradTape& tape, NodeId probs);
NodeId sum_entropy(GradTape& tape, NodeId probs);

// 0.5 * BCE + 0.5 * (1 - soft Dice) against a binary target of the same shape.
NodeId bce_dice_loss(GradTape& tape, NodeId probs, const Tensor& target);

}  // namespace intent::ops
