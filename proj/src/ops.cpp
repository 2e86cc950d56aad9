#include "intent/ops.hpp"

#include <cmath>

#include "intent/entropy.hpp"
#include "intent/errors.hpp"
#include "intent/trainer.hpp"

namespace intent::ops {

NodeId conv2d(GradTape& tape, NodeId x, NodeId weight, NodeId bias, int stride, int padding) {
  Tensor out = kernels::conv2d(tape.value(x), tape.value(weight), tape.value(bias).values(), stride, padding);
  return tape.record(std::move(out), {x, weight, bias}, [=](GradTape& t, NodeId self) {
    const bool need_dx = t.requires_grad(x);
    const bool need_dp = t.requires_grad(weight) || t.requires_grad(bias);
    kernels::ConvGrads g =
        kernels::conv2d_backward(t.value(x), t.value(weight), t.grad(self), stride, padding, need_dx, need_dp);
    if (need_dx) t.accumulate(x, g.dinput);
    if (need_dp) {
      t.accumulate(weight, g.dweight);
      t.accumulate(bias, Tensor(t.value(bias).shape(), std::move(g.dbias)));
    }
  });
}

NodeId batchnorm(GradTape& tape, NodeId x, NodeId gamma, NodeId beta, const BnStats& tracked,
                 double lambda, float eps, BnStats* instant_out) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("batchnorm: lambda outside [0,1]");
  const Tensor& h = tape.value(x);
  BnStats instant;
  if (lambda != 1.0) instant = kernels::instant_stats(h);
  BnStats applied = lambda == 1.0 ? tracked : kernels::mix_stats(tracked, instant, lambda);
  Tensor out = kernels::batchnorm_apply(h, applied, tape.value(gamma).values(), tape.value(beta).values(), eps);
  if (instant_out) *instant_out = instant;
  return tape.record(std::move(out), {x, gamma, beta},
                     [=, applied = std::move(applied), instant = std::move(instant)](GradTape& t, NodeId self) {
                       kernels::BnGrads g = kernels::batchnorm_backward(
                           t.value(x), applied, instant, t.value(gamma).values(), lambda, eps, t.grad(self),
                           t.requires_grad(x));
                       if (t.requires_grad(x)) t.accumulate(x, g.dh);
                       t.accumulate(gamma, Tensor(t.value(gamma).shape(), std::move(g.dgamma)));
                       t.accumulate(beta, Tensor(t.value(beta).shape(), std::move(g.dbeta)));
                     });
}

NodeId relu(GradTape& tape, NodeId x) {
  return tape.record(kernels::relu(tape.value(x)), {x}, [=](GradTape& t, NodeId self) {
    t.accumulate(x, kernels::relu_backward(t.value(x), t.grad(self)));
  });
}

NodeId maxpool2(GradTape& tape, NodeId x) {
  std::vector<std::int32_t> argmax;
  Tensor out = kernels::maxpool2(tape.value(x), &argmax);
  return tape.record(std::move(out), {x}, [=, argmax = std::move(argmax)](GradTape& t, NodeId self) {
    t.accumulate(x, kernels::maxpool2_backward(t.value(x).shape(), argmax, t.grad(self)));
  });
}

NodeId upsample2(GradTape& tape, NodeId x) {
  return tape.record(kernels::upsample2(tape.value(x)), {x}, [=](GradTape& t, NodeId self) {
    t.accumulate(x, kernels::upsample2_backward(t.grad(self)));
  });
}

NodeId concat_channels(GradTape& tape, NodeId a, NodeId b) {
  const int ca = tape.value(a).dim(1);
  return tape.record(kernels::concat_channels(tape.value(a), tape.value(b)), {a, b},
                     [=](GradTape& t, NodeId self) {
                       Tensor da, db;
                       kernels::split_channels(t.grad(self), ca, da, db);
                       t.accumulate(a, da);
                       t.accumulate(b, db);
                     });
}

NodeId sigmoid(GradTape& tape, NodeId z) {
  return tape.record(kernels::sigmoid(tape.value(z)), {z}, [=](GradTape& t, NodeId self) {
    t.accumulate(z, kernels::sigmoid_backward(t.value(z), t.grad(self)));
  });
}

namespace {

NodeId entropy_node(GradTape& tape, NodeId probs, bool mean) {
  const Tensor& p = tape.value(probs);
  if (p.empty()) throw ShapeError("entropy: empty probability tensor");
  const double scale = mean ? 1.0 / static_cast<double>(p.size()) : 1.0;
  const double value = mask_entropy_sum(p.values()) * scale;
  return tape.record(Tensor({1}, {static_cast<float>(value)}), {probs}, [=](GradTape& t, NodeId self) {
    const Tensor& pv = t.value(probs);
    const double upstream = t.grad(self)[0] * scale;
    Tensor g(pv.shape());
    for (std::size_t i = 0; i < pv.size(); ++i) g[i] = static_cast<float>(upstream * pixel_entropy_slope(pv[i]));
    t.accumulate(probs, g);
  });
}

}  // namespace

NodeId mean_entropy(GradTape& tape, NodeId probs) { return entropy_node(tape, probs, true); }
NodeId sum_entropy(GradTape& tape, NodeId probs) { return entropy_node(tape, probs, false); }

NodeId bce_dice_loss(GradTape& tape, NodeId probs, const Tensor& target) {
  const Tensor& p = tape.value(probs);
  require_same_shape(p, target, "bce_dice_loss");
  const LossTerms terms = bce_dice_terms(p.values(), target.values());
  return tape.record(Tensor({1}, {static_cast<float>(terms.loss)}), {probs},
                     [=](GradTape& t, NodeId self) {
                       const Tensor& pv = t.value(probs);
                       const double upstream = t.grad(self)[0];
                       const double m = static_cast<double>(pv.size());
                       const double denom = terms.union_sum + kDiceSmooth;
                       const double numer = 2.0 * terms.intersection + kDiceSmooth;
                       Tensor g(pv.shape());
                       for (std::size_t i = 0; i < pv.size(); ++i) {
                         const double q = clamp_prob(pv[i]);
                         const double y = target[i];
                         const double d_bce = -(y / q - (1.0 - y) / (1.0 - q)) / m;
                         const double d_dice = (2.0 * y * denom - numer) / (denom * denom);
                         g[i] = static_cast<float>(upstream * (0.5 * d_bce - 0.5 * d_dice));
                       }
                       t.accumulate(probs, g);
                     });
}

}  // namespace intent::ops
