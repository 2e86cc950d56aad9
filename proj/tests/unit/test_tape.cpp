#include <doctest.h>

#include <cmath>

#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "intent/tape.hpp"
#include "oracles.hpp"

using namespace intent;

namespace {

// y = a * b elementwise, recorded by hand.
GradTape::NodeId mul(GradTape& t, GradTape::NodeId a, GradTape::NodeId b) {
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= t.value(b)[i];
  return t.record(std::move(out), {a, b}, [a, b](GradTape& tape, GradTape::NodeId self) {
    const Tensor& g = tape.grad(self);
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] *= tape.value(b)[i];
      gb[i] *= tape.value(a)[i];
    }
    tape.accumulate(a, ga);
    tape.accumulate(b, gb);
  });
}

GradTape::NodeId sum(GradTape& t, GradTape::NodeId a) {
  float s = 0.0f;
  for (float v : t.value(a).values()) s += v;
  return t.record(Tensor({1}, {s}), {a}, [a](GradTape& tape, GradTape::NodeId self) {
    tape.accumulate(a, Tensor(tape.value(a).shape(), tape.grad(self)[0]));
  });
}

}  // namespace

TEST_CASE("tape product rule and fan-out accumulation") {
  GradTape t;
  const auto x = t.leaf(Tensor({3}, {1.0f, 2.0f, 3.0f}), true);
  const auto c = t.leaf(Tensor({3}, {4.0f, 5.0f, 6.0f}), false);
  // L = sum(x * x * c): dL/dx = 2 x c.
  const auto xx = mul(t, x, x);
  const auto l = sum(t, mul(t, xx, c));
  CHECK(t.value(l)[0] == doctest::Approx(1 * 4 + 4 * 5 + 9 * 6));
  t.backward();
  CHECK(t.grad(x)[0] == doctest::Approx(8.0));
  CHECK(t.grad(x)[1] == doctest::Approx(20.0));
  CHECK(t.grad(x)[2] == doctest::Approx(36.0));
  CHECK(t.grad(c).empty());
  CHECK_FALSE(t.requires_grad(c));
}

TEST_CASE("tape runs closures in reverse recording order and skips constant branches") {
  GradTape t;
  const auto x = t.leaf(Tensor({2}, 1.0f), true);
  const auto k = t.leaf(Tensor({2}, 2.0f), false);
  const auto kk = mul(t, k, k);  // no input needs a gradient, so no closure is kept
  const auto y = mul(t, x, kk);
  const auto l = sum(t, y);
  t.backward();
  CHECK(t.backward_trace() == std::vector<GradTape::NodeId>{l, y});
  CHECK(t.grad(x)[0] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar final node") {
  GradTape t;
  const auto x = t.leaf(Tensor({2}, 1.0f), true);
  mul(t, x, x);
  CHECK_THROWS_AS(t.backward(), ContractError);
}

TEST_CASE("entropy ops agree with the pixel formula and its derivative") {
  GradTape t;
  const Tensor p({1, 1, 2, 3}, {0.1f, 0.5f, 0.9f, 1e-9f, 0.999f, 0.3f});
  const auto x = t.leaf(p, true);
  const auto h = ops::mean_entropy(t, x);
  double want = 0.0;
  for (float v : p.values()) want += oracle::entropy(v);
  CHECK(t.value(h)[0] == doctest::Approx(want / 6.0).epsilon(1e-6));
  t.backward();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), 1e-7, 1.0 - 1e-7);
    CHECK(t.grad(x)[i] == doctest::Approx(std::log((1.0 - q) / q) / 6.0).epsilon(1e-5));
  }
}

TEST_CASE("bce-dice loss gradient matches central differences") {
  GradTape t;
  Tensor p = oracle::random_tensor({2, 1, 3, 3}, 5, 0.05, 0.95);
  Tensor y({2, 1, 3, 3});
  for (std::size_t i = 0; i < y.size(); i += 2) y[i] = 1.0f;
  const auto x = t.leaf(p, true);
  ops::bce_dice_loss(t, x, y);
  t.backward();
  // 0.5 * mean BCE + 0.5 * (1 - (2 sum py + 1) / (sum p + sum y + 1)), in double.
  auto f = [&] {
    double bce = 0.0, inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      bce -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
      inter += p[i] * y[i];
      uni += p[i] + y[i];
    }
    return 0.5 * bce / static_cast<double>(p.size()) + 0.5 * (1.0 - (2.0 * inter + 1.0) / (uni + 1.0));
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(oracle::rel_error(t.grad(x)[i], oracle::central_difference(f, p[i], 1e-3)) < 1e-3);
  }
}
