#include <doctest.h>

#include <cmath>
#include <numeric>

#include "intent/adaptation.hpp"
#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "oracles.hpp"

using namespace intent;

namespace {

NetConfig toy() { return NetConfig{1, 4, 2, 3}; }

Tensor image(std::uint64_t seed, int hw = 16) { return oracle::random_tensor({1, 1, hw, hw}, seed, 0.0, 1.0); }

double entropy_at(const Network& net, const Tensor& x, double lambda, const AffineParams* theta = nullptr) {
  return mask_entropy(predict(net, x, StatMode{lambda}, theta));
}

}  // namespace

TEST_CASE("ensemble endpoints are pure train and pure test statistics") {
  const Network net = oracle::randomized_net(toy(), 1);
  const Tensor x = image(2);
  const auto members = ensemble_predict(net, x, LambdaGrid::from_step(1.0));
  REQUIRE(members.size() == 2);
  CHECK(members[0].prediction == predict(net, x, StatMode::instant()));
  CHECK(members[1].prediction == predict(net, x, StatMode::tracked()));
}

TEST_CASE("default adaptation costs six forward passes and is repeatable") {
  const Network net = oracle::randomized_net(toy(), 3);
  const Tensor x = image(4);
  net.forward_counter().reset();
  const AdaptationReport a = intent_adapt(net, x, LambdaGrid::from_step(0.2), Strategy{StrategyKind::EntBaln});
  CHECK(net.forward_counter().get() == 6);
  CHECK(a.predictions.size() == 6);
  const AdaptationReport b = intent_adapt(net, x, LambdaGrid::from_step(0.2), Strategy{StrategyKind::EntBaln});
  CHECK(a.integrated == b.integrated);
  CHECK(a.weights == b.weights);
  CHECK(std::abs(std::accumulate(a.weights.begin(), a.weights.end(), 0.0) - 1.0) <= 1e-6);
  for (std::size_t i = 0; i < a.integrated.size(); ++i) {
    float lo = 1.0f, hi = 0.0f;
    for (const ProbMap& p : a.predictions) {
      lo = std::min(lo, p[i]);
      hi = std::max(hi, p[i]);
    }
    CHECK(a.integrated[i] >= lo);
    CHECK(a.integrated[i] <= hi);
  }
}

TEST_CASE("sharpness adds two passes per member") {
  const Network net = oracle::randomized_net(toy(), 5);
  net.forward_counter().reset();
  intent_adapt(net, image(6), LambdaGrid::from_step(0.2), Strategy{StrategyKind::Sharpness});
  CHECK(net.forward_counter().get() == 18);
}

TEST_CASE("a single-member grid reproduces unadapted inference exactly") {
  const Network net = oracle::randomized_net(toy(), 7);
  const Tensor x = image(8);
  const ProbMap plain = predict(net, x, StatMode::tracked());
  for (const Strategy& s : Strategy::all()) {
    const AdaptationReport r = intent_adapt(net, x, LambdaGrid::of({1.0}), s);
    CHECK(r.integrated == plain);
    CHECK(r.weights == std::vector<double>{1.0});
  }
}

TEST_CASE("tracked-statistics forward equals the reference inference") {
  const Network net = oracle::randomized_net(NetConfig{}, 9);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor x = image(100 + seed, 32);
    const auto want = oracle::unet_forward(net, x, 1.0);
    const ProbMap got = predict(net, x, StatMode::tracked());
    double m = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) m = std::max(m, std::abs(got[i] - want[i]));
    CHECK(m <= 1e-6);
  }
}

TEST_CASE("predictions are continuous in lambda") {
  const Network net = oracle::randomized_net(toy(), 10);
  const Tensor x = image(11);
  for (double l : {0.0, 0.3, 0.7, 0.9999}) {
    CHECK(max_abs_diff(predict(net, x, StatMode{l}), predict(net, x, StatMode{l + 1e-4})) < 1e-2);
  }
}

TEST_CASE("sharpness limits and isolation") {
  const Network net = oracle::randomized_net(toy(), 12);
  const Network before = net;
  const Tensor x = image(13);
  for (double lambda : {0.0, 0.6, 1.0}) {
    CAPTURE(lambda);
    // First-order regime: sharpness ~ rho * |g|, so it shrinks linearly to zero.
    const double s4 = sharpness(net, x, lambda, 1e-4), s5 = sharpness(net, x, lambda, 1e-5);
    CHECK(s4 == doctest::Approx(10.0 * s5).epsilon(0.05));
    CHECK(std::abs(sharpness(net, x, lambda, 1e-7)) <= 1e-4);
    CHECK(sharpness(net, x, lambda, 1e-3) >= -1e-4);
  }
  CHECK(parameters_bit_equal(net, before));
  CHECK_THROWS_AS(sharpness(net, x, 0.5, 0.0), ConfigError);
}

TEST_CASE("sharpness is the entropy change along the normalized gradient") {
  Network net = oracle::randomized_net(toy(), 14);
  const Tensor x = image(15);
  const double lambda = 0.4, rho = 0.05;
  // Gradient of the summed entropy, checked elsewhere against finite differences.
  ForwardResult rec = forward(net, x, {StatMode{lambda}, GradScope::Affine});
  ops::sum_entropy(*rec.tape, rec.output);
  const AffineParams g = grad_entropy_wrt_affine(rec);
  double sq = 0.0;
  for (const BnAffine& a : g) {
    for (float v : a.gamma.values()) sq += v * v;
    for (float v : a.beta.values()) sq += v * v;
  }
  AffineParams moved = net.affine();
  for (std::size_t i = 0; i < moved.size(); ++i) {
    for (std::size_t j = 0; j < moved[i].gamma.size(); ++j) {
      moved[i].gamma[j] += static_cast<float>(rho * g[i].gamma[j] / std::sqrt(sq));
      moved[i].beta[j] += static_cast<float>(rho * g[i].beta[j] / std::sqrt(sq));
    }
  }
  Network shifted = net;
  shifted.set_affine(moved);
  const double h0 = oracle::mean_entropy(oracle::unet_forward(net, x, lambda)) * 256;
  const double h1 = oracle::mean_entropy(oracle::unet_forward(shifted, x, lambda)) * 256;
  CHECK(sharpness(net, x, lambda, rho) == doctest::Approx(h1 - h0).epsilon(1e-3));
  // First order: H(theta + rho g/|g|) - H(theta) ~ rho |g|.
  CHECK(sharpness(net, x, lambda, 1e-3) == doctest::Approx(1e-3 * std::sqrt(sq)).epsilon(0.05));
}

TEST_CASE("saturated outputs have a near-zero entropy gradient") {
  Network net = oracle::randomized_net(toy(), 16);
  net.convs.back().bias[0] = 60.0f;
  ForwardResult rec = forward(net, image(17), {StatMode{0.5}, GradScope::Affine});
  ops::mean_entropy(*rec.tape, rec.output);
  for (const BnAffine& a : grad_entropy_wrt_affine(rec)) {
    for (float v : a.gamma.values()) CHECK(std::abs(v) <= 1e-3);
    for (float v : a.beta.values()) CHECK(std::abs(v) <= 1e-3);
  }
  CHECK(sharpness(net, image(17), 0.5) == 0.0);
}

TEST_CASE("duplicating the input leaves the mean-entropy gradient unchanged") {
  const Network net = oracle::randomized_net(toy(), 18);
  const Tensor x = image(19);
  Tensor xx({2, 1, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) xx[i] = xx[i + x.size()] = x[i];
  auto grads = [&](const Tensor& in) {
    ForwardResult rec = forward(net, in, {StatMode{0.3}, GradScope::Affine});
    ops::mean_entropy(*rec.tape, rec.output);
    return grad_entropy_wrt_affine(rec);
  };
  const AffineParams a = grads(x), b = grads(xx);
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t j = 0; j < a[l].gamma.size(); ++j) {
      CHECK(b[l].gamma[j] == doctest::Approx(a[l].gamma[j]).epsilon(1e-4).scale(1e-6));
      CHECK(b[l].beta[j] == doctest::Approx(a[l].beta[j]).epsilon(1e-4).scale(1e-6));
    }
  }
}

TEST_CASE("single BN and sigmoid: tape gradient matches finite differences") {
  GradTape t;
  const Tensor h = oracle::random_tensor({1, 2, 4, 4}, 20, -2.0, 2.0);
  Tensor gamma({2}, {0.8f, 1.3f}), beta({2}, {0.1f, -0.2f});
  const BnStats tracked{{0.1f, 0.2f}, {1.5f, 0.7f}};
  const double lambda = 0.5;
  const auto x = t.leaf(h, false);
  const auto g = t.leaf(gamma, true);
  const auto b = t.leaf(beta, true);
  ops::mean_entropy(t, ops::sigmoid(t, ops::batchnorm(t, x, g, b, tracked, lambda)));
  t.backward();
  auto f = [&] {
    const oracle::Act a(h);
    const oracle::Moments inst = oracle::moments(a);
    oracle::Moments m;
    for (int c = 0; c < 2; ++c) {
      m.mean.push_back(lambda * tracked.mean[c] + (1 - lambda) * inst.mean[c]);
      m.var.push_back(lambda * tracked.var[c] + (1 - lambda) * inst.var[c]);
    }
    std::vector<double> p;
    for (double z : oracle::normalize(a, m, gamma.values(), beta.values()).v) p.push_back(1 / (1 + std::exp(-z)));
    return oracle::mean_entropy(p);
  };
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(oracle::rel_error(t.grad(g)[c], oracle::central_difference(f, gamma[c], 1e-3)) <= 1e-3);
    CHECK(oracle::rel_error(t.grad(b)[c], oracle::central_difference(f, beta[c], 1e-3)) <= 1e-3);
  }
}

TEST_CASE("Tent baseline") {
  const Network net = oracle::randomized_net(toy(), 21);
  const Network before = net;
  const Tensor x = image(22);
  CHECK(tent_baseline(net, x, TentConfig{0, 1e-3}) == predict(net, x, StatMode::instant()));
  const double h_before = entropy_at(net, x, 0.0);
  const double h_after = mask_entropy(tent_baseline(net, x, TentConfig{1, 1e-3}));
  CHECK(h_after <= h_before + 1e-4);
  CHECK(parameters_bit_equal(net, before));
  CHECK_THROWS_AS(tent_baseline(net, x, TentConfig{-1, 1e-3}), ConfigError);
}

TEST_CASE("adaptation of one image is independent of other images") {
  const Network net = oracle::randomized_net(toy(), 23);
  const Tensor a = image(24), b = image(25);
  const Strategy s{StrategyKind::Sharpness};
  const AdaptationReport b_alone = intent_adapt(net, b, LambdaGrid::from_step(0.25), s);
  intent_adapt(net, a, LambdaGrid::from_step(0.25), s);
  tent_baseline(net, a);
  CHECK(intent_adapt(net, b, LambdaGrid::from_step(0.25), s).integrated == b_alone.integrated);
}

TEST_CASE("scoring a report") {
  const Network net = oracle::randomized_net(toy(), 26);
  AdaptationReport r = intent_adapt(net, image(27), LambdaGrid::from_step(0.5), Strategy{StrategyKind::Average});
  const std::vector<std::uint8_t> truth = r.integrated.threshold();
  score_report(r, truth);
  CHECK(*r.dice == 1.0);
  CHECK(r.member_dice->size() == 3);
}
