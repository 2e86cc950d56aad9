#include <doctest.h>

#include <cmath>

#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "intent/network.hpp"
#include "oracles.hpp"

using namespace intent;

namespace {

NetConfig toy() { return NetConfig{1, 4, 2, 3}; }

double max_abs(std::span<const float> a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("default UNet layout") {
  const Network net = build(NetConfig{}, 1);
  CHECK(net.convs.size() == 18);
  CHECK(net.bns.size() == 17);
  CHECK(net.order.size() == 35);
  CHECK(net.convs.front().name == "enc0.block1.conv");
  CHECK(net.convs.back().name == "head.conv");
  CHECK(net.convs.back().weight.shape() == Shape{1, 8, 1, 1});
  CHECK(net.bns[6].name == "mid.block1.bn");
  CHECK(net.bns[6].gamma.size() == 64);
  // Every gamma starts at 1, every beta at 0, tracked stats at (0, 1).
  for (const BnLayer& bn : net.bns) {
    for (float g : bn.gamma.values()) CHECK(g == 1.0f);
    for (float v : bn.tracked.var) CHECK(v == 1.0f);
  }
}

TEST_CASE("layer counts follow the depth") {
  for (int d = 1; d <= 4; ++d) {
    const Network net = build(NetConfig{1, 4, d, 3}, 3);
    CHECK(net.bns.size() == static_cast<std::size_t>(2 * (2 * d + 1) + d));
    CHECK(net.convs.size() == net.bns.size() + 1);
  }
}

TEST_CASE("initialization is a function of the seed") {
  CHECK(parameters_bit_equal(build(NetConfig{}, 7), build(NetConfig{}, 7)));
  CHECK_FALSE(parameters_bit_equal(build(NetConfig{}, 7), build(NetConfig{}, 8)));
}

TEST_CASE("He initialization scale") {
  const Network net = build(NetConfig{}, 5);
  const ConvLayer& c = net.convs[7];  // 32 -> 32 channels, fan-in 288
  double s2 = 0.0;
  for (float w : c.weight.values()) s2 += static_cast<double>(w) * w;
  const double var = s2 / static_cast<double>(c.weight.size());
  CHECK(var == doctest::Approx(2.0 / 288.0).epsilon(0.1));
}

TEST_CASE("forward agrees with the double-precision oracle for any lambda") {
  const Network net = oracle::randomized_net(toy(), 11);
  const Tensor x = oracle::random_tensor({2, 1, 16, 16}, 12, 0.0, 1.0);
  for (double lambda : {1.0, 0.6, 0.0}) {
    CAPTURE(lambda);
    const ForwardResult r = forward(net, x, {StatMode{lambda}});
    CHECK(max_abs(r.probs.values(), oracle::unet_forward(net, x, lambda)) < 1e-5);
  }
}

TEST_CASE("forward does not mutate the network and counts passes") {
  const Network net = oracle::randomized_net(toy(), 13);
  const Network copy = net;
  const Tensor x = oracle::random_tensor({1, 1, 8, 8}, 14, 0.0, 1.0);
  net.forward_counter().reset();
  for (double lambda : {0.0, 0.5, 1.0}) {
    ForwardOptions opt{StatMode{lambda}, GradScope::Affine};
    ForwardResult r = forward(net, x, opt);
    ops::mean_entropy(*r.tape, r.output);
    grad_entropy_wrt_affine(r);
  }
  CHECK(net.forward_counter().get() == 3);
  CHECK(parameters_bit_equal(net, copy));
}

TEST_CASE("affine override replaces gamma and beta for one call") {
  Network net = oracle::randomized_net(toy(), 15);
  const Tensor x = oracle::random_tensor({1, 1, 8, 8}, 16, 0.0, 1.0);
  AffineParams a = net.affine();
  for (BnAffine& l : a) {
    for (float& g : l.gamma.values()) g *= 1.1f;
  }
  const ProbMap via_override = predict(net, x, StatMode{0.5}, &a);
  Network edited = net;
  edited.set_affine(a);
  CHECK(via_override == predict(edited, x, StatMode{0.5}));
  CHECK_FALSE(via_override == predict(net, x, StatMode{0.5}));
}

TEST_CASE("forward input validation") {
  const Network net = build(toy(), 1);
  CHECK_THROWS_AS(forward(net, Tensor({1, 2, 8, 8}), {}), ShapeError);
  CHECK_THROWS_AS(forward(net, Tensor({1, 1, 6, 8}), {}), ShapeError);
  CHECK_THROWS_AS(forward(net, Tensor({1, 1, 8, 8}), {StatMode{1.5}}), ConfigError);
  CHECK_THROWS_AS(predict(net, Tensor({2, 1, 8, 8}), StatMode{}), ShapeError);
  CHECK_THROWS_AS(build(NetConfig{1, 8, 0, 3}, 1), ConfigError);
}

TEST_CASE("gradient without a recorded tape is a contract error") {
  const Network net = build(toy(), 1);
  ForwardResult r = forward(net, Tensor({1, 1, 8, 8}, 0.5f), {});
  CHECK_THROWS_AS(grad_entropy_wrt_affine(r), ContractError);
}

TEST_CASE("entropy gradient w.r.t. BN affine parameters matches finite differences") {
  Network net = oracle::randomized_net(toy(), 21);
  const Tensor x = oracle::random_tensor({1, 1, 8, 8}, 22, 0.0, 1.0);
  for (double lambda : {0.0, 0.5, 1.0}) {
    CAPTURE(lambda);
    ForwardResult r = forward(net, x, {StatMode{lambda}, GradScope::Affine});
    ops::mean_entropy(*r.tape, r.output);
    const AffineParams g = grad_entropy_wrt_affine(r);
    auto f = [&] { return oracle::mean_entropy(oracle::unet_forward(net, x, lambda)); };
    auto pattern = [&] {
      oracle::Pattern p;
      oracle::unet_forward(net, x, lambda, &p);
      return p;
    };
    Rng rng(23);
    int checked = 0;
    for (int attempt = 0; attempt < 200 && checked < 8; ++attempt) {
      const auto layer = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(net.bns.size()) - 1));
      const auto ch = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(net.bns[layer].gamma.size()) - 1));
      const bool beta = rng.uniform() < 0.5;
      float& param = beta ? net.bns[layer].beta[ch] : net.bns[layer].gamma[ch];
      if (!oracle::smooth_on_stencil(pattern, param, 1e-3)) continue;
      const double analytic = beta ? g[layer].beta[ch] : g[layer].gamma[ch];
      CHECK(oracle::rel_error(analytic, oracle::central_difference(f, param, 1e-3), 1e-5) < 1e-3);
      ++checked;
    }
    CHECK(checked == 8);
  }
}

TEST_CASE("image_tensor shape") {
  const std::vector<float> px(12, 0.25f);
  const Tensor t = image_tensor(3, 4, px);
  CHECK(t.shape() == Shape{1, 1, 3, 4});
  CHECK(t[11] == 0.25f);
}
