#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "intent/adaptation.hpp"
#include "intent/errors.hpp"
#include "intent/rng.hpp"

using namespace intent;

namespace {

EntropyStats stats(double mean, double fg, double bg) {
  EntropyStats s;
  s.mean_entropy = mean;
  s.fg_entropy = fg;
  s.bg_entropy = bg;
  return s;
}

struct Profile {
  std::vector<EntropyStats> entropy;
  std::vector<double> sharp;
};

Profile random_profile(Rng& rng) {
  Profile p;
  const int n = rng.uniform_int(2, 12);
  for (int i = 0; i < n; ++i) {
    p.entropy.push_back(stats(rng.uniform(0.0, 0.7), rng.uniform(0.0, 0.7), rng.uniform(0.0, 0.7)));
    p.sharp.push_back(rng.uniform(-5.0, 20.0));
  }
  // Occasionally force ties.
  if (rng.uniform() < 0.2) p.entropy[1] = p.entropy[0];
  return p;
}

}  // namespace

TEST_CASE("weights are nonnegative and sum to one for every strategy") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const Profile p = random_profile(rng);
    for (const Strategy& s : Strategy::all()) {
      const auto w = compute_weights(s, p.entropy, p.sharp);
      REQUIRE(w.size() == p.entropy.size());
      for (double v : w) CHECK(v >= 0.0);
      CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("ENT_NORM worked example") {
  const std::vector<EntropyStats> e{stats(0.2, 0, 0), stats(0.7, 0, 0)};
  const Strategy s{StrategyKind::EntNorm};
  CHECK(strategy_scores(s, e, {}) == std::vector<double>{-0.2, -0.7});
  const auto w = compute_weights(s, e);
  CHECK(w[0] == doctest::Approx(0.731).epsilon(1e-3));
  CHECK(w[1] == doctest::Approx(0.269).epsilon(1e-3));
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("ENTROPY is softmax of raw negative entropies") {
  const std::vector<EntropyStats> e{stats(0.2, 0, 0), stats(0.7, 0, 0)};
  const auto w = compute_weights(Strategy{StrategyKind::Entropy}, e);
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-12));
}

TEST_CASE("ENT_BALN scores average the foreground and background entropies") {
  const std::vector<EntropyStats> e{stats(0.9, 0.1, 0.3), stats(0.0, 0.5, 0.5)};
  CHECK(strategy_scores(Strategy{StrategyKind::EntBaln}, e, {}) == std::vector<double>{-0.2, -0.5});
}

TEST_CASE("identical members give uniform weights") {
  const std::vector<EntropyStats> e(4, stats(0.3, 0.2, 0.4));
  const std::vector<double> sharp(4, 1.5);
  for (const Strategy& s : Strategy::all()) {
    if (s.kind == StrategyKind::EntMin || s.kind == StrategyKind::EntTopK) continue;
    for (double w : compute_weights(s, e, sharp)) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("ENT_MIN and ENT_TOPK selections") {
  const std::vector<EntropyStats> e{stats(0.3, 0, 0), stats(0.1, 0, 0), stats(0.5, 0, 0)};
  CHECK(compute_weights(Strategy{StrategyKind::EntMin}, e) == std::vector<double>{0, 1, 0});
  CHECK(compute_weights(Strategy{StrategyKind::EntTopK, 2}, e) == std::vector<double>{0.5, 0.5, 0});
  CHECK(compute_weights(Strategy{StrategyKind::EntTopK, 3}, e) == std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK_THROWS_AS(compute_weights(Strategy{StrategyKind::EntTopK, 4}, e), ConfigError);
  // Ties go to the smaller lambda, i.e. the earlier member.
  const std::vector<EntropyStats> tied{stats(0.2, 0, 0), stats(0.1, 0, 0), stats(0.1, 0, 0)};
  CHECK(compute_weights(Strategy{StrategyKind::EntMin}, tied) == std::vector<double>{0, 1, 0});
}

TEST_CASE("ENT_MIN agrees with a brute-force scan") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const Profile p = random_profile(rng);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.entropy.size(); ++i) {
      if (p.entropy[i].mean_entropy < p.entropy[best].mean_entropy) best = i;
    }
    const auto w = compute_weights(Strategy{StrategyKind::EntMin}, p.entropy);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == (i == best ? 1.0 : 0.0));
  }
}

TEST_CASE("softmax strategies are shift invariant and range-normalized ones scale invariant") {
  Rng rng(3);
  const std::vector<Strategy> shift{{StrategyKind::Entropy}, {StrategyKind::EntNorm}, {StrategyKind::EntBaln},
                                    {StrategyKind::Sharpness}};
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(2, 10);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (double& v : scores) v = rng.uniform(-3.0, 3.0);
    const double c = rng.uniform(-50.0, 50.0);
    const double k = rng.uniform(0.01, 100.0);
    std::vector<double> shifted = scores, scaled = scores;
    for (double& v : shifted) v += c;
    for (double& v : scaled) v *= k;
    for (const Strategy& s : shift) {
      const auto base = softmax_weights(s, scores);
      const auto a = softmax_weights(s, shifted);
      for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(a[i] - base[i]) <= 1e-6);
      if (s.kind == StrategyKind::Entropy) continue;
      const auto b = softmax_weights(s, scaled);
      for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(b[i] - base[i]) <= 1e-6);
    }
  }
}

TEST_CASE("lower sharpness earns more weight") {
  const std::vector<EntropyStats> e(3, stats(0.3, 0.3, 0.3));
  const auto w = compute_weights(Strategy{StrategyKind::Sharpness}, e, std::vector<double>{4.0, 1.0, 2.0});
  CHECK(w[1] > w[2]);
  CHECK(w[2] > w[0]);
  CHECK_THROWS_AS(compute_weights(Strategy{StrategyKind::Sharpness}, e), ShapeError);
}

TEST_CASE("weights need at least two members") {
  const std::vector<EntropyStats> one{stats(0.1, 0, 0)};
  CHECK_THROWS_AS(compute_weights(Strategy{}, one), ConfigError);
}

TEST_CASE("strategy names round trip") {
  for (const Strategy& s : Strategy::all()) CHECK(Strategy::parse(s.name()) == s);
  CHECK(Strategy::parse("ENT_BALN").kind == StrategyKind::EntBaln);
  CHECK(Strategy::parse("ent-topk:3").k == 3);
  CHECK(Strategy::parse(Strategy{StrategyKind::EntTopK, 4}.name()).k == 4);
  CHECK_THROWS_AS(Strategy::parse("median"), ConfigError);
  CHECK_THROWS_AS(Strategy::parse("ent-min:2"), ConfigError);
  CHECK_THROWS_AS(Strategy::parse("ent-topk:0"), ConfigError);
}

TEST_CASE("integration examples and convexity") {
  const ProbMap a(1, 2, {0.2f, 0.2f}), b(1, 2, {0.8f, 0.8f});
  const std::vector<ProbMap> two{a, b};
  const ProbMap mid = integrate(two, std::vector<double>{0.5, 0.5});
  for (float v : mid.values()) CHECK(v == doctest::Approx(0.5));
  CHECK(integrate(two, std::vector<double>{0.0, 1.0}) == b);
  CHECK_THROWS_AS(integrate(two, std::vector<double>{0.5, 0.6}), ConfigError);
  CHECK_THROWS_AS(integrate(two, std::vector<double>{1.5, -0.5}), ConfigError);

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 6);
    std::vector<ProbMap> maps;
    for (int k = 0; k < n; ++k) {
      std::vector<float> v(30);
      for (float& x : v) x = static_cast<float>(rng.uniform());
      maps.emplace_back(5, 6, v);
    }
    std::vector<double> w(static_cast<std::size_t>(n));
    for (double& x : w) x = rng.uniform();
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    const ProbMap out = integrate(maps, w);
    for (std::size_t i = 0; i < out.size(); ++i) {
      float lo = 1.0f, hi = 0.0f;
      for (const ProbMap& m : maps) {
        lo = std::min(lo, m[i]);
        hi = std::max(hi, m[i]);
      }
      CHECK(out[i] >= lo);
      CHECK(out[i] <= hi);
    }
  }
}

TEST_CASE("lambda grids") {
  CHECK(LambdaGrid::from_step(0.2).values == std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  CHECK(LambdaGrid::from_step(1.0).values == std::vector<double>{0.0, 1.0});
  CHECK(LambdaGrid::from_step(0.1).size() == 11);
  CHECK(LambdaGrid::from_step(0.02).size() == 51);
  const LambdaGrid odd = LambdaGrid::from_step(0.3);
  CHECK(odd.values.back() == 1.0);
  CHECK(odd.size() == 5);
  CHECK_THROWS_AS(LambdaGrid::from_step(0.0), ConfigError);
  CHECK_THROWS_AS(LambdaGrid::from_step(1.5), ConfigError);
  CHECK_THROWS_AS(LambdaGrid::of({0.5, 0.2}), ConfigError);
  CHECK(LambdaGrid::of({1.0}).size() == 1);
}
