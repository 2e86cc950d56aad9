#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "intent/errors.hpp"
#include "intent/rng.hpp"
#include "intent/trainer.hpp"
#include "oracles.hpp"

using namespace intent;

namespace {

std::vector<Sample> small_set(int n = 20) { return generate(DomainSpec{}, n, 32, 32, 77); }

TrainConfig quick(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("dice examples") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, none(4, 0);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.0);
  CHECK(dice(none, none) == 1.0);
  CHECK(dice(a, none) == 0.0);
  // |A| = 4, |B| = 6, |A n B| = 3.
  const std::vector<std::uint8_t> x{1, 1, 1, 1, 0, 0, 0, 0}, y{0, 1, 1, 1, 1, 1, 1, 0};
  CHECK(dice(x, y) == doctest::Approx(0.6));
  CHECK_THROWS_AS(dice(x, a), ShapeError);
}

TEST_CASE("dice equals the set oracle on random masks") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.uniform_int(1, 200);
    const double pa = rng.uniform(), pb = rng.uniform();
    std::vector<std::uint8_t> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      a[static_cast<std::size_t>(i)] = rng.uniform() < pa;
      b[static_cast<std::size_t>(i)] = rng.uniform() < pb;
    }
    CHECK(dice(a, b) == oracle::dice(a, b));
  }
}

TEST_CASE("bce-dice loss examples") {
  const std::vector<float> y{1, 0, 1, 0, 0, 1};
  const std::vector<float> exact(y.begin(), y.end());
  CHECK(bce_dice_terms(exact, y).loss <= 1e-5);

  const std::vector<float> half(6, 0.5f);
  const LossTerms t = bce_dice_terms(half, y);
  CHECK(t.bce == doctest::Approx(std::numbers::ln2));
  CHECK(0.5 * t.bce == doctest::Approx(0.3466).epsilon(1e-4));
  // soft Dice = (2 * 1.5 + 1) / (3 + 3 + 1)
  CHECK(t.soft_dice == doctest::Approx(4.0 / 7.0));
  CHECK(t.loss == doctest::Approx(0.5 * std::numbers::ln2 + 0.5 * (1 - 4.0 / 7.0)));

  std::vector<float> p{0.9f, 0.2f, 0.6f, 0.1f, 0.3f, 0.7f}, yp = y;
  const double before = bce_dice_terms(p, y).loss;
  std::reverse(p.begin(), p.end());
  std::reverse(yp.begin(), yp.end());
  CHECK(bce_dice_terms(p, yp).loss == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("bce-dice loss is nonnegative") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> p(50), y(50);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = static_cast<float>(rng.uniform());
      y[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    }
    CHECK(bce_dice_terms(p, y).loss >= 0.0);
  }
}

TEST_CASE("BN EMA update") {
  const BnStats tracked{{0.0f}, {1.0f}}, batch{{1.0f}, {3.0f}};
  CHECK(bn_ema_update(tracked, batch, 0.0) == tracked);
  const BnStats once = bn_ema_update(tracked, batch, 0.1);
  CHECK(once.mean[0] == doctest::Approx(0.1));
  CHECK(once.var[0] == doctest::Approx(1.2));
  BnStats s = tracked;
  for (int n = 1; n <= 40; ++n) {
    s = bn_ema_update(s, batch, 0.1);
    CHECK(1.0 - s.mean[0] == doctest::Approx(std::pow(0.9, n)).epsilon(1e-4));
  }
}

TEST_CASE("split is a deterministic partition") {
  std::vector<int> tr, va, tr2, va2;
  split_indices(200, 0.2, 9, tr, va);
  split_indices(200, 0.2, 9, tr2, va2);
  CHECK(va.size() == 40);
  CHECK(tr.size() == 160);
  CHECK(tr == tr2);
  CHECK(va == va2);
  std::set<int> all(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  CHECK(all.size() == 200);
  split_indices(200, 0.2, 10, tr2, va2);
  CHECK(va != va2);
}

TEST_CASE("training is deterministic and leaves inputs untouched") {
  const std::vector<Sample> data = small_set();
  const std::vector<Sample> copy = data;
  const Network init = build(NetConfig{1, 4, 2, 3}, 3);
  const TrainResult a = train(init, data, quick());
  const TrainResult b = train(init, data, quick());
  CHECK(parameters_bit_equal(a.net, b.net));
  CHECK(a.history.size() == 3);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(data[i].image == copy[i].image);
  for (const BnLayer& bn : a.net.bns) {
    for (float v : bn.tracked.var) CHECK((std::isfinite(v) && v >= 0.0f));
    for (float m : bn.tracked.mean) CHECK(std::isfinite(m));
  }
  TrainConfig other = quick();
  other.seed = 6;
  CHECK_FALSE(parameters_bit_equal(a.net, train(init, data, other).net));
}

TEST_CASE("training loss mostly decreases over the first epochs") {
  const std::vector<Sample> data = small_set(24);
  const TrainResult r = train(build(NetConfig{1, 4, 2, 3}, 4), data, quick(6));
  int drops = 0;
  for (std::size_t i = 1; i < 6; ++i) drops += r.history[i].train_loss <= r.history[i - 1].train_loss;
  CHECK(drops >= 4);
}

TEST_CASE("the returned network is the best validation epoch") {
  const std::vector<Sample> data = small_set();
  const TrainResult r = train(build(NetConfig{1, 4, 2, 3}, 3), data, quick(4));
  double best = -1.0;
  for (const EpochRecord& e : r.history) best = std::max(best, e.val_dice);
  CHECK(r.best_val_dice == best);
  std::vector<Sample> val;
  for (int i : r.val_indices) val.push_back(data[static_cast<std::size_t>(i)]);
  CHECK(evaluate_dice(r.net, val) == r.best_val_dice);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.val_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(train(build(NetConfig{1, 4, 2, 3}, 1), std::vector<Sample>{}, TrainConfig{}), ConfigError);
}

TEST_CASE("history CSV") {
  const auto path = std::filesystem::temp_directory_path() / "intent_history_test.csv";
  write_history_csv(path, {{1, 0.5, 0.25}, {2, 0.4, 0.5}});
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "epoch,train_loss,val_dice\r\n1,0.5,0.25\r\n2,0.40000000000000002,0.5\r\n");
}
