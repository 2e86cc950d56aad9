#include "intent/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "intent/adam.hpp"
#include "intent/entropy.hpp"
#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "intent/rng.hpp"

namespace intent {

LossTerms bce_dice_terms(std::span<const float> probs, std::span<const float> target) {
  if (probs.size() != target.size()) throw ShapeError("bce_dice_loss: prediction/target size mismatch");
  if (probs.empty()) throw ShapeError("bce_dice_loss: empty input");
  LossTerms t;
  double bce = 0.0, inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double q = clamp_prob(probs[i]);
    const double y = target[i];
    bce -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    inter += static_cast<double>(probs[i]) * y;
    psum += probs[i];
    ysum += y;
  }
  t.bce = bce / static_cast<double>(probs.size());
  t.intersection = inter;
  t.union_sum = psum + ysum;
  t.soft_dice = (2.0 * inter + kDiceSmooth) / (t.union_sum + kDiceSmooth);
  t.loss = 0.5 * t.bce + 0.5 * (1.0 - t.soft_dice);
  return t;
}

double bce_dice_loss(const Tensor& probs, const Tensor& target) {
  require_same_shape(probs, target, "bce_dice_loss");
  return bce_dice_terms(probs.values(), target.values()).loss;
}

BnStats bn_ema_update(const BnStats& tracked, const BnStats& batch, double momentum) {
  if (tracked.channels() != batch.channels() || batch.var.size() != batch.mean.size()) {
    throw ShapeError("bn_ema_update: channel mismatch");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("bn_ema_update: momentum outside [0, 1]");
  if (momentum == 0.0) return tracked;
  BnStats out = tracked;
  for (std::size_t c = 0; c < tracked.channels(); ++c) {
    out.mean[c] = static_cast<float>((1.0 - momentum) * tracked.mean[c] + momentum * batch.mean[c]);
    out.var[c] = static_cast<float>((1.0 - momentum) * tracked.var[c] + momentum * batch.var[c]);
  }
  return out;
}

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) throw ShapeError("dice: mask size mismatch");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("train: bn_momentum outside [0, 1]");
  if (early_stop_patience < 1) throw ConfigError("train: early_stop_patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must be in (0, 1)");
}

namespace {

void shuffle(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

constexpr std::uint64_t kSplitStream = 0x73706c74;  // "splt"
constexpr std::uint64_t kEpochStream = 0x65706f63;  // "epoc"

}  // namespace

void split_indices(int n, double val_fraction, std::uint64_t seed, std::vector<int>& train_idx, std::vector<int>& val_idx) {
  if (n < 2) throw ConfigError("train: need at least 2 samples to split train/validation");
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed, kSplitStream);
  shuffle(all, rng);
  int n_val = static_cast<int>(std::lround(n * val_fraction));
  n_val = std::clamp(n_val, 1, n - 1);
  val_idx.assign(all.begin(), all.begin() + n_val);
  train_idx.assign(all.begin() + n_val, all.end());
}

double evaluate_dice(const Network& net, std::span<const Sample> samples, StatMode mode) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : samples) {
    const ProbMap p = predict(net, image_tensor(s.height, s.width, s.image), mode);
    total += dice(p.threshold(), s.mask);
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(const Network& init, std::span<const Sample> data, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  const int h = data.front().height, w = data.front().width;
  for (const Sample& s : data) {
    if (s.height != h || s.width != w) throw ShapeError("train: samples differ in size");
  }

  TrainResult result;
  split_indices(static_cast<int>(data.size()), config.val_fraction, config.split_seed.value_or(config.seed),
                result.train_indices, result.val_indices);
  std::vector<Sample> val;
  for (int i : result.val_indices) val.push_back(data[static_cast<std::size_t>(i)]);

  Network net = init;
  result.net = net;
  result.best_val_dice = -1.0;
  AdamState adam;
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int in_ch = net.config.in_channels;
  if (in_ch != 1) throw ConfigError("train: single-channel samples require in_channels = 1");

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order = result.train_indices;
    Rng rng(derive_seed(config.seed, kEpochStream), static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const int b = static_cast<int>(end - start);
      Tensor x({b, 1, h, w}), y({b, 1, h, w});
      for (int i = 0; i < b; ++i) {
        const Sample& s = data[static_cast<std::size_t>(order[start + static_cast<std::size_t>(i)])];
        std::copy(s.image.begin(), s.image.end(), x.data() + plane * i);
        for (std::size_t j = 0; j < plane; ++j) y[plane * i + j] = s.mask[j] ? 1.0f : 0.0f;
      }

      ForwardOptions opt;
      opt.mode = StatMode::instant();
      opt.grads = GradScope::All;
      ForwardResult rec = forward(net, x, opt);
      GradTape& tape = *rec.tape;
      const auto loss_node = ops::bce_dice_loss(tape, rec.output, y);
      loss_sum += tape.value(loss_node)[0];
      ++batches;
      tape.backward();

      std::vector<Tensor*> params;
      std::vector<Tensor> zero_fill;
      zero_fill.reserve(2 * (net.convs.size() + net.bns.size()));
      std::vector<const Tensor*> grads;
      auto add = [&](Tensor& p, GradTape::NodeId id) {
        params.push_back(&p);
        const Tensor& g = tape.grad(id);
        if (g.empty()) {
          zero_fill.emplace_back(p.shape());
          grads.push_back(&zero_fill.back());
        } else {
          grads.push_back(&g);
        }
      };
      for (std::size_t i = 0; i < net.convs.size(); ++i) {
        add(net.convs[i].weight, rec.conv_weight[i]);
        add(net.convs[i].bias, rec.conv_bias[i]);
      }
      for (std::size_t i = 0; i < net.bns.size(); ++i) {
        add(net.bns[i].gamma, rec.bn_gamma[i]);
        add(net.bns[i].beta, rec.bn_beta[i]);
      }
      adam_step(params, grads, adam, adam_cfg);
      for (std::size_t i = 0; i < net.bns.size(); ++i) {
        net.bns[i].tracked = bn_ema_update(net.bns[i].tracked, rec.instant[i], config.bn_momentum);
      }
    }

    EpochRecord rec{epoch, loss_sum / std::max(1, batches), evaluate_dice(net, val)};
    result.history.push_back(rec);
    if (config.verbose) {
      std::fprintf(stderr, "epoch %3d  loss %.5f  val_dice %.4f\n", epoch, rec.train_loss, rec.val_dice);
    }
    if (rec.val_dice > result.best_val_dice) {
      result.best_val_dice = rec.val_dice;
      result.best_epoch = epoch;
      result.net = net;
    } else if (epoch - result.best_epoch >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write " + path.string());
  out << "epoch,train_loss,val_dice\r\n";
  char line[128];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\r\n", r.epoch, r.train_loss, r.val_dice);
    out << line;
  }
}

}  // namespace intent
