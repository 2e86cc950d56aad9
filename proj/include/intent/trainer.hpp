#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "intent/kernels.hpp"
#include "intent/network.hpp"
#include "intent/synthdata.hpp"

namespace intent {

inline constexpr double kDiceSmooth = 1.0;

struct LossTerms {
  double bce = 0.0;
  double soft_dice = 0.0;
  double loss = 0.0;  // 0.5 * bce + 0.5 * (1 - soft_dice)
  double intersection = 0.0;  // sum p * y
  double union_sum = 0.0;     // sum p + sum y
};

LossTerms bce_dice_terms(std::span<const float> probs, std::span<const float> target);
// Equally weighted BCE and soft-Dice loss over a whole batch (shapes must match).
double bce_dice_loss(const Tensor& probs, const Tensor& target);

// (1 - momentum) * tracked + momentum * batch, on mean and variance.
BnStats bn_ema_update(const BnStats& tracked, const BnStats& batch, double momentum);

// 2|A n B| / (|A| + |B|) over binary masks; 1 when both are empty.
double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 10;
  double lr = 1e-4;
  double bn_momentum = 0.1;
  int early_stop_patience = 20;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;                  // initialization and batch order
  std::optional<std::uint64_t> split_seed;  // train/val split; defaults to `seed`
  bool verbose = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_dice = 0.0;
};

struct TrainResult {
  Network net;  // parameters from the epoch with the best validation Dice
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_dice = 0.0;
  std::vector<int> train_indices;
  std::vector<int> val_indices;
};

// Deterministic shuffle of 0..n-1 into (train, validation).
void split_indices(int n, double val_fraction, std::uint64_t seed, std::vector<int>& train, std::vector<int>& val);

// Mini-batch Adam on BCE + Dice. BN layers normalize with batch statistics and update their
// tracked statistics by EMA; validation uses tracked statistics. Stops early when validation
// Dice has not improved for `early_stop_patience` epochs.
TrainResult train(const Network& init, std::span<const Sample> data, const TrainConfig& config);

// Mean per-image Dice of thresholded predictions.
double evaluate_dice(const Network& net, std::span<const Sample> samples, StatMode mode = StatMode::tracked());

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace intent
