#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zwocr/datagen.hpp"
#include "zwocr/net.hpp"

namespace zwocr {

struct TrainConfig {
  double learning_rate = 1e-3;
  // Heavy-ball momentum on the SGD update; 0 gives the plain lr * grad step.
  double momentum = 0.9;
  int patience = 40;
  int max_epochs = 150;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double gradient_clip = 5.0;
  double validation_fraction = 0.2;
  ArchDims dims{};

  // Throws ValidationError on out-of-range fields.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;       // mean per contributing sample
  double validation_loss = 0.0;  // mean per contributing sample
  double seconds = 0.0;
};

using TrainingCurve = std::vector<EpochStats>;

struct TrainResult {
  ModelParams params;  // from the best validation epoch
  TrainingCurve curve;
  int best_epoch = 0;
  bool stopped_early = false;
  std::size_t skipped_samples = 0;
};

// Tracks the best validation loss and signals when `patience` consecutive
// epochs failed to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool update(int epoch, double validation_loss);
  bool improved() const noexcept { return improved_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  int stale_ = 0;
  bool improved_ = false;
};

// Receives progress lines (one per epoch, plus warnings).
using TrainLogger = std::function<void(const std::string&)>;

// SGD with global-norm gradient clipping and early stopping on a held-out
// split of `train_set`. Single-threaded and deterministic for a fixed seed.
// The network runs in single precision; the returned params are widened.
TrainResult train(std::span<const Sample> train_set, const TrainConfig& config,
                  const TrainLogger& log = {});

// Mean CTC loss per feasible sample (forward only).
double mean_loss(const ModelParams& params, std::span<const Sample> samples);

std::vector<std::string> predict(const ModelParams& params, std::span<const Sample> samples);

}  // namespace zwocr
