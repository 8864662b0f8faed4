#pragma once

// Adam with decoupled weight decay, reduce-on-plateau scheduling on the
// validation macro-F1, the training loop, and checkpoint / history files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smart/model.hpp"
#include "smart/nn.hpp"

namespace smart {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int patience = 5;
  double plateau_factor = 0.1;
  double min_lr = 1e-6;
  double weight_decay = 5e-4;  // decoupled, applied as p -= lr * wd * p
  int max_epochs = 60;
  int max_reductions = 3;  // early stop after this many reductions without improvement
  std::uint64_t seed = 7;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Throws ConfigError for a negative lr, batch_size < 1, patience < 1 and
/// other out-of-range settings. lr == 0 is legal and freezes the parameters.
void validate(const TrainConfig& config);

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

AdamState make_adam(const nn::ParamStore& params);
void adam_step(nn::ParamStore& params, const nn::Grads& g, AdamState& state, const TrainConfig& config, double lr);

struct ScheduleState {
  double lr = 1e-3;
  double best = -1.0;
  int bad_epochs = 0;
  int reductions_since_best = 0;
};

/// Records one validation result and returns the (possibly reduced) lr.
double lr_schedule_step(ScheduleState& state, double val_metric, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, val_loss = 0, val_macro_f1 = 0, lr = 0;
};

struct Checkpoint {
  std::string config_echo;
  int epoch = 0;
  double best_metric = 0;
  double best_val_loss = 0;
  std::vector<nn::Param> params;
  AdamState adam;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint best;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` in place and leaves it holding the best parameters (highest
/// val macro-F1, ties to the lower val loss). Non-finite losses raise
/// NumericError naming the epoch and batch.
TrainResult train(SmartModel& model, std::span<const SampleInputs> train_set, std::span<const SampleInputs> val_set,
                  const TrainConfig& config, const std::string& config_echo = {},
                  const EpochCallback& on_epoch = {});

/// Validation macro-F1 (F1Mode::macro_pr) of the model's predictions.
double macro_f1_of(const SmartModel& model, std::span<const SampleInputs> samples);

// ---- persistence -----------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);
Checkpoint snapshot(const SmartModel& model, const AdamState& adam, const std::string& config_echo);
/// Copies tensors into the model by name. Throws FormatError on a missing
/// tensor or a shape mismatch.
void restore(SmartModel& model, const Checkpoint& ckpt);

std::string history_csv(std::span<const EpochRecord> history);

}  // namespace smart
