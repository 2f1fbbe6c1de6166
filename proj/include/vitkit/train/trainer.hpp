#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitkit/data/augment.hpp"
#include "vitkit/data/dataset.hpp"
#include "vitkit/models/classifier.hpp"
#include "vitkit/train/adam.hpp"
#include "vitkit/train/checkpoint.hpp"
#include "vitkit/train/metrics.hpp"

namespace vitkit::train {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 75;
  Real lr = 1e-3;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  data::AugmentSpec augment;
  /// Top up minority classes each epoch (see data::epoch_order).
  bool oversample = false;
  Real beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  /// epochs >= 1, batch_size >= 1, lr > 0 (ConfigError).
  void validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }
};

struct Evaluation {
  MetricsRecord record;
  ConfusionMatrix confusion;
  std::vector<std::size_t> predictions;
};

/// Deterministic inference over the whole dataset. EmptyError when empty.
Evaluation evaluate(models::Classifier& model, const data::LoadedDataset& data, Split split = Split::test,
                    std::optional<std::size_t> epoch = std::nullopt, std::size_t batch_size = 75);

/// Called after each epoch with that epoch's train and val records; return
/// false to stop training early.
using EpochHook = std::function<bool(const MetricsRecord& train, const MetricsRecord& val)>;

struct TrainResult {
  /// Per epoch a train record (running loss and accuracy over the epoch's
  /// batches) followed by a val record.
  std::vector<MetricsRecord> history;
  std::size_t epochs_run = 0;
  std::size_t optimizer_steps = 0;
};

/// Seeded mini-batch Adam on mean cross-entropy with one validation pass
/// per epoch. A non-finite loss is a TrainingError naming epoch and batch.
TrainResult train(models::Classifier& model, const data::LoadedDataset& train_data,
                  const data::LoadedDataset& val_data, const TrainConfig& config, const EpochHook& hook = {});

struct PretrainResult {
  std::unique_ptr<models::Classifier> model;
  Checkpoint checkpoint;
  TrainResult training;
};

/// Trains `kind` from random init on the surrogate task (num_classes is taken
/// from the data, which needs at least 2 classes) and packages a checkpoint,
/// head included.
PretrainResult pretrain(std::string_view kind, nlohmann::json config, const data::LoadedDataset& train_data,
                        const data::LoadedDataset& val_data, const TrainConfig& train_config);

struct FineTuneResult {
  std::unique_ptr<models::Classifier> model;
  TrainResult training;
};

/// Restores the checkpoint, replaces the head with a fresh one sized for the
/// target data (sd 0.02), optionally freezes the backbone, and trains.
FineTuneResult fine_tune(const Checkpoint& checkpoint, const data::LoadedDataset& train_data,
                         const data::LoadedDataset& val_data, const TrainConfig& config,
                         const EpochHook& hook = {});

}  // namespace vitkit::train
