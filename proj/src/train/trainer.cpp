#include "vitkit/train/trainer.hpp"

#include <cmath>

#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::train {

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kAugmentStream = 0x61756700;
constexpr std::uint64_t kHeadStream = 0x68656164;

std::string dataset_name(const data::LoadedDataset& d) { return d.manifest.name; }

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  adam().validate();
  augment.validate();
}

Evaluation evaluate(models::Classifier& model, const data::LoadedDataset& data, Split split,
                    std::optional<std::size_t> epoch, std::size_t batch_size) {
  if (data.size() == 0) throw EmptyError("cannot evaluate on an empty dataset");
  const std::size_t classes = model.num_classes();
  Evaluation ev{{model.kind(), dataset_name(data), epoch, split, 0, 0}, ConfusionMatrix(classes), {}};
  const auto labels = data.labels();
  const auto order = data::epoch_order(labels, data.num_classes(), 0, 0, false);
  Real loss_sum = 0;
  for (const auto& chunk : data::chunk_batches(order, batch_size)) {
    const auto batch = data::gather_batch(data, chunk);
    Tape tape;
    Var logits = model.forward(tape, batch.images);
    loss_sum += ops::cross_entropy(logits, batch.labels).value().item() * static_cast<Real>(chunk.size());
    const auto values = logits.value().data();
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const std::size_t pred = models::argmax(values.subspan(k * classes, classes));
      ev.predictions.push_back(pred);
      ev.confusion.add(batch.labels[k], pred);
    }
  }
  ev.record.accuracy = ev.confusion.accuracy();
  ev.record.loss = loss_sum / static_cast<Real>(data.size());
  return ev;
}

TrainResult train(models::Classifier& model, const data::LoadedDataset& train_data,
                  const data::LoadedDataset& val_data, const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  if (train_data.size() == 0) throw EmptyError("training set is empty");
  if (val_data.size() == 0) throw EmptyError("validation set is empty");
  const std::size_t classes = model.num_classes();
  if (train_data.num_classes() > classes) {
    throw ConfigError("dataset has " + std::to_string(train_data.num_classes()) + " classes but the model outputs " +
                      std::to_string(classes));
  }
  model.set_backbone_frozen(config.freeze_backbone);
  Adam adam(config.adam());
  auto& params = model.parameters();
  const auto labels = train_data.labels();
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng aug_rng(derive_seed(derive_seed(config.seed, kAugmentStream), epoch));
    const auto order = data::epoch_order(labels, train_data.num_classes(), config.seed, epoch, true, config.oversample);
    const auto batches = data::chunk_batches(order, config.batch_size);
    Real loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = data::gather_batch(train_data, batches[b], &config.augment, &aug_rng);
      params.zero_grad();
      Tape tape;
      Var logits = model.forward(tape, batch.images, {.training = true, .rng = &aug_rng});
      Var loss = ops::cross_entropy(logits, batch.labels);
      const Real lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite loss " + std::to_string(lv) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b + 1));
      }
      tape.backward(loss);
      adam.step(params);
      const auto values = logits.value().data();
      for (std::size_t k = 0; k < batch.labels.size(); ++k)
        if (models::argmax(values.subspan(k * classes, classes)) == batch.labels[k]) ++correct;
      loss_sum += lv * static_cast<Real>(batch.labels.size());
      seen += batch.labels.size();
    }
    MetricsRecord tr{model.kind(), dataset_name(train_data), epoch, Split::train,
                     static_cast<Real>(correct) / static_cast<Real>(seen), loss_sum / static_cast<Real>(seen)};
    MetricsRecord va = evaluate(model, val_data, Split::val, epoch, config.batch_size).record;
    va.dataset = tr.dataset;
    result.history.push_back(tr);
    result.history.push_back(va);
    result.epochs_run = epoch;
    if (hook && !hook(tr, va)) break;
  }
  result.optimizer_steps = adam.steps();
  return result;
}

PretrainResult pretrain(std::string_view kind, nlohmann::json config, const data::LoadedDataset& train_data,
                        const data::LoadedDataset& val_data, const TrainConfig& train_config) {
  if (train_data.num_classes() < 2) throw ConfigError("pretraining needs a surrogate task with at least 2 classes");
  config["num_classes"] = train_data.num_classes();
  PretrainResult r;
  r.model = models::build_classifier(kind, config, train_config.seed);
  r.training = train(*r.model, train_data, val_data, train_config);
  r.model->set_backbone_frozen(false);
  CheckpointMeta meta;
  meta.seed = train_config.seed;
  meta.epochs = r.training.epochs_run;
  meta.source_dataset = train_data.manifest.name;
  meta.adam = train_config.adam();
  r.checkpoint = make_checkpoint(*r.model, std::move(meta));
  return r;
}

FineTuneResult fine_tune(const Checkpoint& checkpoint, const data::LoadedDataset& train_data,
                         const data::LoadedDataset& val_data, const TrainConfig& config, const EpochHook& hook) {
  FineTuneResult r;
  r.model = restore_model(checkpoint);
  Rng head_rng(derive_seed(config.seed, kHeadStream));
  r.model->reset_head(train_data.num_classes(), head_rng);
  r.training = train(*r.model, train_data, val_data, config, hook);
  return r;
}

}  // namespace vitkit::train
