#include "vitkit/models/classifier.hpp"

#include <algorithm>

#include "vitkit/errors.hpp"
#include "vitkit/models/cnn.hpp"
#include "vitkit/models/vit.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::models {

Var Classifier::forward(Tape& tape, const Tensor& images, const ForwardOptions& options) {
  return head(tape, features(tape, images, options));
}

void Classifier::set_backbone_frozen(bool frozen) {
  for (auto* p : params_.all()) {
    if (!is_head_parameter(p->name)) p->requires_grad = !frozen;
  }
}

void Classifier::check_input(const Tensor& images) const {
  const Shape want{channels(), image_size(), image_size()};
  if (images.rank() != 4 || !std::equal(want.begin(), want.end(), images.shape().begin() + 1) ||
      images.dim(0) == 0) {
    throw ConfigError("model " + kind() + " expects B x " + std::to_string(channels()) + " x " +
                      std::to_string(image_size()) + " x " + std::to_string(image_size()) + " images, got " +
                      shape_to_string(images.shape()));
  }
}

Var Classifier::head(Tape& tape, Var features) {
  return ops::linear(features, tape.leaf(params_.at("head.weight")), tape.leaf(params_.at("head.bias")));
}

void Classifier::add_head(std::size_t in_features, std::size_t num_classes, Rng& rng) {
  if (num_classes == 0) throw ConfigError("num_classes must be at least 1");
  params_.remove_prefix("head.");
  params_.add("head.weight", normal_tensor({in_features, num_classes}, 0.02, rng));
  params_.add("head.bias", Tensor({num_classes}));
}

Tensor normal_tensor(Shape shape, Real stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

std::size_t argmax(std::span<const Real> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Prediction classify(Classifier& model, const Tensor& image) {
  if (image.rank() != 3) {
    throw ConfigError("classify expects one channels x H x W image, got " + shape_to_string(image.shape()));
  }
  Shape batched{1};
  batched.insert(batched.end(), image.shape().begin(), image.shape().end());
  const Tensor images = image.reshaped(batched);
  model.check_input(images);
  Tape tape;
  Var probs = ops::softmax(model.forward(tape, images), 1);
  Prediction p;
  p.probabilities = probs.value().reshaped({model.num_classes()});
  p.label = argmax(p.probabilities.data());
  return p;
}

std::vector<std::string> model_kinds() { return {"vit", "vgg-mini", "resnet-mini", "mobilenet-mini"}; }

std::unique_ptr<Classifier> build_classifier(std::string_view kind, const nlohmann::json& config,
                                             std::uint64_t seed) {
  if (kind == "vit") return std::make_unique<ViTClassifier>(config.get<ViTConfig>(), seed);
  const CnnKind requested = parse_cnn_kind(kind);
  nlohmann::json with_kind = config;
  if (!with_kind.contains("kind")) with_kind["kind"] = to_string(requested);
  CnnConfig cfg = with_kind.get<CnnConfig>();
  if (cfg.kind != requested) {
    throw ConfigError("config kind " + to_string(cfg.kind) + " does not match requested " + std::string(kind));
  }
  return std::make_unique<CnnClassifier>(cfg, seed);
}

nlohmann::json default_config(std::string_view kind, std::size_t image_size, std::size_t channels,
                              std::size_t num_classes) {
  if (kind == "vit") {
    ViTConfig cfg;
    cfg.image_size = image_size;
    cfg.channels = channels;
    cfg.num_classes = num_classes;
    cfg.validate();
    return cfg;
  }
  CnnConfig cfg;
  cfg.kind = parse_cnn_kind(kind);
  cfg.image_size = image_size;
  cfg.channels = channels;
  cfg.num_classes = num_classes;
  cfg.validate();
  return cfg;
}

void perturb_biases(Classifier& model, Real stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : model.parameters().all()) {
    if (!p->name.ends_with("bias")) continue;
    for (auto& v : p->value.data()) v += rng.normal(0, stddev);
  }
}

GradcheckReport gradcheck_classifier(Classifier& model, const Tensor& images, std::span<const std::size_t> labels,
                                     const GradcheckOptions& options) {
  auto params = model.parameters().all();
  auto loss = [&](Tape& tape) { return ops::cross_entropy(model.forward(tape, images), labels); };
  return finite_diff_gradcheck(loss, params, options);
}

}  // namespace vitkit::models
