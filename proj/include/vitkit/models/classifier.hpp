#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vitkit/autograd.hpp"
#include "vitkit/gradcheck.hpp"
#include "vitkit/rng.hpp"

namespace vitkit::models {

struct ForwardOptions {
  /// Enables dropout; inference is deterministic when false.
  bool training = false;
  Rng* rng = nullptr;
  /// When set, attention-based models append every attention matrix
  /// ((B*heads) x T x T per layer) in layer order.
  std::vector<Tensor>* attention = nullptr;
};

/// Image classifier with named parameters. Parameters whose names start
/// with "head." form the classification head; everything else is backbone.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t image_size() const = 0;
  virtual std::size_t channels() const = 0;
  virtual nlohmann::json config_json() const = 0;

  /// Pre-head representation, B x F.
  virtual Var features(Tape& tape, const Tensor& images, const ForwardOptions& options = {}) = 0;
  /// Logits, B x C.
  Var forward(Tape& tape, const Tensor& images, const ForwardOptions& options = {});

  /// Swaps the head for a freshly initialized one with `num_classes` outputs.
  virtual void reset_head(std::size_t num_classes, Rng& rng) = 0;

  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  static bool is_head_parameter(std::string_view name) { return name.starts_with("head."); }
  /// Marks every backbone parameter as (non-)trainable.
  void set_backbone_frozen(bool frozen);

  /// Checks that `images` is B x channels x size x size.
  void check_input(const Tensor& images) const;

 protected:
  Var head(Tape& tape, Var features);
  void add_head(std::size_t in_features, std::size_t num_classes, Rng& rng);

  ParameterStore params_;
};

struct Prediction {
  Tensor probabilities;  // C
  std::size_t label = 0;
};

/// Softmax over the logits of one channels x H x W image; argmax with
/// lowest-index tie-break.
Prediction classify(Classifier& model, const Tensor& image);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const Real> values);

/// Known kinds: "vit", "vgg-mini", "resnet-mini", "mobilenet-mini".
std::vector<std::string> model_kinds();

/// Builds a freshly initialized model from a kind string and its config.
std::unique_ptr<Classifier> build_classifier(std::string_view kind, const nlohmann::json& config,
                                             std::uint64_t seed);

/// Default config for a kind at the given geometry and class count.
nlohmann::json default_config(std::string_view kind, std::size_t image_size, std::size_t channels,
                              std::size_t num_classes);

/// Adds Normal(0, stddev) noise to every bias. Zero-initialized biases put
/// dead relu channels exactly on the kink, where finite differences are
/// meaningless; gradchecks call this first.
void perturb_biases(Classifier& model, Real stddev, std::uint64_t seed);

/// Finite-difference check of mean cross-entropy w.r.t. every parameter.
GradcheckReport gradcheck_classifier(Classifier& model, const Tensor& images,
                                     std::span<const std::size_t> labels, const GradcheckOptions& options);

/// Normal(0, stddev) tensor.
Tensor normal_tensor(Shape shape, Real stddev, Rng& rng);

}  // namespace vitkit::models
