#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vitkit/models/classifier.hpp"

namespace vitkit::models {

// Miniature stand-ins for the VGG, ResNet and MobileNet families. None of
// them use batch normalization.
enum class CnnKind { vgg_mini, resnet_mini, mobilenet_mini };

std::string to_string(CnnKind kind);
/// Throws ConfigError for unknown names.
CnnKind parse_cnn_kind(std::string_view name);

struct CnnConfig {
  CnnKind kind = CnnKind::vgg_mini;
  std::vector<std::size_t> stage_widths{16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t num_classes = 3;
  std::size_t image_size = 32;
  std::size_t channels = 3;

  /// Every stage halves the resolution, so image_size must be divisible by
  /// 2^stages.
  void validate() const;
  std::size_t final_extent() const { return image_size >> stage_widths.size(); }
};

void to_json(nlohmann::json& j, const CnnConfig& c);
void from_json(const nlohmann::json& j, CnnConfig& c);

struct ConvVars {
  Var weight, bias;
};

struct ResidualVars {
  ConvVars conv1, conv2;
  /// 1x1 strided projection; absent for identity shortcuts.
  std::optional<ConvVars> shortcut;
};

struct SeparableVars {
  ConvVars depthwise;  // Cin x 1 x 3 x 3, groups = Cin
  ConvVars pointwise;  // Cout x Cin x 1 x 1
};

/// relu(conv2(relu(conv1(x))) + shortcut(x)), 3x3 convs with padding 1;
/// conv1 carries the stride.
Var residual_block(Var x, const ResidualVars& p, std::size_t stride);

/// relu(pointwise(relu(depthwise(x)))); depthwise carries the stride.
Var depthwise_separable(Var x, const SeparableVars& p, std::size_t stride);

class CnnClassifier final : public Classifier {
 public:
  CnnClassifier(const CnnConfig& config, std::uint64_t seed);

  std::string kind() const override { return to_string(config_.kind); }
  std::size_t num_classes() const override { return config_.num_classes; }
  std::size_t image_size() const override { return config_.image_size; }
  std::size_t channels() const override { return config_.channels; }
  nlohmann::json config_json() const override { return config_; }
  const CnnConfig& config() const noexcept { return config_; }

  Var features(Tape& tape, const Tensor& images, const ForwardOptions& options = {}) override;
  void reset_head(std::size_t num_classes, Rng& rng) override;

 private:
  void add_conv(const std::string& prefix, std::size_t cout, std::size_t cin_per_group, std::size_t k, Rng& rng);
  ConvVars bind_conv(Tape& tape, const std::string& prefix);
  std::size_t feature_width() const;

  CnnConfig config_;
};

}  // namespace vitkit::models
