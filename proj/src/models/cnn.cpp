#include "vitkit/models/cnn.hpp"

#include <cmath>

#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::models {

std::string to_string(CnnKind kind) {
  switch (kind) {
    case CnnKind::vgg_mini: return "vgg-mini";
    case CnnKind::resnet_mini: return "resnet-mini";
    case CnnKind::mobilenet_mini: return "mobilenet-mini";
  }
  return "unknown";
}

CnnKind parse_cnn_kind(std::string_view name) {
  if (name == "vgg-mini") return CnnKind::vgg_mini;
  if (name == "resnet-mini") return CnnKind::resnet_mini;
  if (name == "mobilenet-mini") return CnnKind::mobilenet_mini;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void CnnConfig::validate() const {
  if (stage_widths.empty()) throw ConfigError("CNN needs at least one stage");
  for (auto w : stage_widths)
    if (w == 0) throw ConfigError("stage widths must be positive");
  if (blocks_per_stage == 0 || num_classes == 0 || channels == 0 || image_size == 0) {
    throw ConfigError("CNN config counts must all be at least 1");
  }
  const std::size_t factor = std::size_t{1} << stage_widths.size();
  if (image_size % factor != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by 2^" +
                      std::to_string(stage_widths.size()));
  }
}

void to_json(nlohmann::json& j, const CnnConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},           {"stage_widths", c.stage_widths},
                     {"blocks_per_stage", c.blocks_per_stage}, {"num_classes", c.num_classes},
                     {"image_size", c.image_size},          {"channels", c.channels}};
}

void from_json(const nlohmann::json& j, CnnConfig& c) {
  CnnConfig d;
  c.kind = parse_cnn_kind(j.at("kind").get<std::string>());
  c.stage_widths = j.value("stage_widths", d.stage_widths);
  c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.image_size = j.value("image_size", d.image_size);
  c.channels = j.value("channels", d.channels);
}

namespace {

constexpr ops::Conv2dOptions conv3x3(std::size_t stride, std::size_t groups = 1) {
  return {.stride_h = stride, .stride_w = stride, .pad_h = 1, .pad_w = 1, .groups = groups};
}

}  // namespace

Var residual_block(Var x, const ResidualVars& p, std::size_t stride) {
  const std::size_t cin = x.shape().at(1);
  const std::size_t cout = p.conv1.weight.shape().at(0);
  if (!p.shortcut && (cin != cout || stride != 1)) {
    throw DimensionError("identity shortcut needs equal channels and stride 1 (got " + std::to_string(cin) + " -> " +
                         std::to_string(cout) + ", stride " + std::to_string(stride) + ")");
  }
  Var h = ops::relu(ops::conv2d(x, p.conv1.weight, p.conv1.bias, conv3x3(stride)));
  h = ops::conv2d(h, p.conv2.weight, p.conv2.bias, conv3x3(1));
  Var skip = x;
  if (p.shortcut) {
    skip = ops::conv2d(x, p.shortcut->weight, p.shortcut->bias, {.stride_h = stride, .stride_w = stride});
  }
  if (skip.shape() != h.shape()) {
    throw DimensionError("residual branch " + shape_to_string(h.shape()) + " does not match shortcut " +
                         shape_to_string(skip.shape()));
  }
  return ops::relu(ops::add(h, skip));
}

Var depthwise_separable(Var x, const SeparableVars& p, std::size_t stride) {
  const std::size_t cin = x.shape().at(1);
  const Shape& dw = p.depthwise.weight.shape();
  if (dw.size() != 4 || dw[0] != cin || dw[1] != 1) {
    throw DimensionError("depthwise kernel " + shape_to_string(dw) + " does not match " + std::to_string(cin) +
                         " input channels");
  }
  const Shape& pw = p.pointwise.weight.shape();
  if (pw.size() != 4 || pw[1] != cin || pw[2] != 1 || pw[3] != 1) {
    throw DimensionError("pointwise kernel " + shape_to_string(pw) + " is not a 1x1 map from " + std::to_string(cin) +
                         " channels");
  }
  Var h = ops::relu(ops::conv2d(x, p.depthwise.weight, p.depthwise.bias, conv3x3(stride, cin)));
  return ops::relu(ops::conv2d(h, p.pointwise.weight, p.pointwise.bias, {}));
}

CnnClassifier::CnnClassifier(const CnnConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& widths = config_.stage_widths;
  std::size_t prev = config_.channels;
  if (config_.kind != CnnKind::vgg_mini) {
    add_conv("stem", widths[0], config_.channels, 3, rng);
    prev = widths[0];
  }
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t cin = b == 0 ? prev : widths[s];
      const std::string p = "stage" + std::to_string(s) + ".";
      switch (config_.kind) {
        case CnnKind::vgg_mini:
          add_conv(p + "conv" + std::to_string(b), widths[s], cin, 3, rng);
          break;
        case CnnKind::resnet_mini: {
          const std::string q = p + "block" + std::to_string(b) + ".";
          add_conv(q + "conv1", widths[s], cin, 3, rng);
          add_conv(q + "conv2", widths[s], widths[s], 3, rng);
          if (b == 0) add_conv(q + "shortcut", widths[s], cin, 1, rng);
          break;
        }
        case CnnKind::mobilenet_mini: {
          const std::string q = p + "block" + std::to_string(b) + ".";
          add_conv(q + "depthwise", cin, 1, 3, rng);
          add_conv(q + "pointwise", widths[s], cin, 1, rng);
          break;
        }
      }
    }
    prev = widths[s];
  }
  add_head(feature_width(), config_.num_classes, rng);
}

std::size_t CnnClassifier::feature_width() const {
  const std::size_t last = config_.stage_widths.back();
  if (config_.kind == CnnKind::vgg_mini) return last * config_.final_extent() * config_.final_extent();
  return last;
}

void CnnClassifier::add_conv(const std::string& prefix, std::size_t cout, std::size_t cin_per_group, std::size_t k,
                             Rng& rng) {
  // He initialization for relu stacks.
  const Real stddev = std::sqrt(Real{2} / static_cast<Real>(cin_per_group * k * k));
  params_.add(prefix + ".weight", normal_tensor({cout, cin_per_group, k, k}, stddev, rng));
  params_.add(prefix + ".bias", Tensor({cout}));
}

ConvVars CnnClassifier::bind_conv(Tape& tape, const std::string& prefix) {
  return {tape.leaf(params_.at(prefix + ".weight")), tape.leaf(params_.at(prefix + ".bias"))};
}

Var CnnClassifier::features(Tape& tape, const Tensor& images, const ForwardOptions&) {
  check_input(images);
  Var x = tape.constant(images);
  const auto& widths = config_.stage_widths;
  if (config_.kind != CnnKind::vgg_mini) {
    const ConvVars stem = bind_conv(tape, "stem");
    x = ops::relu(ops::conv2d(x, stem.weight, stem.bias, conv3x3(1)));
  }
  for (std::size_t s = 0; s < widths.size(); ++s) {
    const std::string p = "stage" + std::to_string(s) + ".";
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t stride = b == 0 ? 2 : 1;
      const std::string q = p + "block" + std::to_string(b) + ".";
      switch (config_.kind) {
        case CnnKind::vgg_mini: {
          const ConvVars c = bind_conv(tape, p + "conv" + std::to_string(b));
          x = ops::relu(ops::conv2d(x, c.weight, c.bias, conv3x3(1)));
          break;
        }
        case CnnKind::resnet_mini: {
          ResidualVars r{bind_conv(tape, q + "conv1"), bind_conv(tape, q + "conv2"), std::nullopt};
          if (b == 0) r.shortcut = bind_conv(tape, q + "shortcut");
          x = residual_block(x, r, stride);
          break;
        }
        case CnnKind::mobilenet_mini: {
          x = depthwise_separable(x, {bind_conv(tape, q + "depthwise"), bind_conv(tape, q + "pointwise")}, stride);
          break;
        }
      }
    }
    if (config_.kind == CnnKind::vgg_mini) x = ops::max_pool2d(x, 2);
  }
  return config_.kind == CnnKind::vgg_mini ? ops::flatten(x) : ops::global_avg_pool(x);
}

void CnnClassifier::reset_head(std::size_t num_classes, Rng& rng) {
  add_head(feature_width(), num_classes, rng);
  config_.num_classes = num_classes;
}

}  // namespace vitkit::models
