#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "vitkit/models/classifier.hpp"

namespace vitkit::models {

struct ViTConfig {
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  double mlp_ratio = 2.0;
  std::size_t num_classes = 3;
  double dropout = 0.0;

  /// Throws ConfigError unless image_size % patch_size == 0,
  /// embed_dim % num_heads == 0 and every count is at least 1.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  /// Patches plus the class token.
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t mlp_hidden() const;
  std::size_t head_dim() const { return embed_dim / num_heads; }
};

void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);

// Patch partition: patches are ordered row-major over the patch grid and
// each patch is flattened in (channel, row, col) order.

/// channels x H x W -> N x (P*P*channels).
Tensor partition_and_flatten(const Tensor& image, std::size_t patch);
/// Exact inverse of partition_and_flatten.
Tensor unpartition(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                   std::size_t patch);
/// B x channels x H x W -> B x N x (P*P*channels).
Tensor partition_batch(const Tensor& images, std::size_t patch);

struct AttentionVars {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderBlockVars {
  Var norm1_gamma, norm1_beta;
  AttentionVars attn;
  Var norm2_gamma, norm2_beta;
  Var w1, b1, w2, b2;
};

/// Linear projection of flattened patches: patches . weight + bias.
Var embed_patches(Var patches, Var weight, Var bias);

/// Prepends the class token to B x N x D embeddings and adds the T x D
/// positional table to every row.
Var add_positional(Var embeddings, Var class_token, Var positional);

/// Scaled dot-product attention over `heads` slices of width D / heads,
/// concatenated and projected by wo. x is B x T x D.
Var multi_head_attention(Var x, const AttentionVars& w, std::size_t heads,
                         std::vector<Tensor>* attention = nullptr);

/// Pre-norm encoder stack: x += MHA(norm1(x)); x += MLP(norm2(x)) per
/// block, then the final norm. MLP = w2 . gelu(w1 . x + b1) + b2.
Var encoder_forward(Var seq, std::span<const EncoderBlockVars> blocks, Var final_gamma, Var final_beta,
                    std::size_t heads, std::vector<Tensor>* attention = nullptr, Real dropout = 0,
                    Rng* rng = nullptr);

inline constexpr Real kLayerNormEps = 1e-5;

class ViTClassifier final : public Classifier {
 public:
  ViTClassifier(const ViTConfig& config, std::uint64_t seed);

  std::string kind() const override { return "vit"; }
  std::size_t num_classes() const override { return config_.num_classes; }
  std::size_t image_size() const override { return config_.image_size; }
  std::size_t channels() const override { return config_.channels; }
  nlohmann::json config_json() const override { return config_; }
  const ViTConfig& config() const noexcept { return config_; }

  /// Final class-token representation, B x D.
  Var features(Tape& tape, const Tensor& images, const ForwardOptions& options = {}) override;
  /// Encoder output for all tokens, B x T x D (before the head).
  Var encode(Tape& tape, const Tensor& images, const ForwardOptions& options = {});

  void reset_head(std::size_t num_classes, Rng& rng) override;

  EncoderBlockVars bind_block(Tape& tape, std::size_t layer);

 private:
  ViTConfig config_;
};

}  // namespace vitkit::models
