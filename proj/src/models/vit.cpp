#include "vitkit/models/vit.hpp"

#include <cmath>

#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::models {

void ViTConfig::validate() const {
  if (image_size == 0 || channels == 0 || patch_size == 0 || embed_dim == 0 || num_heads == 0 ||
      num_layers == 0 || num_classes == 0) {
    throw ConfigError("ViT config counts must all be at least 1");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (!(mlp_ratio > 0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must give a positive hidden width");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(embed_dim)));
}

void to_json(nlohmann::json& j, const ViTConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size}, {"channels", c.channels},   {"patch_size", c.patch_size},
                     {"embed_dim", c.embed_dim},   {"num_heads", c.num_heads}, {"num_layers", c.num_layers},
                     {"mlp_ratio", c.mlp_ratio},   {"num_classes", c.num_classes}, {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ViTConfig& c) {
  ViTConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.channels = j.value("channels", d.channels);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.num_layers = j.value("num_layers", d.num_layers);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.dropout = j.value("dropout", d.dropout);
}

Tensor partition_and_flatten(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3) throw DimensionError("expected channels x H x W image, got " + shape_to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " (H x W) is not divisible by patch size " +
                      std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch, len = patch * patch * c;
  Tensor out({gh * gw, len});
  Real* dst = out.data().data();
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < patch; ++r) {
          const Real* src = image.data().data() + (ch * h + py * patch + r) * w + px * patch;
          dst = std::copy(src, src + patch, dst);
        }
  return out;
}

Tensor unpartition(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                   std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " (H x W) is not divisible by patch size " + std::to_string(patch));
  }
  const std::size_t gh = height / patch, gw = width / patch;
  if (patches.shape() != Shape{gh * gw, patch * patch * channels}) {
    throw DimensionError("patch matrix " + shape_to_string(patches.shape()) + " does not match the image geometry");
  }
  Tensor image({channels, height, width});
  const Real* src = patches.data().data();
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t r = 0; r < patch; ++r) {
          Real* dst = image.data().data() + (ch * height + py * patch + r) * width + px * patch;
          std::copy(src, src + patch, dst);
          src += patch;
        }
  return image;
}

Tensor partition_batch(const Tensor& images, std::size_t patch) {
  if (images.rank() != 4) throw DimensionError("expected B x C x H x W images, got " + shape_to_string(images.shape()));
  const std::size_t batch = images.dim(0);
  const std::size_t per = images.numel() / std::max<std::size_t>(batch, 1);
  std::vector<Real> data;
  Shape sample_shape{images.dim(1), images.dim(2), images.dim(3)};
  std::size_t n = 0, len = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor sample(sample_shape, std::vector<Real>(images.data().begin() + static_cast<std::ptrdiff_t>(b * per),
                                                  images.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * per)));
    Tensor p = partition_and_flatten(sample, patch);
    n = p.dim(0);
    len = p.dim(1);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return Tensor({batch, n, len}, std::move(data));
}

Var embed_patches(Var patches, Var weight, Var bias) { return ops::linear(patches, weight, bias); }

Var add_positional(Var embeddings, Var class_token, Var positional) {
  const Shape& e = embeddings.shape();
  const Shape& p = positional.shape();
  if (e.size() != 3 || p.size() != 2 || p[1] != e[2]) {
    throw DimensionError("add_positional: embeddings " + shape_to_string(e) + " vs positional table " +
                         shape_to_string(p));
  }
  if (e[1] + 1 != p[0]) {
    throw ConfigError("add_positional: " + std::to_string(e[1]) + " patches but the positional table holds " +
                      std::to_string(p[0]) + " rows");
  }
  return ops::add(ops::prepend_token(embeddings, class_token), positional);
}

Var multi_head_attention(Var x, const AttentionVars& w, std::size_t heads, std::vector<Tensor>* attention) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw DimensionError("multi_head_attention expects B x T x D, got " + shape_to_string(s));
  const std::size_t batch = s[0], tokens = s[1], width = s[2];
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("embedding width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t d = width / heads;
  // B x T x D -> (B*h) x T x d
  auto split = [&](Var v) {
    return ops::reshape(ops::permute(ops::reshape(v, {batch, tokens, heads, d}), {0, 2, 1, 3}),
                        {batch * heads, tokens, d});
  };
  Var q = split(ops::linear(x, w.wq, w.bq));
  Var k = split(ops::linear(x, w.wk, w.bk));
  Var v = split(ops::linear(x, w.wv, w.bv));
  Var scores = ops::scale(ops::bmm(q, ops::transpose_last2(k)), Real{1} / std::sqrt(static_cast<Real>(d)));
  Var weights = ops::softmax(scores, 2);
  if (attention) attention->push_back(weights.value());
  Var mixed = ops::bmm(weights, v);
  Var merged = ops::reshape(ops::permute(ops::reshape(mixed, {batch, heads, tokens, d}), {0, 2, 1, 3}),
                            {batch, tokens, width});
  return ops::linear(merged, w.wo, w.bo);
}

namespace {

Var maybe_dropout(Var x, Real p, Rng* rng) {
  if (p == 0 || rng == nullptr) return x;
  return ops::dropout(x, p, *rng);
}

}  // namespace

Var encoder_forward(Var seq, std::span<const EncoderBlockVars> blocks, Var final_gamma, Var final_beta,
                    std::size_t heads, std::vector<Tensor>* attention, Real dropout, Rng* rng) {
  Var x = seq;
  for (const auto& b : blocks) {
    Var attn = multi_head_attention(ops::layer_norm(x, b.norm1_gamma, b.norm1_beta, kLayerNormEps), b.attn, heads,
                                    attention);
    x = ops::add(x, maybe_dropout(attn, dropout, rng));
    Var hidden = ops::gelu(ops::linear(ops::layer_norm(x, b.norm2_gamma, b.norm2_beta, kLayerNormEps), b.w1, b.b1));
    x = ops::add(x, maybe_dropout(ops::linear(hidden, b.w2, b.b2), dropout, rng));
  }
  return ops::layer_norm(x, final_gamma, final_beta, kLayerNormEps);
}

ViTClassifier::ViTClassifier(const ViTConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t dim = config_.embed_dim, hidden = config_.mlp_hidden();
  params_.add("patch_embed.weight", normal_tensor({config_.patch_dim(), dim}, 0.02, rng));
  params_.add("patch_embed.bias", Tensor({dim}));
  params_.add("cls_token", Tensor({dim}));
  params_.add("pos_embed", normal_tensor({config_.num_tokens(), dim}, 0.02, rng));
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    params_.add(p + "norm1.gamma", Tensor({dim}, Real{1}));
    params_.add(p + "norm1.beta", Tensor({dim}));
    for (const char* m : {"q", "k", "v", "o"}) {
      params_.add(p + "attn.w" + m, normal_tensor({dim, dim}, 0.02, rng));
      params_.add(p + "attn.b" + m, Tensor({dim}));
    }
    params_.add(p + "norm2.gamma", Tensor({dim}, Real{1}));
    params_.add(p + "norm2.beta", Tensor({dim}));
    params_.add(p + "mlp.w1", normal_tensor({dim, hidden}, 0.02, rng));
    params_.add(p + "mlp.b1", Tensor({hidden}));
    params_.add(p + "mlp.w2", normal_tensor({hidden, dim}, 0.02, rng));
    params_.add(p + "mlp.b2", Tensor({dim}));
  }
  params_.add("norm.gamma", Tensor({dim}, Real{1}));
  params_.add("norm.beta", Tensor({dim}));
  add_head(dim, config_.num_classes, rng);
}

EncoderBlockVars ViTClassifier::bind_block(Tape& tape, std::size_t layer) {
  const std::string p = "encoder." + std::to_string(layer) + ".";
  auto leaf = [&](const std::string& name) { return tape.leaf(params_.at(p + name)); };
  EncoderBlockVars b;
  b.norm1_gamma = leaf("norm1.gamma");
  b.norm1_beta = leaf("norm1.beta");
  b.attn = AttentionVars{leaf("attn.wq"), leaf("attn.bq"), leaf("attn.wk"), leaf("attn.bk"),
                         leaf("attn.wv"), leaf("attn.bv"), leaf("attn.wo"), leaf("attn.bo")};
  b.norm2_gamma = leaf("norm2.gamma");
  b.norm2_beta = leaf("norm2.beta");
  b.w1 = leaf("mlp.w1");
  b.b1 = leaf("mlp.b1");
  b.w2 = leaf("mlp.w2");
  b.b2 = leaf("mlp.b2");
  return b;
}

Var ViTClassifier::encode(Tape& tape, const Tensor& images, const ForwardOptions& options) {
  check_input(images);
  const Real drop = options.training ? config_.dropout : Real{0};
  Var patches = tape.constant(partition_batch(images, config_.patch_size));
  Var emb = embed_patches(patches, tape.leaf(params_.at("patch_embed.weight")),
                          tape.leaf(params_.at("patch_embed.bias")));
  Var seq = add_positional(emb, tape.leaf(params_.at("cls_token")), tape.leaf(params_.at("pos_embed")));
  if (drop > 0 && options.rng) seq = ops::dropout(seq, drop, *options.rng);
  std::vector<EncoderBlockVars> blocks;
  for (std::size_t l = 0; l < config_.num_layers; ++l) blocks.push_back(bind_block(tape, l));
  return encoder_forward(seq, blocks, tape.leaf(params_.at("norm.gamma")), tape.leaf(params_.at("norm.beta")),
                         config_.num_heads, options.attention, drop, options.rng);
}

Var ViTClassifier::features(Tape& tape, const Tensor& images, const ForwardOptions& options) {
  return ops::select_token(encode(tape, images, options), 0);
}

void ViTClassifier::reset_head(std::size_t num_classes, Rng& rng) {
  add_head(config_.embed_dim, num_classes, rng);
  config_.num_classes = num_classes;
}

}  // namespace vitkit::models
