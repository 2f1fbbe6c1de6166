#include "vitkit/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "vitkit/errors.hpp"

namespace vitkit::data {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kShapeKinds = 5;
constexpr double kTransferNoise = 0.5;

std::string extension(ImageFormat f) {
  switch (f) {
    case ImageFormat::ppm: return ".ppm";
    case ImageFormat::pgm: return ".pgm";
    case ImageFormat::tnsr: return ".tnsr";
  }
  return "";
}

void stripes(Tensor& img, const SyntheticSpec& spec, std::size_t label, Rng& rng) {
  const double s = static_cast<double>(spec.image_size);
  const double jitter = rng.uniform(-spec.angle_jitter, spec.angle_jitter) * std::numbers::pi / 180;
  const double theta = (static_cast<double>(label) + spec.angle_offset) * std::numbers::pi /
                           static_cast<double>(spec.num_classes) + jitter;
  const double freq = rng.uniform(2.5, 5.0);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  const double ux = std::cos(theta), uy = std::sin(theta);
  double tint[3];
  for (auto& t : tint) t = rng.uniform(0.25, 0.45);
  const std::size_t n = spec.image_size;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      // Image y grows downwards; flip it so angles are counter-clockwise.
      const double proj = static_cast<double>(x) * ux - static_cast<double>(y) * uy;
      const double wave = std::sin(2 * std::numbers::pi * freq * proj / s + phase);
      for (std::size_t c = 0; c < 3; ++c) img.data()[(c * n + y) * n + x] = 0.5 + tint[c] * wave;
    }
}

bool inside_shape(std::size_t kind, double dx, double dy, double r) {
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case 2: return dy <= 0.7 * r && dy >= -r + 2 * std::abs(dx) * 1.0;
    case 3: return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
    default: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.45 * r * r;
    }
  }
}

void shapes(Tensor& img, const SyntheticSpec& spec, std::size_t label, Rng& rng) {
  const std::size_t n = spec.image_size;
  const double s = static_cast<double>(n);
  const double r = rng.uniform(s / 5, s / 3);
  const double cx = rng.uniform(r, s - r), cy = rng.uniform(r, s - r);
  double bg[3], fg[3];
  for (auto& v : bg) v = rng.uniform(0.05, 0.4);
  for (auto& v : fg) v = rng.uniform(0.6, 0.95);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const bool in = inside_shape(label, static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy, r);
      for (std::size_t c = 0; c < 3; ++c) img.data()[(c * n + y) * n + x] = in ? fg[c] : bg[c];
    }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (family != "stripes" && family != "shapes") {
    throw ConfigError("unknown synthetic family '" + family + "' (expected stripes or shapes)");
  }
  if (num_classes == 0 || per_class == 0 || image_size < 4) {
    throw ConfigError("synthetic dataset needs at least 1 class, 1 image per class and 4x4 pixels");
  }
  if (family == "shapes" && num_classes > kShapeKinds) {
    throw ConfigError("the shapes family has at most " + std::to_string(kShapeKinds) + " classes");
  }
  if (noise < 0 || angle_jitter < 0) throw ConfigError("noise and angle_jitter must be non-negative");
}

Tensor synthetic_image(const SyntheticSpec& spec, std::size_t label, Rng& rng) {
  spec.validate();
  if (label >= spec.num_classes) throw LabelError("synthetic label out of range");
  Tensor img({3, spec.image_size, spec.image_size});
  if (spec.family == "stripes") {
    stripes(img, spec, label, rng);
  } else {
    shapes(img, spec, label, rng);
  }
  if (spec.noise > 0)
    for (auto& v : img.data()) v += rng.normal(0, spec.noise);
  for (auto& v : img.data()) v = std::clamp(v, Real{0}, Real{1});
  return img;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const fs::path& dir) {
  spec.validate();
  DatasetManifest m;
  m.name = spec.name.empty() ? spec.family : spec.name;
  for (std::size_t k = 0; k < spec.num_classes; ++k) m.class_names.push_back(spec.family + "_" + std::to_string(k));
  char note[160];
  std::snprintf(note, sizeof note, "synthetic %s seed=%llu per_class=%zu size=%zu offset=%g noise=%g",
                spec.family.c_str(), static_cast<unsigned long long>(spec.seed), spec.per_class, spec.image_size,
                spec.angle_offset, spec.noise);
  m.source_note = note;
  m.root = dir;
  fs::create_directories(dir / "images");
  Rng rng(spec.seed);
  const std::size_t total = spec.per_class * spec.num_classes;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % spec.num_classes;
    char file[32];
    std::snprintf(file, sizeof file, "images/%05zu", i);
    const std::string rel = file + extension(spec.format);
    Tensor img = synthetic_image(spec, label, rng);
    if (spec.format == ImageFormat::pgm) {
      Tensor grey({1, spec.image_size, spec.image_size});
      const std::size_t plane = grey.numel();
      for (std::size_t p = 0; p < plane; ++p)
        grey.data()[p] = (img[p] + img[plane + p] + img[2 * plane + p]) / 3;
      img = std::move(grey);
    }
    save_image(img, dir / rel);
    m.entries.push_back({rel, label});
  }
  save_manifest(m, dir / "manifest.txt");
  return m;
}

SyntheticSpec transfer_source_spec(std::uint64_t seed, std::size_t per_class) {
  SyntheticSpec s;
  s.name = "surrogate";
  s.num_classes = 10;
  s.per_class = per_class;
  s.noise = kTransferNoise;
  s.seed = seed;
  return s;
}

SyntheticSpec transfer_target_spec(std::uint64_t seed, std::size_t per_class) {
  SyntheticSpec s;
  s.name = "target";
  s.num_classes = 3;
  s.per_class = per_class;
  s.angle_offset = 0.25;
  s.noise = kTransferNoise;
  s.seed = seed;
  return s;
}

}  // namespace vitkit::data
