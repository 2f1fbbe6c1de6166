#include "vitkit/data/augment.hpp"

#include "vitkit/errors.hpp"

namespace vitkit::data {

namespace {

void check_image(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("expected channels x H x W image, got " + shape_to_string(image.shape()));
}

}  // namespace

void AugmentSpec::validate() const {
  if (flip_probability && !(*flip_probability >= 0 && *flip_probability <= 1)) {
    throw ConfigError("flip probability " + std::to_string(*flip_probability) + " is outside [0, 1]");
  }
}

Tensor random_crop(const Tensor& image, std::size_t pad, Rng& rng) {
  check_image(image);
  if (pad == 0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  // Offset into the padded image; (pad, pad) reproduces the input.
  const auto oy = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
  const auto ox = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y) + oy;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x) + ox;
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        out.data()[(ch * h + y) * w + x] = image.data()[(ch * h + static_cast<std::size_t>(sy)) * w +
                                                         static_cast<std::size_t>(sx)];
      }
    }
  return out;
}

Tensor horizontal_flip(const Tensor& image) {
  check_image(image);
  const std::size_t rows = image.dim(0) * image.dim(1), w = image.dim(2);
  Tensor out = image;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < w; ++x) out.data()[r * w + x] = image.data()[r * w + (w - 1 - x)];
  return out;
}

Tensor rotate_quarter(const Tensor& image, int k) {
  check_image(image);
  k = ((k % 4) + 4) % 4;
  if (k == 0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t oh = k % 2 ? w : h, ow = k % 2 ? h : w;
  Tensor out({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t sy = 0, sx = 0;
        switch (k) {
          case 1: sy = x; sx = w - 1 - y; break;
          case 2: sy = h - 1 - y; sx = w - 1 - x; break;
          default: sy = h - 1 - x; sx = y; break;
        }
        out.data()[(ch * oh + y) * ow + x] = image.data()[(ch * h + sy) * w + sx];
      }
  return out;
}

Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  Tensor out = image;
  if (spec.crop_pad) out = random_crop(out, *spec.crop_pad, rng);
  if (spec.flip_probability && rng.bernoulli(*spec.flip_probability)) out = horizontal_flip(out);
  if (spec.quarter_turns) {
    const bool square = out.dim(1) == out.dim(2);
    const int k = square ? static_cast<int>(rng.below(4)) : 2 * static_cast<int>(rng.below(2));
    out = rotate_quarter(out, k);
  }
  return out;
}

}  // namespace vitkit::data
