#include "vitkit/data/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "vitkit/errors.hpp"
#include "vitkit/tnsr.hpp"

namespace vitkit::data {

namespace {

class PnmReader {
 public:
  explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    std::size_t v = 0, digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError(std::string("PNM header field '") + field + "' is too large");
    }
    if (digits == 0) throw FormatError(std::string("PNM header field '") + field + "' is missing or truncated");
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("PNM header is truncated");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

Tensor decode_pnm(std::span<const std::uint8_t> bytes, char kind) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
    throw FormatError(std::string("bad magic: expected P") + kind);
  }
  const std::size_t channels = kind == '6' ? 3 : 1;
  PnmReader r(bytes);
  const std::size_t w = r.number("width"), h = r.number("height"), maxval = r.number("maxval");
  if (w == 0 || h == 0) throw FormatError("PNM image has a zero extent");
  if (maxval == 0 || maxval > 65535) throw FormatError("PNM maxval " + std::to_string(maxval) + " is outside [1, 65535]");
  r.single_whitespace();
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = w * h * channels * sample_bytes;
  if (bytes.size() - r.pos() < need) {
    throw FormatError("PNM data is truncated: expected " + std::to_string(need) + " bytes, found " +
                      std::to_string(bytes.size() - r.pos()));
  }
  Tensor img({channels, h, w});
  const std::uint8_t* src = bytes.data() + r.pos();
  const auto denom = static_cast<Real>(maxval);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t v = *src++;
        if (sample_bytes == 2) v = (v << 8) | *src++;
        if (v > maxval) throw RangeError("PNM sample exceeds maxval");
        img.data()[(c * h + y) * w + x] = static_cast<Real>(v) / denom;
      }
  return img;
}

void check_image(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("expected channels x H x W image, got " + shape_to_string(image.shape()));
}

}  // namespace

ImageFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm") return ImageFormat::ppm;
  if (ext == ".pgm") return ImageFormat::pgm;
  if (ext == ".tnsr") return ImageFormat::tnsr;
  throw FormatError("unsupported image extension '" + ext + "' for " + path.string());
}

Tensor decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  switch (format) {
    case ImageFormat::ppm: return decode_pnm(bytes, '6');
    case ImageFormat::pgm: return decode_pnm(bytes, '5');
    case ImageFormat::tnsr: {
      Tensor t = decode_tnsr(bytes);
      check_image(t);
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const Real v = t[i];
        if (!(v >= 0 && v <= 1)) {
          throw RangeError("TNSR image value " + std::to_string(v) + " at index " + std::to_string(i) +
                           " is outside [0, 1]");
        }
      }
      return t;
    }
  }
  throw FormatError("unknown image format");
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  check_image(image);
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3) throw DimensionError("PNM needs 1 or 3 channels, got " + std::to_string(c));
  const std::string header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.numel());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const Real v = std::clamp(image.data()[(ch * h + y) * w + x], Real{0}, Real{1});
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255)));
      }
  return out;
}

std::vector<std::uint8_t> encode_image(const Tensor& image, ImageFormat format) {
  if (format == ImageFormat::tnsr) {
    check_image(image);
    return encode_tnsr(image);
  }
  if ((format == ImageFormat::ppm) != (image.rank() == 3 && image.dim(0) == 3)) {
    throw DimensionError("PPM stores 3 channels and PGM 1; got " + shape_to_string(image.shape()));
  }
  return encode_pnm(image);
}

Tensor load_image(const std::filesystem::path& path) {
  const auto format = format_from_path(path);
  try {
    return decode_image(read_file_bytes(path), format);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_image(image, format_from_path(path)));
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  check_image(image);
  if (height == 0 || width == 0) throw ConfigError("resize target must be at least 1x1");
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  if (ih == height && iw == width) return image;

  struct Tap {
    std::size_t lo, hi;
    Real frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    for (std::size_t o = 0; o < out; ++o) {
      const Real pos = out == 1 ? static_cast<Real>(in - 1) / 2
                                : static_cast<Real>(o * (in - 1)) / static_cast<Real>(out - 1);
      const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), in - 1);
      t[o] = {lo, std::min(lo + 1, in - 1), pos - static_cast<Real>(lo)};
    }
    return t;
  };
  const auto ty = taps(ih, height), tx = taps(iw, width);
  Tensor out({c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Real* src = image.data().data() + ch * ih * iw;
    Real* dst = out.data().data() + ch * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const Tap& b = tx[x];
        const Real top = src[a.lo * iw + b.lo] * (1 - b.frac) + src[a.lo * iw + b.hi] * b.frac;
        const Real bottom = src[a.hi * iw + b.lo] * (1 - b.frac) + src[a.hi * iw + b.hi] * b.frac;
        dst[y * width + x] = top * (1 - a.frac) + bottom * a.frac;
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, std::size_t size, std::span<const Real> mean, std::span<const Real> std) {
  check_image(image);
  const std::size_t c = image.dim(0);
  auto per_channel = [c](std::span<const Real> v, const char* what) {
    if (v.size() != 1 && v.size() != c) {
      throw ConfigError(std::string(what) + " has " + std::to_string(v.size()) + " values for " + std::to_string(c) +
                        " channels");
    }
  };
  per_channel(mean, "mean");
  per_channel(std, "std");
  for (Real s : std)
    if (!(s > 0)) throw ConfigError("normalization std must be positive, got " + std::to_string(s));
  Tensor out = resize_bilinear(image, size, size);
  const std::size_t plane = size * size;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Real m = mean[mean.size() == 1 ? 0 : ch], s = std[std.size() == 1 ? 0 : ch];
    for (std::size_t i = 0; i < plane; ++i) {
      Real& v = out.data()[ch * plane + i];
      v = (v - m) / s;
    }
  }
  return out;
}

}  // namespace vitkit::data
