#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vitkit/tensor.hpp"

namespace vitkit::data {

// Images are channels x H x W tensors with values in [0, 1].

enum class ImageFormat { ppm, pgm, tnsr };

/// From the file extension (.ppm, .pgm, .tnsr); anything else is a FormatError.
ImageFormat format_from_path(const std::filesystem::path& path);

/// P6 gives 3 channels and P5 one; samples are scaled by 1/maxval (1/255
/// for 8-bit files). TNSR blobs must be rank 3 with values in [0, 1]
/// (RangeError otherwise). Bad magic or truncation is a FormatError.
Tensor decode_image(std::span<const std::uint8_t> bytes, ImageFormat format);

/// 8-bit P6 (3 channels) or P5 (1 channel), samples rounded from [0, 1].
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
std::vector<std::uint8_t> encode_image(const Tensor& image, ImageFormat format);

Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Bilinear resampling with corner-aligned sample grids: output pixel o
/// samples input position o * (in - 1) / (out - 1). A 1-pixel output samples
/// the centre, (in - 1) / 2. Matching sizes return the input unchanged.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// Resize to size x size, then (x - mean[c]) / std[c] per channel. mean and
/// std hold one value per channel or a single shared value; std must be
/// positive (ConfigError).
Tensor preprocess(const Tensor& image, std::size_t size, std::span<const Real> mean, std::span<const Real> std);

}  // namespace vitkit::data
