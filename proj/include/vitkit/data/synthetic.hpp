#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vitkit/data/image.hpp"
#include "vitkit/data/manifest.hpp"
#include "vitkit/rng.hpp"

namespace vitkit::data {

/// Class-dependent synthetic textures used in place of real image data.
///
/// "stripes": class k is a sinusoidal grating at angle (k + angle_offset) * pi / C
/// with random frequency, phase, per-channel tint and +/- angle_jitter degrees.
/// "shapes": class k is one of disc, square, triangle, cross, ring (C <= 5)
/// at a random position, size and colour over a random background.
/// Gaussian pixel noise with sd `noise` is added and values clamped to [0, 1].
struct SyntheticSpec {
  std::string family = "stripes";
  std::size_t num_classes = 3;
  std::size_t per_class = 50;
  std::size_t image_size = 32;
  double angle_offset = 0;
  double angle_jitter = 5;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string name;
  ImageFormat format = ImageFormat::ppm;

  /// Throws ConfigError for unknown families or empty counts.
  void validate() const;
};

/// One 3 x S x S image of class `label`.
Tensor synthetic_image(const SyntheticSpec& spec, std::size_t label, Rng& rng);

/// Writes images/NNNNN.<ext> and manifest.txt under `dir` and returns the
/// manifest (rooted at `dir`). Entries interleave classes (entry i has label
/// i mod C). Output bytes depend only on the spec.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// 10-class stripes surrogate for pretraining and a 3-class stripes target
/// whose angles (15, 75, 135 degrees) are disjoint from the surrogate's.
/// Both use heavy pixel noise (sd 0.5) so the small target set is hard to
/// learn from scratch.
SyntheticSpec transfer_source_spec(std::uint64_t seed, std::size_t per_class = 50);
SyntheticSpec transfer_target_spec(std::uint64_t seed, std::size_t per_class = 50);

}  // namespace vitkit::data
