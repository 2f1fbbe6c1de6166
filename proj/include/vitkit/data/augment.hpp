#pragma once

#include <optional>

#include "vitkit/rng.hpp"
#include "vitkit/tensor.hpp"

namespace vitkit::data {

/// Which augmentations to apply, in this order: crop, flip, rotation.
struct AugmentSpec {
  /// Zero-pad by this many pixels on every side, then crop back at a random offset.
  std::optional<std::size_t> crop_pad;
  /// Probability of a horizontal flip, in [0, 1].
  std::optional<Real> flip_probability;
  /// Random quarter-turn rotation; non-square images only get 0 or 2 turns.
  bool quarter_turns = false;

  bool any() const { return crop_pad || flip_probability || quarter_turns; }
  /// Throws ConfigError for a probability outside [0, 1].
  void validate() const;
};

Tensor random_crop(const Tensor& image, std::size_t pad, Rng& rng);
/// Mirrors columns.
Tensor horizontal_flip(const Tensor& image);
/// Counter-clockwise by k quarter turns; odd k swaps H and W.
Tensor rotate_quarter(const Tensor& image, int k);

/// Shape-preserving; fully determined by the rng state.
Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng);

}  // namespace vitkit::data
