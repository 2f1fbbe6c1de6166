#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vitkit/data/augment.hpp"
#include "vitkit/data/manifest.hpp"
#include "vitkit/rng.hpp"
#include "vitkit/tensor.hpp"

namespace vitkit::data {

struct PreprocessSpec {
  std::size_t image_size = 32;
  /// One value per channel or one shared value.
  std::vector<Real> mean{0.5};
  std::vector<Real> std{0.5};
};

/// A manifest with every image decoded and preprocessed in memory.
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Tensor> images;  // channels x S x S each

  std::size_t size() const noexcept { return images.size(); }
  std::size_t num_classes() const noexcept { return manifest.num_classes(); }
  std::vector<std::size_t> labels() const;
  /// Channel count of the images (0 when empty).
  std::size_t channels() const { return images.empty() ? 0 : images.front().dim(0); }
};

/// Every image must decode to the same channel count (DimensionError).
LoadedDataset load_dataset(const DatasetManifest& manifest, const PreprocessSpec& spec);

struct Batch {
  Tensor images;  // B x channels x S x S
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // positions in the dataset
};

/// Entry order for one epoch, a pure function of (seed, epoch). With
/// `oversample`, minority classes are topped up to the majority count with
/// randomly repeated entries (meant to be paired with augmentation).
std::vector<std::size_t> epoch_order(std::span<const std::size_t> labels, std::size_t num_classes,
                                     std::uint64_t seed, std::size_t epoch, bool shuffle, bool oversample = false);

/// Consecutive chunks of `order`; the final partial batch is kept. Empty
/// input is an EmptyError, batch_size 0 a ConfigError.
std::vector<std::vector<std::size_t>> chunk_batches(std::span<const std::size_t> order, std::size_t batch_size);

/// Stacks the given entries; applies `augment` per image when set.
Batch gather_batch(const LoadedDataset& data, std::span<const std::size_t> indices,
                   const AugmentSpec* augment = nullptr, Rng* rng = nullptr);

/// All batches of one epoch, without augmentation.
std::vector<Batch> make_batches(const LoadedDataset& data, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch = 0, bool shuffle = true);

}  // namespace vitkit::data
