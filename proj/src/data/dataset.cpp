#include "vitkit/data/dataset.hpp"

#include <algorithm>

#include "vitkit/data/image.hpp"
#include "vitkit/errors.hpp"

namespace vitkit::data {

std::vector<std::size_t> LoadedDataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries) out.push_back(e.label);
  return out;
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const PreprocessSpec& spec) {
  manifest.validate();
  LoadedDataset data;
  data.manifest = manifest;
  data.images.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    Tensor img = preprocess(load_image(manifest.resolve(e)), spec.image_size, spec.mean, spec.std);
    if (!data.images.empty() && img.dim(0) != data.images.front().dim(0)) {
      throw DimensionError(e.path + " has " + std::to_string(img.dim(0)) + " channels, expected " +
                           std::to_string(data.images.front().dim(0)));
    }
    data.images.push_back(std::move(img));
  }
  return data;
}

std::vector<std::size_t> epoch_order(std::span<const std::size_t> labels, std::size_t num_classes,
                                     std::uint64_t seed, std::size_t epoch, bool shuffle, bool oversample) {
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  if (oversample && !labels.empty()) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= num_classes) throw LabelError("label " + std::to_string(labels[i]) + " is outside [0, " +
                                                     std::to_string(num_classes) + ")");
      by_class[labels[i]].push_back(i);
    }
    std::size_t largest = 0;
    for (const auto& c : by_class) largest = std::max(largest, c.size());
    for (const auto& c : by_class) {
      if (c.empty()) continue;
      for (std::size_t k = c.size(); k < largest; ++k) order.push_back(c[rng.below(c.size())]);
    }
  }
  if (shuffle) rng.shuffle(order);
  return order;
}

std::vector<std::vector<std::size_t>> chunk_batches(std::span<const std::size_t> order, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (order.empty()) throw EmptyError("cannot batch an empty dataset");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather_batch(const LoadedDataset& data, std::span<const std::size_t> indices, const AugmentSpec* augment,
                   Rng* rng) {
  if (indices.empty()) throw EmptyError("batch has no entries");
  if (augment && augment->any() && rng == nullptr) throw ContractError("augmentation needs an rng");
  const Shape& s = data.images.at(indices.front()).shape();
  const std::size_t per = shape_numel(s);
  Batch b;
  b.images = Tensor({indices.size(), s[0], s[1], s[2]});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= data.size()) throw ContractError("batch index " + std::to_string(i) + " is outside the dataset");
    const Tensor img = augment && augment->any() ? data::augment(data.images[i], *augment, *rng) : data.images[i];
    if (img.shape() != s) throw DimensionError("dataset images differ in shape");
    std::copy(img.data().begin(), img.data().end(), b.images.data().begin() + static_cast<std::ptrdiff_t>(k * per));
    b.labels.push_back(data.manifest.entries[i].label);
    b.indices.push_back(i);
  }
  return b;
}

std::vector<Batch> make_batches(const LoadedDataset& data, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch, bool shuffle) {
  const auto labels = data.labels();
  const auto order = epoch_order(labels, data.num_classes(), seed, epoch, shuffle);
  std::vector<Batch> out;
  for (const auto& chunk : chunk_batches(order, batch_size)) out.push_back(gather_batch(data, chunk));
  return out;
}

}  // namespace vitkit::data
