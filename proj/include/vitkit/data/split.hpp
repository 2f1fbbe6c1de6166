#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitkit/data/manifest.hpp"

namespace vitkit::data {

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  bool stratified = true;

  /// Ratios non-negative and summing to 1 within 1e-9 (ConfigError).
  void validate() const;
};

struct SplitResult {
  DatasetManifest train, val, test;
  std::vector<std::string> warnings;
};

/// Seeded shuffle (per class when stratified); val and test take
/// floor(n * ratio) entries each and train keeps the rest. When stratified,
/// a class with fewer entries than non-empty parts goes wholly to train with
/// a warning. Each part keeps the input's entry order.
SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec);

}  // namespace vitkit::data
