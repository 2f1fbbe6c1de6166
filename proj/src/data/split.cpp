#include "vitkit/data/split.hpp"

#include <algorithm>
#include <cmath>

#include "vitkit/errors.hpp"
#include "vitkit/rng.hpp"

namespace vitkit::data {

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + val + test - 1) > 1e-9) {
    throw ConfigError("split ratios " + std::to_string(train) + ":" + std::to_string(val) + ":" +
                      std::to_string(test) + " do not sum to 1");
  }
}

namespace {

std::size_t floor_share(std::size_t n, double ratio) {
  // The epsilon absorbs representation error, e.g. 15000 * 0.1.
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

}  // namespace

SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec) {
  spec.validate();
  manifest.validate();
  const std::size_t parts = (spec.train > 0) + (spec.val > 0) + (spec.test > 0);
  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    groups.resize(manifest.num_classes());
    for (std::size_t i = 0; i < manifest.size(); ++i) groups[manifest.entries[i].label].push_back(i);
  } else {
    groups.emplace_back(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) groups[0][i] = i;
  }

  SplitResult result;
  // 0 = train, 1 = val, 2 = test
  std::vector<int> assignment(manifest.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& idx = groups[g];
    if (idx.empty()) continue;
    if (spec.stratified && idx.size() < parts) {
      result.warnings.push_back("class '" + manifest.class_names[g] + "' has " + std::to_string(idx.size()) +
                                " entries, fewer than the " + std::to_string(parts) +
                                " splits; all of them go to train");
      continue;
    }
    Rng rng(derive_seed(spec.seed, g));
    rng.shuffle(idx);
    const std::size_t n_val = floor_share(idx.size(), spec.val), n_test = floor_share(idx.size(), spec.test);
    for (std::size_t k = 0; k < n_val; ++k) assignment[idx[k]] = 1;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) assignment[idx[k]] = 2;
  }

  result.train = manifest.empty_copy();
  result.val = manifest.empty_copy();
  result.test = manifest.empty_copy();
  DatasetManifest* outs[] = {&result.train, &result.val, &result.test};
  for (std::size_t i = 0; i < manifest.size(); ++i) outs[assignment[i]]->entries.push_back(manifest.entries[i]);
  return result;
}

}  // namespace vitkit::data
