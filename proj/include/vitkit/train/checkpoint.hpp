#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vitkit/models/classifier.hpp"
#include "vitkit/train/adam.hpp"

namespace vitkit::train {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string kind;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::string source_dataset;
  AdamConfig adam;
};

/// Layout: "OVCK", u16 version, u32 length + JSON metadata, u32 parameter
/// count, then per parameter a u32 length + name and a TNSR blob (f64).
/// All integers little-endian.
struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> parameters;
};

Checkpoint make_checkpoint(const models::Classifier& model, CheckpointMeta meta);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// FormatError on bad magic, version or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into the model. The name sets must match
/// exactly; otherwise a ValidationError lists the missing and extra names.
/// Shape mismatches are ValidationErrors too.
void load_parameters(models::Classifier& model, const Checkpoint& checkpoint);

/// Builds the model described by the metadata and loads its parameters.
std::unique_ptr<models::Classifier> restore_model(const Checkpoint& checkpoint);

}  // namespace vitkit::train
