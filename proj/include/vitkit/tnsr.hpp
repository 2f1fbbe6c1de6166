#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vitkit/tensor.hpp"

namespace vitkit {

// "TNSR" layout: magic, u8 version (1), u8 dtype (1 = f32, 2 = f64), u8 rank,
// rank u64 little-endian extents, then little-endian scalars.
enum class TnsrDtype : std::uint8_t { f32 = 1, f64 = 2 };

inline constexpr std::uint8_t kTnsrVersion = 1;

std::vector<std::uint8_t> encode_tnsr(const Tensor& t, TnsrDtype dtype = TnsrDtype::f64);

/// Decodes one blob starting at the front of `bytes`. If `consumed` is
/// given it receives the blob length, so blobs can be read back to back.
Tensor decode_tnsr(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_tnsr_file(const std::filesystem::path& path, const Tensor& t, TnsrDtype dtype = TnsrDtype::f64);
Tensor read_tnsr_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vitkit
