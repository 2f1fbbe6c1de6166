#include "vitkit/tnsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vitkit/errors.hpp"

namespace vitkit {

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'N', 'S', 'R'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_tnsr(const Tensor& t, TnsrDtype dtype) {
  if (t.rank() > 255) throw FormatError("TNSR supports rank <= 255");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kTnsrVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  const std::size_t width = dtype == TnsrDtype::f32 ? 4 : 8;
  out.reserve(out.size() + t.numel() * width);
  for (Real v : t.data()) {
    if (dtype == TnsrDtype::f32) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
    }
  }
  return out;
}

Tensor decode_tnsr(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  if (bytes.size() < 7) throw FormatError("TNSR blob truncated in header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad TNSR magic");
  if (bytes[4] != kTnsrVersion) throw FormatError("unsupported TNSR version " + std::to_string(bytes[4]));
  const std::uint8_t dtype = bytes[5];
  if (dtype != 1 && dtype != 2) throw FormatError("unknown TNSR dtype " + std::to_string(dtype));
  const std::size_t rank = bytes[6];
  std::size_t pos = 7;
  if (bytes.size() < pos + rank * 8) throw FormatError("TNSR blob truncated in extents");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i, pos += 8) shape[i] = get_le<std::uint64_t>(bytes.data() + pos);
  const std::size_t n = shape_numel(shape);
  const std::size_t width = dtype == 1 ? 4 : 8;
  if (n != 0 && (bytes.size() - pos) / width < n) throw FormatError("TNSR blob truncated in data");
  std::vector<Real> data(n);
  for (std::size_t i = 0; i < n; ++i, pos += width) {
    if (dtype == 1) {
      data[i] = static_cast<Real>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos)));
    } else {
      data[i] = static_cast<Real>(std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + pos)));
    }
  }
  if (consumed) *consumed = pos;
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_tnsr_file(const std::filesystem::path& path, const Tensor& t, TnsrDtype dtype) {
  write_file_bytes(path, encode_tnsr(t, dtype));
}

Tensor read_tnsr_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_tnsr(bytes);
}

}  // namespace vitkit
