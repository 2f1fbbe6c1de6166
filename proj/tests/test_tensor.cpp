#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "vitkit/errors.hpp"
#include "vitkit/tnsr.hpp"

using namespace vitkit;

TEST_CASE("tensor data length equals the product of extents") {
  CHECK(Tensor().numel() == 1);
  CHECK(Tensor({2, 3, 4}).numel() == 24);
  CHECK(Tensor({3, 0}).numel() == 0);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), DimensionError);
}

TEST_CASE("multi-index access is row-major") {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.at({1, 0}) == 3);
  CHECK(t.at({0, 2}) == 2);
  CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
  CHECK_THROWS_AS(t.at({0}), DimensionError);
}

TEST_CASE("reshape keeps data and rejects size changes") {
  Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor r = t.reshaped({4});
  CHECK(r.shape() == Shape{4});
  CHECK(r.values() == t.values());
  CHECK_THROWS_AS(t.reshaped({3}), DimensionError);
}

TEST_CASE("TNSR round trip is bit exact over random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Shape shape;
    const auto rank = rng.below(5);
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(1 + rng.below(4));
    Tensor t = testing::random_tensor(shape, rng, -1e6, 1e6);
    const auto bytes = encode_tnsr(t);
    std::size_t used = 0;
    Tensor back = decode_tnsr(bytes, &used);
    CHECK(used == bytes.size());
    CHECK(back == t);
  }
}

TEST_CASE("TNSR header layout") {
  Tensor t({2, 1}, {1.5, -2.0});
  const auto bytes = encode_tnsr(t, TnsrDtype::f32);
  REQUIRE(bytes.size() == 4 + 3 + 2 * 8 + 2 * 4);
  CHECK(bytes[0] == 'T');
  CHECK(bytes[3] == 'R');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 2);
  CHECK(bytes[7] == 2);  // first extent, little-endian
  CHECK(bytes[8] == 0);
  Tensor back = decode_tnsr(bytes);
  CHECK(back == t);  // both values are exact in f32
}

TEST_CASE("TNSR rejects bad magic and truncation") {
  auto bytes = encode_tnsr(Tensor({3}, {1, 2, 3}));
  auto bad = bytes;
  bad[3] = 'X';
  CHECK_THROWS_AS(decode_tnsr(bad), FormatError);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_tnsr(bytes), FormatError);
  CHECK_THROWS_AS(decode_tnsr(std::vector<std::uint8_t>{'T', 'N'}), FormatError);
}

TEST_CASE("rng draws are reproducible for a seed") {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs = differs || x != c.normal();
  }
  CHECK(differs);
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
}
