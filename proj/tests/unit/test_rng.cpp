#include <doctest.h>

#include <cmath>
#include <set>

#include "uplift/rng.hpp"

using uplift::CounterRng;
using uplift::Stream;

TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(CounterRng::philox({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(CounterRng::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(CounterRng::philox({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("splitmix64 reference values") {
  // First outputs of the reference generator seeded with 0 are splitmix64(0), splitmix64(golden).
  CHECK(uplift::splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("same seed and stream reproduce; streams and seeds differ") {
  CounterRng a(42, Stream::kPayoffs), b(42, Stream::kPayoffs), c(42, Stream::kPolicy), d(43, Stream::kPayoffs);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    CHECK(x == b());
    seen.insert(x);
    seen.insert(c());
    seen.insert(d());
  }
  CHECK(seen.size() == 3000);
}

TEST_CASE("outputs come from consecutive counter blocks") {
  CounterRng r(7, Stream::kPayoffs);
  const std::uint64_t k = uplift::splitmix64(7);
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  for (std::uint32_t block = 0; block < 3; ++block) {
    const auto w = CounterRng::philox({block, 0, 1, 0}, key);
    CHECK(r() == (std::uint64_t{w[0]} | (std::uint64_t{w[1]} << 32)));
    CHECK(r() == (std::uint64_t{w[2]} | (std::uint64_t{w[3]} << 32)));
  }
  CHECK(r.block_index() == 3);
}

TEST_CASE("uniform and normal moments") {
  CounterRng r(1, Stream::kPolicy);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("bernoulli extremes") {
  CounterRng r(3, Stream::kPayoffs);
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(r.bernoulli(0.0));
    CHECK(r.bernoulli(1.0));
  }
}
