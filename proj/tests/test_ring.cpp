#include <doctest.h>

#include <cmath>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/prg.hpp"
#include "sealedinfer/ring.hpp"

using namespace sealedinfer;

namespace {

// Integer floor division oracle for signed values.
std::int64_t floor_div(std::int64_t v, int s) {
  const std::int64_t d = std::int64_t{1} << s;
  std::int64_t q = v / d;
  if ((v % d != 0) && (v < 0)) --q;
  return q;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(FixedPointConfig::make(64, 12));
  CHECK_NOTHROW(FixedPointConfig::make(16, 12));
  CHECK_THROWS_AS(FixedPointConfig::make(16, 13), ConfigError);
  CHECK_THROWS_AS(FixedPointConfig::make(7, 2), ConfigError);
  CHECK_THROWS_AS(FixedPointConfig::make(65, 12), ConfigError);
  CHECK_THROWS_AS(FixedPointConfig::make(32, 0), ConfigError);
}

TEST_CASE("fx_encode examples") {
  const auto cfg = FixedPointConfig::make(16, 12);
  CHECK(fx_encode(1.0, cfg) == 4096);
  CHECK(fx_encode(0.0, cfg) == 0);
  CHECK(fx_encode(0.0, FixedPointConfig::make(64, 12)) == 0);
  CHECK(fx_encode(-0.5, cfg) == 63488);
  CHECK(fx_decode(4096, cfg) == 1.0);
  CHECK(fx_decode(63488, cfg) == -0.5);
}

TEST_CASE("fx_encode rounds half away from zero") {
  const auto cfg = FixedPointConfig::make(16, 2);
  CHECK(to_signed(fx_encode(0.125, cfg), cfg) == 1);
  CHECK(to_signed(fx_encode(-0.125, cfg), cfg) == -1);
  CHECK(to_signed(fx_encode(0.375, cfg), cfg) == 2);
  CHECK(to_signed(fx_encode(-0.375, cfg), cfg) == -2);
}

TEST_CASE("fx_encode rejects out of range values") {
  const auto cfg = FixedPointConfig::make(16, 12);
  CHECK_THROWS_AS(fx_encode(8.0, cfg), OverflowError);
  CHECK_THROWS_AS(fx_encode(-8.0, cfg), OverflowError);
  CHECK_THROWS_AS(fx_encode(std::nan(""), cfg), OverflowError);
  CHECK_NOTHROW(fx_encode(7.99, cfg));
}

TEST_CASE("encode/decode round trip within half an ulp") {
  Prg prg(1);
  for (int k : {16, 32, 64}) {
    const auto cfg = FixedPointConfig::make(k, 12);
    const double range = std::ldexp(1.0, k - 12 - 1);
    for (int i = 0; i < 20000; ++i) {
      const double x = (2.0 * prg.uniform_real() - 1.0) * range * 0.999;
      CHECK(std::fabs(fx_decode(fx_encode(x, cfg), cfg) - x) <= std::ldexp(1.0, -13));
    }
  }
}

TEST_CASE("ring arithmetic wraps") {
  const auto cfg = FixedPointConfig::make(8, 2);
  CHECK(ring_add(200, 100, cfg) == 44);
  CHECK(ring_add(123, 0, cfg) == 123);
  CHECK(ring_mul(16, 16, cfg) == 0);
  CHECK(ring_sub(3, 5, cfg) == 254);
  CHECK(ring_neg(1, cfg) == 255);
  const auto c64 = FixedPointConfig::make(64, 12);
  CHECK(ring_add(~0ULL, 2, c64) == 1);
}

TEST_CASE("decoded addition is exact inside the signed range") {
  Prg prg(2);
  const auto cfg = FixedPointConfig::make(32, 12);
  for (int i = 0; i < 10000; ++i) {
    const RingElement a = from_signed(static_cast<std::int64_t>(prg.uniform(1 << 28)) - (1 << 27), cfg);
    const RingElement b = from_signed(static_cast<std::int64_t>(prg.uniform(1 << 28)) - (1 << 27), cfg);
    CHECK(fx_decode(ring_add(a, b, cfg), cfg) == fx_decode(a, cfg) + fx_decode(b, cfg));
  }
}

TEST_CASE("trunc_floor examples") {
  const auto c32 = FixedPointConfig::make(32, 12);
  const RingElement one = fx_encode(1.0, c32);
  CHECK(trunc_floor(ring_mul(one, one, c32), 12, c32) == one);
  CHECK(trunc_floor(0, 12, c32) == 0);
  const auto c16 = FixedPointConfig::make(16, 4);
  CHECK(to_signed(trunc_floor(from_signed(-17, c16), 4, c16), c16) == -2);
}

TEST_CASE("trunc_floor matches integer floor over all k=16 values") {
  const auto cfg = FixedPointConfig::make(16, 4);
  for (int s : {1, 4, 8, 12}) {
    int bad = 0;
    for (std::uint64_t x = 0; x < (1U << 16); ++x) {
      const std::int64_t want = floor_div(to_signed(x, cfg), s);
      if (to_signed(trunc_floor(x, s, cfg), cfg) != want) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("signed view is two's complement") {
  const auto cfg = FixedPointConfig::make(16, 4);
  CHECK(to_signed(0x7fff, cfg) == 32767);
  CHECK(to_signed(0x8000, cfg) == -32768);
  CHECK(from_signed(-1, cfg) == 0xffff);
  CHECK(ring_msb(0x8000, cfg));
  CHECK_FALSE(ring_msb(0x7fff, cfg));
}

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(FloatTensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
  const auto cfg = FixedPointConfig::make(64, 12);
  const FloatTensor t(Shape{2}, {0.5, -0.25});
  const PlainTensor e = encode_tensor(t, cfg);
  CHECK(decode_tensor(e, cfg) == t);
}

TEST_CASE("ring matmul against a direct loop") {
  Prg prg(3);
  const auto cfg = FixedPointConfig::make(32, 12);
  const std::size_t m = 4, n = 6, p = 3;
  std::vector<RingElement> a(m * n), b(n * p);
  for (auto& v : a) v = prg.next_u64() & cfg.mask();
  for (auto& v : b) v = prg.next_u64() & cfg.mask();
  const auto c = ring_matmul(a, b, m, n, p, cfg);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      RingElement acc = 0;
      for (std::size_t t = 0; t < n; ++t) acc = ring_add(acc, ring_mul(a[i * n + t], b[t * p + j], cfg), cfg);
      CHECK(c[i * p + j] == acc);
    }
  }
}
