#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

#include "hers/rng.hpp"

using hers::SeededRng;

TEST(SplitMix, KnownVector) {
  std::uint64_t s = 1234567;
  EXPECT_EQ(hers::splitmix64(s), 6457827717110365317ULL);
}

// Values from an independent reference implementation of splitmix64 + xoshiro256**.
TEST(SeededRng, FirstTenDrawsSeed42) {
  const std::array<std::uint64_t, 10> expected = {
      0x15780B2E0C2EC716ULL, 0x6104D9866D113A7EULL, 0xAE17533239E499A1ULL, 0xECB8AD4703B360A1ULL,
      0xFDE6DC7FE2EC5E64ULL, 0xC50DA53101795238ULL, 0xB82154855A65DDB2ULL, 0xD99A2743EBE60087ULL,
      0xC2E96E726E97647EULL, 0x9556615F775FBC3DULL};
  SeededRng rng(42);
  for (auto e : expected) EXPECT_EQ(rng.next(), e);
}

TEST(SeededRng, SameSeedSameStream) {
  SeededRng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(SeededRng, UniformInRangeAndBelowBounded) {
  SeededRng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
}

TEST(SeededRng, UniformUsesTop53Bits) {
  SeededRng a(42), b(42);
  EXPECT_EQ(a.uniform(), static_cast<double>(b.next() >> 11) / 9007199254740992.0);
}

TEST(SeededRng, NormalMoments) {
  SeededRng rng(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(SeededRng, BoxMullerPairFromTwoUniforms) {
  SeededRng a(5), b(5);
  const double u1 = 1.0 - b.uniform(), u2 = b.uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  EXPECT_DOUBLE_EQ(a.normal(), r * std::cos(2.0 * M_PI * u2));
  EXPECT_DOUBLE_EQ(a.normal(), r * std::sin(2.0 * M_PI * u2));
}

TEST(SeededRng, ForkIsIndependentOfParentPosition) {
  SeededRng a(9), b(9);
  b.next();
  b.next();
  EXPECT_EQ(a.fork(1).next(), b.fork(1).next());
  EXPECT_NE(a.fork(1).next(), a.fork(2).next());
}

TEST(DeriveSeed, DistinctSaltsDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(hers::derive_seed(1, s));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(hers::fnv1a64(""), 0xCBF29CE484222325ULL);
  EXPECT_EQ(hers::fnv1a64("a"), 0xAF63DC4C8601EC8CULL);
}
