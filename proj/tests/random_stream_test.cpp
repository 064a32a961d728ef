#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ksfront/errors.hpp"
#include "ksfront/random_stream.hpp"

namespace ksfront {
namespace {

// Golden values from an independent arbitrary-precision evaluation of the
// three SplitMix64 rounds.
TEST(DeriveSeed, MatchesGoldenValues) {
  EXPECT_EQ(derive_seed(0, 0, 0u), 9810415043971202448ULL);
  EXPECT_EQ(derive_seed(1, 0, 0u), 3232956451035279046ULL);
  EXPECT_EQ(derive_seed(42, 7, Stream::paths), 12766994939905530463ULL);
  EXPECT_EQ(derive_seed(~0ULL, 123456789, Stream::coupling_suite), 14398156712493644718ULL);
  EXPECT_EQ(derive_seed(20260101, 199, Stream::resample), 11912647072145690199ULL);
}

TEST(DeriveSeed, IsConstexpr) {
  static_assert(derive_seed(0, 0, 0u) == 9810415043971202448ULL);
  SUCCEED();
}

TEST(DeriveSeed, ReplicaSeedsDoNotCollide) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 100000; ++r) {
    ASSERT_TRUE(seen.insert(derive_seed(5, r, Stream::initial_config)).second) << r;
  }
}

TEST(DeriveSeed, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint32_t s = 0; s < 5; ++s) seen.insert(derive_seed(5, 3, s));
  EXPECT_EQ(seen.size(), 5u);
}

TEST(RandomStream, SameSeedSameSequence) {
  RandomStream a(77);
  RandomStream b(77);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RandomStream, UniformRanges) {
  auto lo = RandomStream::scripted({0, ~0ULL});
  EXPECT_EQ(lo.uniform(), 0.0);
  EXPECT_LT(lo.uniform(), 1.0);
  auto hi = RandomStream::scripted({0, ~0ULL});
  EXPECT_GT(hi.uniform_open_low(), 0.0);
  EXPECT_EQ(hi.uniform_open_low(), 1.0);
}

TEST(RandomStream, ScriptedStreamYieldsZeroWhenExhausted) {
  auto s = RandomStream::scripted({5});
  EXPECT_EQ(s.next_u64(), 5u);
  EXPECT_EQ(s.next_u64(), 0u);
}

TEST(RandomStream, SignUsesTopBit) {
  auto s = RandomStream::scripted({1ULL << 63, 0});
  EXPECT_EQ(s.sign(), 1);
  EXPECT_EQ(s.sign(), -1);
}

TEST(RandomStream, ExponentialMeanAndErrors) {
  RandomStream rng(1);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.exponential(2.0);
  // Mean 1/2, sd of the mean 0.5/sqrt(n).
  EXPECT_NEAR(sum / n, 0.5, 5.0 * 0.5 / std::sqrt(n));
  EXPECT_THROW(rng.exponential(0.0), ParameterError);
}

TEST(RandomStream, PoissonMomentsIncludingLargeMeans) {
  for (double mean : {0.3, 1.0, 7.5, 95.0}) {
    RandomStream rng(2);
    const int n = 100000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = rng.poisson(mean);
      s += k;
      s2 += k * k;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    EXPECT_NEAR(m, mean, 5.0 * std::sqrt(mean / n)) << mean;
    EXPECT_NEAR(var / mean, 1.0, 0.05) << mean;
  }
  RandomStream rng(3);
  EXPECT_EQ(rng.poisson(0.0), 0u);
  EXPECT_THROW(rng.poisson(-1.0), ParameterError);
}

TEST(RandomStream, NormalMoments) {
  RandomStream rng(4);
  const int n = 200000;
  double s = 0.0;
  double s2 = 0.0;
  int below = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    below += z < -1.6448536269514722;
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(static_cast<double>(below) / n, 0.05, 5.0 * std::sqrt(0.05 * 0.95 / n));
}

TEST(RandomStream, NormalConsumesTwoWords) {
  RandomStream a(9);
  RandomStream b(9);
  a.normal();
  b.next_u64();
  b.next_u64();
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace ksfront
