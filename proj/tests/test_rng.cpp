#include <cmath>
#include <numeric>
#include <set>

#include "ltmlc/rng.hpp"
#include "support.hpp"

namespace ltmlc {
namespace {

TEST(SplitMix64, MatchesPublishedFirstOutputForSeedZero) {
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64_next(state), 0xE220A8397B1DCDAFULL);
}

TEST(Fnv1a64, MatchesKnownVectors) {
  EXPECT_EQ(fnv1a64("", 0), 14695981039346656037ULL);
  EXPECT_EQ(fnv1a64("a", 1), 0xAF63DC4C8601EC8CULL);
  EXPECT_EQ(fnv1a64("foobar", 6), 0x85944171F73967E8ULL);
}

TEST(Rng, IsDeterministicAndStreamsDiffer) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng s0 = Rng::stream(1, 0), s1 = Rng::stream(1, 1);
  EXPECT_NE(s0.next_u64(), s1.next_u64());
}

TEST(Rng, UniformStaysInOpenInterval) {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(5);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sum2 / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, GammaMeanMatchesShape) {
  for (double shape : {0.5, 1.0, 4.0}) {
    Rng rng(9);
    const int n = 100000;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    EXPECT_NEAR(sum / n, shape, 5.0 * std::sqrt(shape / n)) << shape;
  }
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng rng(13);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5.0 * std::sqrt(n / 7.0));
}

TEST(Rng, PermutationIsAPermutation) {
  Rng rng(17);
  for (std::size_t n : {1u, 2u, 10u, 33u}) {
    auto p = rng.permutation(n);
    std::sort(p.begin(), p.end());
    std::vector<std::size_t> id(n);
    std::iota(id.begin(), id.end(), std::size_t{0});
    EXPECT_EQ(p, id);
  }
}

}  // namespace
}  // namespace ltmlc
