#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "stabilex/rng.hpp"

using stabilex::derive_key;
using stabilex::Stream;

TEST_CASE("derived keys depend on seed, tag and index") {
  std::set<std::uint64_t> keys;
  for (std::uint64_t seed : {0ULL, 1ULL, 7ULL}) {
    for (const char* tag : {"body", "head", "order", "dropout"}) {
      for (std::uint64_t i = 0; i < 50; ++i) keys.insert(derive_key(seed, tag, i));
    }
  }
  CHECK(keys.size() == 3 * 4 * 50);
  CHECK(derive_key(7, "order", 3) == derive_key(7, "order", 3));
}

TEST_CASE("streams are reproducible and independent of creation order") {
  Stream a(5, "x", 1);
  Stream other(5, "y", 0);
  other.next_u64();
  Stream b(5, "x", 1);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform lies in [0,1) with the right mean") {
  Stream s(1, "u");
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("below is unbiased over a small range") {
  Stream s(2, "b");
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[s.below(6)];
  for (int c : counts) CHECK(std::abs(c - n / 6) < 400);
}

TEST_CASE("normal has unit variance") {
  Stream s(3, "n");
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("shuffle is a permutation") {
  Stream s(4, "s");
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  s.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
  CHECK(v != expect);
}
