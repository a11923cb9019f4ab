#include <cmath>
#include <set>

#include "doctest.h"
#include "samcnn/rng.hpp"

using namespace samcnn;

TEST_SUITE("rng") {

TEST_CASE("splitmix64 matches the reference generator") {
  // First two outputs of the reference splitmix64 with state 0.
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("FNV-1a tag hash") {
  CHECK(hash_tag("") == 0xCBF29CE484222325ULL);
  CHECK(hash_tag("a") == 0xAF63DC4C8601EC8CULL);
}

TEST_CASE("derived seeds depend on every tag and on order") {
  const auto a = derive_seed(1, "sample", 0);
  CHECK(a == derive_seed(1, "sample", 0));
  CHECK(a != derive_seed(1, "sample", 1));
  CHECK(a != derive_seed(2, "sample", 0));
  CHECK(derive_seed(1, "x", "y") != derive_seed(1, "y", "x"));
  CHECK(derive_seed(1, 5, 7) != derive_seed(1, 7, 5));
  CHECK(double_bits(-0.0) == double_bits(0.0));
}

TEST_CASE("uniform stays in (0, 1] and below() is in range") {
  Stream s(3);
  for (int k = 0; k < 10000; ++k) {
    const double u = s.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    CHECK(s.below(7) < 7);
  }
}

TEST_CASE("normal moments") {
  Stream s(11);
  const int n = 200000;
  double m1 = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = s.normal();
    m1 += z;
    m2 += z * z;
  }
  m1 /= n;
  m2 /= n;
  CHECK(std::abs(m1) < 5.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("below() hits every value about equally") {
  Stream s(5);
  int counts[5] = {};
  const int n = 50000;
  for (int k = 0; k < n; ++k) ++counts[s.below(5)];
  for (int c : counts) CHECK(std::abs(c - n / 5) < 5 * std::sqrt(n * 0.2 * 0.8));
}

TEST_CASE("streams are reproducible") {
  Stream a(99), b(99);
  for (int k = 0; k < 100; ++k) CHECK(a.normal() == b.normal());
  Stream c(100);
  CHECK(Stream(99).next_u64() != c.next_u64());
}

}
