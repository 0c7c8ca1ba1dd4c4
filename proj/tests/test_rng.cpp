#include <algorithm>
#include <cstdint>

#include "doctest.h"
#include "pase/rng.hpp"

using namespace pase;

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    all_equal &= (va == b.next_u64());
    any_diff |= (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("unit draws stay in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("below respects the bound and hits every value") {
  Rng rng(3);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(5);
    REQUIRE(v < 5);
    ++seen[v];
  }
  for (const int count : seen) CHECK(count > 0);
}

TEST_CASE("shuffle permutes") {
  Rng rng(11);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  shuffle(w, rng);
  CHECK(w != v);  // 50! makes identity astronomically unlikely
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

TEST_CASE("gaussian and laplace have roughly centered samples") {
  Rng rng(5);
  double gsum = 0.0, lsum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) gsum += rng.gaussian();
  for (int i = 0; i < n; ++i) lsum += rng.laplace(1.0);
  CHECK(std::abs(gsum / n) < 0.05);
  CHECK(std::abs(lsum / n) < 0.05);
}
