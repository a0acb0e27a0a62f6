#include <cmath>
#include <vector>

#include "doctest.h"
#include "specsense/rng.hpp"

using specsense::Rng;

TEST_CASE("same seed replays the identical stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.uniform() == d.uniform());
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform_int hits both endpoints and nothing outside") {
  Rng r(9);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const int v = r.uniform_int(2, 7);
    REQUIRE(v >= 2);
    REQUIRE(v <= 7);
    ++counts[size_t(v) - 2];
  }
  for (int c : counts) CHECK(c > 9000);  // expectation 10000 each
}

TEST_CASE("normal moments") {
  Rng r(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("normal_complex has unit mean square magnitude") {
  Rng r(13);
  const int n = 100000;
  double p = 0.0;
  for (int i = 0; i < n; ++i) p += std::norm(r.normal_complex());
  CHECK(p / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("fork produces a decorrelated but deterministic child") {
  Rng a(5), b(5);
  Rng ca = a.fork(), cb = b.fork();
  for (int i = 0; i < 100; ++i) CHECK(ca.next_u64() == cb.next_u64());
  // Parent stream continues identically after the fork.
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // Child stream differs from the parent's continuation.
  Rng p(5);
  Rng child = p.fork();
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (child.next_u64() == p.next_u64()) ++same;
  CHECK(same == 0);
}
