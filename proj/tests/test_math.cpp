#include <doctest.h>

#include <cmath>

#include "clover/math.hpp"

using namespace clover;

TEST_CASE("normal cdf basics") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(-2.0) == doctest::Approx(0.022750131948179195).epsilon(1e-12));
  CHECK(normal_cdf(2.0) + normal_cdf(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("normal quantile inverts the cdf to machine precision") {
  for (double p : {1e-10, 1e-4, 0.1, 0.3678794411714423, 0.5, 0.77, 0.999, 1.0 - 1e-12}) {
    double x = normal_quantile(p);
    CHECK(normal_cdf(x) == doctest::Approx(p).epsilon(1e-13));
  }
  CHECK_THROWS_AS(normal_quantile(-0.1), std::invalid_argument);
}

TEST_CASE("xlnx convention at zero") {
  CHECK(xlnx(0.0) == 0.0);
  CHECK(xlnx(1.0) == 0.0);
  CHECK(xlnx(0.5) == doctest::Approx(0.5 * std::log(0.5)));
  CHECK_THROWS_AS(xlnx(-1e-9), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    double ua = a.uniform();
    CHECK(ua == b.uniform());
    CHECK(ua >= 0.0);
    CHECK(ua < 1.0);
  }
  CHECK(Rng(7).normal() == Rng(7).normal());
  CHECK(Rng::mix(1, 2) != Rng::mix(1, 3));
  CHECK(Rng::mix(1, 2) != Rng::mix(2, 2));
  (void)c;
}

TEST_CASE("box-muller normals have sane moments") {
  Rng r(2024);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}
