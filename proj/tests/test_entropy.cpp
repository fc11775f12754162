#include <doctest.h>

#include <cmath>

#include "clover/entropy.hpp"
#include "clover/math.hpp"

using namespace clover;

namespace {

Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

MultiSourceGp simple_gp(double sv, double l1, double l2,
                        DomainBox box = DomainBox(v2(-4, -3), v2(7, 8)),
                        double mean_const = 0.0) {
  KernelSpec k;
  k.signal_variance = sv;
  k.length_scales = v2(l1, l2);
  MeanSpec m;
  if (mean_const != 0.0) m = {MeanFamily::Constant, mean_const};
  return MultiSourceGp(box, {m}, {k});
}

}  // namespace

TEST_CASE("event probabilities at the reference points") {
  SUBCASE("symmetric band of two standard deviations") {
    auto p = event_probs(0.0, 1.0, 2.0);
    CHECK(p.below == doctest::Approx(0.022750131948179195).epsilon(1e-9));
    CHECK(p.above == doctest::Approx(0.022750131948179195).epsilon(1e-9));
    CHECK(p.center == doctest::Approx(0.9544997361036416).epsilon(1e-9));
  }
  SUBCASE("far field saturates one event") {
    auto p = event_probs(10.0, 1.0, 1.0);
    CHECK(std::abs(p.above - 1.0) < 1e-9);
    CHECK(p.below < 1e-9);
    CHECK(p.center < 1e-9);
  }
  SUBCASE("zero-width band has no center mass") {
    auto p = event_probs(0.7, 2.0, 0.0);
    CHECK(p.center == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(p.below == doctest::Approx(normal_cdf(-0.35)).epsilon(1e-12));
    CHECK(p.above == doctest::Approx(1.0 - normal_cdf(-0.35)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(event_probs(0.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(event_probs(0.0, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("probability simplex on random inputs") {
  Rng rng(101);
  for (int t = 0; t < 10000; ++t) {
    double mu = rng.uniform(-20, 20);
    double sigma = std::exp(rng.uniform(-6, 3));
    double eps = std::abs(rng.uniform(0, 5)) * sigma;
    auto p = event_probs(mu, sigma, eps);
    CHECK(p.below >= 0.0);
    CHECK(p.center >= 0.0);
    CHECK(p.above >= 0.0);
    CHECK(p.below + p.center + p.above == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pointwise entropy reference values") {
  CHECK(pointwise_entropy({1.0 / 3, 1.0 / 3, 1.0 / 3}) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(pointwise_entropy({1.0, 0.0, 0.0}) == 0.0);
  // Frozen from direct evaluation of -sum p ln p on the two-sigma-band masses.
  auto p = event_probs(0.0, 1.0, 2.0);
  CHECK(pointwise_entropy(p) == doctest::Approx(0.21658494554508517).epsilon(1e-10));
}

TEST_CASE("entropy limits in the tolerance band") {
  // eps/sigma -> infinity: everything is the center event.
  CHECK(pointwise_entropy(event_probs(0.0, 1.0, 40.0)) < 1e-12);
  // eps -> 0 with |mu|/sigma large: everything is one tail event.
  CHECK(pointwise_entropy(event_probs(9.0, 1.0, 0.0)) < 1e-12);
  // Continuity in eps at fixed mu = 0: entropy varies smoothly.
  double prev = pointwise_entropy(event_probs(0.0, 1.0, 0.0));
  for (double eps = 0.05; eps < 6.0; eps += 0.05) {
    double h = pointwise_entropy(event_probs(0.0, 1.0, eps));
    CHECK(std::abs(h - prev) < 0.05);
    prev = h;
  }
}

TEST_CASE("trapezoid grid covers the domain volume") {
  DomainBox box(v2(-4, -3), v2(7, 8));
  auto grid = IntegrationGrid::tensor_trapezoid(box, 21);
  grid.validate(box);
  CHECK(grid.weights.sum() == doctest::Approx(box.volume()).epsilon(1e-12));
  auto mc = IntegrationGrid::monte_carlo(box, 500, 7);
  mc.validate(box);
  CHECK(mc.weights.sum() == doctest::Approx(box.volume()).epsilon(1e-12));
}

TEST_CASE("contour entropy of resolved and flat surrogates") {
  DomainBox box(v2(-4, -3), v2(7, 8));
  SUBCASE("large mean against tiny uncertainty vanishes") {
    auto gp = simple_gp(1e-4, 2, 2, box, 10.0);
    auto grid = IntegrationGrid::tensor_trapezoid(box, 30);
    CHECK(contour_entropy(gp, grid, {}) < 1e-6);
  }
  SUBCASE("flat zero-mean surrogate reduces to the pointwise value") {
    auto gp = simple_gp(2.5, 2, 2, box, 0.0);
    auto grid = IntegrationGrid::tensor_trapezoid(box, 30);
    CHECK(contour_entropy(gp, grid, {}) ==
          doctest::Approx(0.21658494554508517).epsilon(1e-10));
  }
}

TEST_CASE("trapezoid quadrature matches monte-carlo integration") {
  DomainBox box(v2(-4, -3), v2(7, 8));
  auto gp = simple_gp(4.0, 2.0, 2.5, box);
  SampleSet s;
  Rng rng(55);
  for (int i = 0; i < 8; ++i)
    s.add(0, v2(rng.uniform(-4, 7), rng.uniform(-3, 8)), rng.normal());
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(8));

  auto trap = IntegrationGrid::tensor_trapezoid(box, 50);
  double reference = contour_entropy(post, trap, {});
  auto mc = IntegrationGrid::monte_carlo(box, 1000000, 99);
  double estimate = contour_entropy(post, mc, {});
  CHECK(std::abs(estimate - reference) < 1e-3);
}

TEST_CASE("contour entropy is invariant under node reordering") {
  DomainBox box(v2(-4, -3), v2(7, 8));
  auto gp = simple_gp(4.0, 2.0, 2.5, box);
  SampleSet s;
  s.add(0, v2(0, 0), 1.0);
  s.add(0, v2(2, 3), -1.0);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(2));

  auto grid = IntegrationGrid::tensor_trapezoid(box, 25);
  IntegrationGrid reversed;
  reversed.nodes = grid.nodes.colwise().reverse().eval();
  reversed.weights = grid.weights.reverse().eval();
  double a = contour_entropy(post, grid, {});
  double b = contour_entropy(post, reversed, {});
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK(a >= 0.0);
  CHECK(a <= std::log(3.0));
}
