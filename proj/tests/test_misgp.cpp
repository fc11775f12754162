#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "clover/math.hpp"
#include "clover/misgp.hpp"

using namespace clover;

namespace {

Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

DomainBox box2() { return DomainBox(v2(-4.0, -3.0), v2(7.0, 8.0)); }

KernelSpec se(double sv, double l1, double l2) {
  KernelSpec k;
  k.family = KernelFamily::SquaredExponential;
  k.signal_variance = sv;
  k.length_scales = v2(l1, l2);
  return k;
}

MultiSourceGp three_source_gp() {
  std::vector<MeanSpec> means(3);
  std::vector<KernelSpec> kernels{se(4.0, 2.0, 2.5), se(1.0, 3.0, 3.0), se(0.25, 1.5, 2.0)};
  return MultiSourceGp(box2(), means, kernels);
}

// Straight-line reimplementation of the conditioning math: dense matrices
// built element by element, solved with an unrelated decomposition. Kept
// independent of MultiSourceGp internals on purpose.
struct NaiveOracle {
  std::vector<KernelSpec> kernels;
  std::vector<int> src;
  std::vector<Eigen::VectorXd> xs;
  Eigen::VectorXd y;
  double nugget;
  Eigen::MatrixXd kinv;

  double prior(int l, const Eigen::VectorXd& a, int m, const Eigen::VectorXd& b) const {
    double c = kernels[0](a, b);
    if (l == m && l > 0) c += kernels[l](a, b);
    return c;
  }

  void build(double jitter_abs) {
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) k(i, j) = prior(src[i], xs[i], src[j], xs[j]);
    k.diagonal().array() += jitter_abs;
    kinv = k.fullPivLu().inverse();
  }

  double mean(int l, const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(xs.size());
    Eigen::VectorXd kv(n);
    for (int i = 0; i < n; ++i) kv[i] = prior(l, x, src[i], xs[i]);
    return kv.dot(kinv * y);
  }

  double cov(int l, const Eigen::VectorXd& a, int m, const Eigen::VectorXd& b) const {
    const int n = static_cast<int>(xs.size());
    Eigen::VectorXd ka(n), kb(n);
    for (int i = 0; i < n; ++i) {
      ka[i] = prior(l, a, src[i], xs[i]);
      kb[i] = prior(m, b, src[i], xs[i]);
    }
    return prior(l, a, m, b) - ka.dot(kinv * kb);
  }
};

SampleSet random_samples(Rng& rng, int n, int num_sources) {
  SampleSet s;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = v2(rng.uniform(-4.0, 7.0), rng.uniform(-3.0, 8.0));
    s.add(static_cast<int>(rng.next_u64() % num_sources), x, rng.normal());
  }
  return s;
}

}  // namespace

TEST_CASE("prior mean sums the central and bias terms") {
  auto gp = three_source_gp();
  CHECK(gp.prior_mean(0, v2(1, 1)) == 0.0);
  CHECK(gp.prior_mean(2, v2(0.5, -1)) == 0.0);

  std::vector<MeanSpec> means{{MeanFamily::Constant, 3.0},
                              {MeanFamily::Constant, 5.0},
                              {MeanFamily::Constant, -1.0}};
  std::vector<KernelSpec> kernels{se(1, 1, 1), se(1, 1, 1), se(1, 1, 1)};
  MultiSourceGp gp2(box2(), means, kernels);
  CHECK(gp2.prior_mean(2, v2(0, 0)) == 2.0);
  CHECK(gp2.prior_mean(0, v2(3, 3)) == 3.0);  // no bias term for the unbiased source
  CHECK_THROWS_AS(gp2.prior_mean(3, v2(0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(gp2.prior_mean(-1, v2(0, 0)), std::invalid_argument);
}

TEST_CASE("prior covariance puts the bias kernel only on matching sources") {
  std::vector<MeanSpec> means(2);
  std::vector<KernelSpec> kernels{se(1.0, 1.0, 1.0), se(0.25, 1.0, 1.0)};
  MultiSourceGp gp(box2(), means, kernels);

  CHECK(gp.prior_cov(1, v2(0, 0), 0, v2(1, 1)) ==
        doctest::Approx(kernels[0](v2(0, 0), v2(1, 1))).epsilon(1e-15));
  CHECK(gp.prior_cov(1, v2(0.3, 0.3), 1, v2(0.3, 0.3)) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(gp.prior_cov(0, v2(0, 0), 0, v2(1, 0)) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("additive structure across sources") {
  Rng rng(11);
  auto gp = three_source_gp();
  for (int t = 0; t < 200; ++t) {
    int l = static_cast<int>(rng.next_u64() % 3);
    int m = static_cast<int>(rng.next_u64() % 3);
    if (l == m) continue;
    Eigen::VectorXd a = v2(rng.uniform(-4, 7), rng.uniform(-3, 8));
    Eigen::VectorXd b = v2(rng.uniform(-4, 7), rng.uniform(-3, 8));
    CHECK(gp.prior_cov(l, a, m, b) == doctest::Approx(gp.kernel_spec(0)(a, b)).epsilon(1e-15));
  }
}

TEST_CASE("conditioning on an empty set reproduces the prior") {
  auto gp = three_source_gp();
  auto post = gp.conditioned(SampleSet{}, Eigen::VectorXd(0));
  Eigen::VectorXd x = v2(1.0, 2.0);
  CHECK(post.posterior_mean(1, x) == gp.prior_mean(1, x));
  CHECK(post.posterior_cov(1, x, 1, x) == gp.prior_cov(1, x, 1, x));
}

TEST_CASE("noise-free observation is interpolated") {
  auto gp = three_source_gp();
  SampleSet s;
  s.add(0, v2(1.0, 1.0), 2.5);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(1));
  CHECK(post.posterior_mean(0, v2(1.0, 1.0)) == doctest::Approx(2.5).epsilon(1e-8));
  CHECK(post.posterior_var(0, v2(1.0, 1.0)) <= 1e-6 * 4.0);
}

TEST_CASE("duplicated noise-free samples survive via jitter") {
  auto gp = three_source_gp();
  SampleSet one;
  one.add(0, v2(0.5, 0.5), 1.0);
  SampleSet two = one;
  two.add(0, v2(0.5, 0.5), 1.0);
  auto p1 = gp.conditioned(one, Eigen::VectorXd::Zero(1));
  auto p2 = gp.conditioned(two, Eigen::VectorXd::Zero(2));
  for (auto& probe : {v2(0.4, 0.6), v2(2, 2), v2(-1, 3)}) {
    CHECK(p2.posterior_mean(0, probe) == doctest::Approx(p1.posterior_mean(0, probe)).epsilon(1e-6));
    CHECK(p2.posterior_var(0, probe) ==
          doctest::Approx(p1.posterior_var(0, probe)).epsilon(1e-6));
  }
}

TEST_CASE("posterior matches the naive dense oracle") {
  Rng rng(3);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 5, 3);
  Eigen::VectorXd noise(5);
  for (int i = 0; i < 5; ++i) noise[i] = 0.0;
  auto post = gp.conditioned(s, noise);

  NaiveOracle oracle;
  oracle.kernels = {se(4.0, 2.0, 2.5), se(1.0, 3.0, 3.0), se(0.25, 1.5, 2.0)};
  oracle.y.resize(5);
  for (int i = 0; i < 5; ++i) {
    oracle.src.push_back(s.records()[i].source);
    oracle.xs.push_back(s.records()[i].location);
    oracle.y[i] = s.records()[i].value;
  }
  oracle.build(post.jitter());

  for (auto& probe : {v2(0, 0), v2(3.3, -1.2), v2(-2, 6)}) {
    for (int l = 0; l < 3; ++l) {
      CHECK(post.posterior_mean(l, probe) ==
            doctest::Approx(oracle.mean(l, probe)).epsilon(1e-8));
      CHECK(post.posterior_cov(l, probe, 0, v2(1, 1)) ==
            doctest::Approx(oracle.cov(l, probe, 0, v2(1, 1))).epsilon(1e-8));
    }
  }
}

TEST_CASE("far-field point is unaffected by conditioning") {
  std::vector<MeanSpec> means(1);
  std::vector<KernelSpec> kernels{se(2.0, 0.1, 0.1)};  // tiny length scales
  MultiSourceGp gp(box2(), means, kernels);
  SampleSet s;
  s.add(0, v2(-3.9, -2.9), 1.0);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(1));
  Eigen::VectorXd far = v2(6.9, 7.9);
  CHECK(std::abs(post.posterior_mean(0, far) - gp.prior_mean(0, far)) < 1e-10);
  CHECK(std::abs(post.posterior_var(0, far) - 2.0) < 1e-10);
}

TEST_CASE("gram matrices admit cholesky with bounded jitter") {
  Rng rng(17);
  auto gp = three_source_gp();
  for (int t = 0; t < 20; ++t) {
    SampleSet s = random_samples(rng, 12, 3);
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(12);
    auto post = gp.conditioned(s, noise);
    // mean diagonal is at least the central signal variance
    CHECK(post.jitter() <= 1e-6 * (4.0 + 1.0));
  }
}

TEST_CASE("posterior is invariant under sample permutation") {
  Rng rng(5);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 8, 3);
  SampleSet rev;
  for (int i = 7; i >= 0; --i)
    rev.add(s.records()[i].source, s.records()[i].location, s.records()[i].value);
  auto a = gp.conditioned(s, Eigen::VectorXd::Zero(8));
  auto b = gp.conditioned(rev, Eigen::VectorXd::Zero(8));
  for (auto& probe : {v2(0, 0), v2(2, 5), v2(-3, 1)}) {
    CHECK(a.posterior_mean(0, probe) == doctest::Approx(b.posterior_mean(0, probe)).epsilon(1e-10));
    CHECK(a.posterior_var(0, probe) ==
          doctest::Approx(b.posterior_var(0, probe)).epsilon(1e-10));
  }
}

TEST_CASE("ill-conditioned model error names a sample pair") {
  // Two exactly duplicated noise-free points with different values cannot be
  // reconciled; force failure with a third copy and huge signal variance so
  // jitter cannot rescue the factorization.
  std::vector<MeanSpec> means(1);
  std::vector<KernelSpec> kernels{se(1e16, 2.0, 2.0)};
  MultiSourceGp gp(box2(), means, kernels);
  SampleSet s;
  for (int i = 0; i < 6; ++i) s.add(0, v2(0.5, 0.5), 1.0);
  try {
    auto post = gp.conditioned(s, Eigen::VectorXd::Zero(6));
    // Jitter may still succeed on some platforms; accept either outcome but
    // require a usable posterior in that case.
    CHECK(std::isfinite(post.posterior_mean(0, v2(0.5, 0.5))));
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("sample pair") != std::string::npos);
  }
}

TEST_CASE("lookahead variance reduces to the posterior variance at the target") {
  Rng rng(9);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 6, 3);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(6));
  Eigen::VectorXd x = v2(1.5, 2.5);
  auto la = post.lookahead_mean_variance(x, 0, x, 0.0);
  CHECK(la.degenerate == false);
  CHECK(la.variance == doctest::Approx(post.posterior_var(0, x)).epsilon(1e-9));

  auto la_noisy = post.lookahead_mean_variance(x, 2, v2(0, 0), 1e12);
  CHECK(la_noisy.variance <= 1e-10);
}

TEST_CASE("lookahead variance matches a monte-carlo recondition oracle") {
  Rng rng(13);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 6, 3);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(6));

  Eigen::VectorXd xq = v2(2.0, 3.0);   // fantasy sample location
  Eigen::VectorXd xp = v2(0.5, 1.0);   // probe
  const int l = 2;
  const double noise = 0.05;

  const double mu_q = post.posterior_mean(l, xq);
  const double var_q = post.posterior_var(l, xq) + noise;
  const double base = post.posterior_mean(0, xp);

  const int draws = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    double y = mu_q + std::sqrt(var_q) * rng.normal();
    auto ext = post.extended({l, xq, y}, noise);
    double m = ext.posterior_mean(0, xp);
    sum += m - base;
    sq += (m - base) * (m - base);
  }
  double mc_var = (sq - sum * sum / draws) / (draws - 1);
  double expected = post.lookahead_mean_variance(xp, l, xq, noise).variance;
  // 3 standard errors of a sample variance of a normal: var * sqrt(2/(n-1)).
  double tol = 3.0 * mc_var * std::sqrt(2.0 / (draws - 1));
  CHECK(std::abs(mc_var - expected) <= tol + 1e-12);
}

TEST_CASE("fantasy variance identities") {
  Rng rng(21);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 7, 3);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(7));

  SUBCASE("uncorrelated fantasy point leaves the variance unchanged") {
    std::vector<MeanSpec> means(1);
    std::vector<KernelSpec> kernels{se(2.0, 0.05, 0.05)};
    MultiSourceGp tiny(box2(), means, kernels);
    SampleSet one;
    one.add(0, v2(-3.5, -2.5), 0.3);
    auto p = tiny.conditioned(one, Eigen::VectorXd::Zero(1));
    Eigen::VectorXd xp = v2(6, 7);
    CHECK(p.fantasy_posterior_variance(xp, 0, v2(0, 0), 0.0) ==
          doctest::Approx(p.posterior_var(0, xp)).epsilon(1e-10));
  }

  SUBCASE("observing the probe itself collapses its variance") {
    Eigen::VectorXd xp = v2(1.0, -1.0);
    CHECK(post.fantasy_posterior_variance(xp, 0, xp, 0.0) <= 1e-8);
  }

  SUBCASE("matches a full recondition with a dummy value") {
    Eigen::VectorXd xp = v2(0.0, 2.0);
    Eigen::VectorXd xq = v2(1.0, 3.0);
    for (int l : {0, 1, 2}) {
      double fantasy = post.fantasy_posterior_variance(xp, l, xq, 0.01);
      auto ext = post.extended({l, xq, 0.123}, 0.01);
      CHECK(fantasy == doctest::Approx(ext.posterior_var(0, xp)).epsilon(1e-8));
    }
  }
}

TEST_CASE("variance decomposition holds on random configurations") {
  Rng rng(29);
  auto gp = three_source_gp();
  for (int t = 0; t < 100; ++t) {
    SampleSet s = random_samples(rng, 5, 3);
    Eigen::VectorXd noise(5);
    for (int i = 0; i < 5; ++i) noise[i] = rng.uniform(0.0, 0.1);
    auto post = gp.conditioned(s, noise);
    Eigen::VectorXd xp = v2(rng.uniform(-4, 7), rng.uniform(-3, 8));
    Eigen::VectorXd xq = v2(rng.uniform(-4, 7), rng.uniform(-3, 8));
    int l = static_cast<int>(rng.next_u64() % 3);
    double lam = rng.uniform(0.0, 0.5);
    double lhs = post.posterior_var(0, xp);
    double rhs = post.fantasy_posterior_variance(xp, l, xq, lam) +
                 post.lookahead_mean_variance(xp, l, xq, lam).variance;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("extended posterior equals full reconditioning") {
  Rng rng(31);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 6, 3);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(6));

  SampleRecord extra{1, v2(0.25, 0.75), 0.9};
  auto incremental = post.extended(extra, 0.02);
  SampleSet full = s;
  full.add(extra.source, extra.location, extra.value);
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(7);
  noise[6] = 0.02;
  auto rebuilt = gp.conditioned(full, noise);

  for (auto& probe : {v2(0, 0), v2(0.25, 0.75), v2(-2, 4)}) {
    CHECK(incremental.posterior_mean(0, probe) ==
          doctest::Approx(rebuilt.posterior_mean(0, probe)).epsilon(1e-8));
    CHECK(incremental.posterior_var(0, probe) ==
          doctest::Approx(rebuilt.posterior_var(0, probe)).epsilon(1e-8));
  }
}

TEST_CASE("batched is0 field agrees with pointwise queries") {
  Rng rng(37);
  auto gp = three_source_gp();
  SampleSet s = random_samples(rng, 9, 3);
  auto post = gp.conditioned(s, Eigen::VectorXd::Zero(9));
  Eigen::MatrixXd pts(4, 2);
  pts << 0, 0, 1, 2, -3, 7, 6.5, -2.5;
  auto field = post.is0_field(pts);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd x = pts.row(i).transpose();
    CHECK(field.mean[i] == doctest::Approx(post.posterior_mean(0, x)).epsilon(1e-10));
    CHECK(field.variance[i] == doctest::Approx(post.posterior_var(0, x)).epsilon(1e-10));
  }
}
