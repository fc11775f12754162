#include "clover/problems.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "clover/math.hpp"

namespace clover {

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

const DomainBox& multimodal_domain() {
  static const DomainBox box(vec2(-4.0, -3.0), vec2(7.0, 8.0));
  return box;
}

const DomainBox& branin_domain() {
  static const DomainBox box(vec2(-5.0, 0.0), vec2(10.0, 15.0));
  return box;
}

// Source evaluators reject out-of-domain queries; the raw formulas stay
// callable anywhere (the failure-probability metric integrates a Gaussian
// whose tails leave the box).
InformationSource checked_source(std::function<double(const Eigen::VectorXd&)> fn,
                                 const DomainBox& box, const char* name, double cost) {
  std::string label = name;
  return make_source(
      [fn = std::move(fn), box, label](const Eigen::VectorXd& x) {
        if (!box.contains(x, 1e-9))
          throw std::invalid_argument(label + ": point outside domain");
        return fn(x);
      },
      cost);
}

}  // namespace

double multimodal_g(const Eigen::VectorXd& x) {
  return (x[0] * x[0] + 4.0) * (x[1] - 1.0) / 20.0 - std::sin(2.5 * x[0]) - 2.0;
}

double multimodal_g1(const Eigen::VectorXd& x) {
  return multimodal_g(x) + std::sin(5.0 / 22.0 * (x[0] + x[1] / 2.0) + 1.25);
}

double multimodal_g2(const Eigen::VectorXd& x) {
  return multimodal_g(x) + 3.0 * std::sin(5.0 / 11.0 * (x[0] + x[1] + 7.0));
}

double branin(const Eigen::VectorXd& x) {
  const double a = 1.0;
  const double b = 5.1 / (4.0 * M_PI * M_PI);
  const double c = 5.0 / M_PI;
  const double r = 6.0;
  const double s = 10.0;
  const double t = 1.0 / (8.0 * M_PI);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - r;
  return a * u * u + s * (1.0 - t) * std::cos(x[0]) + s;
}

AnalyticProblem multimodal_problem() {
  AnalyticProblem p;
  p.name = "multimodal";
  p.description = "multimodal reliability function, sources g/g1/g2 at costs 1/0.01/0.001";
  p.domain = multimodal_domain();
  p.level = 0.0;
  p.truth = multimodal_g;
  p.sources.push_back(checked_source(multimodal_g, p.domain, "multimodal g", 1.0));
  p.sources.push_back(checked_source(multimodal_g1, p.domain, "multimodal g1", 0.01));
  p.sources.push_back(checked_source(multimodal_g2, p.domain, "multimodal g2", 0.001));
  p.area_region = DomainBox(vec2(-4.0, 1.4), vec2(7.0, 8.0));
  GaussianInput input;
  input.mean = vec2(1.5, 2.5);
  input.cov = Eigen::MatrixXd::Identity(2, 2);
  p.failure_input = input;
  return p;
}

AnalyticProblem multimodal_single_problem() {
  AnalyticProblem p = multimodal_problem();
  p.name = "multimodal-single";
  p.description = "multimodal reliability function, unbiased source only";
  p.sources.resize(1);
  return p;
}

AnalyticProblem branin80_problem() {
  AnalyticProblem p;
  p.name = "branin80";
  p.description = "Branin-Hoo level-80 contour, single source at unit cost";
  p.domain = branin_domain();
  p.level = 80.0;
  p.truth = branin;
  p.sources.push_back(checked_source(
      [](const Eigen::VectorXd& x) { return branin(x) - 80.0; }, p.domain, "branin - 80", 1.0));
  p.area_region = p.domain;
  return p;
}

const std::vector<AnalyticProblem>& problem_registry() {
  static const std::vector<AnalyticProblem> registry = {
      multimodal_problem(), multimodal_single_problem(), branin80_problem()};
  return registry;
}

const AnalyticProblem& find_problem(const std::string& name) {
  for (const auto& p : problem_registry())
    if (p.name == name) return p;
  throw std::invalid_argument("unknown problem '" + name + "'");
}

double excursion_area(const std::function<bool(const Eigen::VectorXd&)>& indicator,
                      const DomainBox& region, long n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("excursion_area: n_mc must be >= 1");
  Rng rng(seed);
  const int d = region.dim();
  Eigen::VectorXd x(d);
  long hits = 0;
  for (long i = 0; i < n_mc; ++i) {
    for (int k = 0; k < d; ++k) x[k] = rng.uniform(region.lower()[k], region.upper()[k]);
    if (indicator(x)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_mc) * region.volume();
}

double failure_probability(const std::function<bool(const Eigen::VectorXd&)>& indicator,
                           const GaussianInput& input, long n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("failure_probability: n_mc must be >= 1");
  const int d = static_cast<int>(input.mean.size());
  Eigen::LLT<Eigen::MatrixXd> llt(input.cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("failure_probability: covariance not positive definite");
  Eigen::MatrixXd chol = llt.matrixL();
  Rng rng(seed);
  Eigen::VectorXd z(d), x(d);
  long hits = 0;
  for (long i = 0; i < n_mc; ++i) {
    for (int k = 0; k < d; ++k) z[k] = rng.normal();
    x = input.mean + chol * z;
    if (indicator(x)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_mc);
}

}  // namespace clover
