#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clover/domain.hpp"
#include "clover/sources.hpp"

namespace clover {

/// Gaussian input distribution for failure-probability estimation.
struct GaussianInput {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// An analytic test problem restated as a zero-contour search: source 0
/// evaluates truth(x) - level exactly; the remaining sources are biased
/// variants. `area_region` and `failure_input` configure the accuracy
/// metrics where applicable.
struct AnalyticProblem {
  std::string name;
  std::string description;
  DomainBox domain{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  std::vector<InformationSource> sources;
  double level = 0.0;
  std::function<double(const Eigen::VectorXd&)> truth;  // unshifted g

  std::optional<DomainBox> area_region;       // excursion-area metric region
  std::optional<GaussianInput> failure_input; // failure-probability metric
};

/// Multimodal reliability test function on [-4,7] x [-3,8]:
///   g(x) = (x1^2 + 4)(x2 - 1)/20 - sin(5 x1 / 2) - 2.
double multimodal_g(const Eigen::VectorXd& x);

/// Biased estimates g1, g2 of the multimodal function.
double multimodal_g1(const Eigen::VectorXd& x);
double multimodal_g2(const Eigen::VectorXd& x);

/// Standard Branin-Hoo function on [-5,10] x [0,15].
double branin(const Eigen::VectorXd& x);

/// Multimodal zero-contour problem with sources (g, g1, g2) at costs
/// (1, 0.01, 0.001), noise-free.
AnalyticProblem multimodal_problem();

/// Single-source variant of the multimodal problem (the unbiased source only).
AnalyticProblem multimodal_single_problem();

/// Branin-Hoo level-80 contour problem, single source at unit cost.
AnalyticProblem branin80_problem();

const std::vector<AnalyticProblem>& problem_registry();
const AnalyticProblem& find_problem(const std::string& name);

/// Monte Carlo area of {x in region : indicator(x)}; seeded, reproducible.
double excursion_area(const std::function<bool(const Eigen::VectorXd&)>& indicator,
                      const DomainBox& region, long n_mc, std::uint64_t seed);

/// Monte Carlo estimate of P(indicator(x)) under x ~ N(mean, cov).
double failure_probability(const std::function<bool(const Eigen::VectorXd&)>& indicator,
                           const GaussianInput& input, long n_mc, std::uint64_t seed);

}  // namespace clover
