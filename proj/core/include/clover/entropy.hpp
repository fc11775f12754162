#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "clover/domain.hpp"
#include "clover/misgp.hpp"

namespace clover {

/// Probability masses of the three events "below -eps", "within the band",
/// "above +eps" for a normal observation.
struct EventProbs {
  double below = 0.0;
  double center = 0.0;
  double above = 0.0;
};

/// below = Phi((-mu - eps)/sigma), above = Phi((mu - eps)/sigma),
/// center = the remainder. Throws std::invalid_argument for sigma <= 0;
/// callers clamp sigma at their floor before calling.
EventProbs event_probs(double mu, double sigma, double eps);

/// Three-way entropy -sum p ln p, in [0, ln 3].
double pointwise_entropy(const EventProbs& p);

/// Tolerance band eps(x) = c_eps * sd(0, x). `lookahead_basis` selects which
/// standard deviation defines the band inside the one-step look-ahead
/// expectation: the fantasy posterior sd (value-independent) or the current
/// one.
struct ToleranceRule {
  double c_eps = 2.0;
  enum class Basis { FantasySigma, CurrentSigma };
  Basis lookahead_basis = Basis::FantasySigma;
};

/// Quadrature nodes and weights over the domain; weights sum to volume(D).
struct IntegrationGrid {
  Eigen::MatrixXd nodes;    // n_i x d
  Eigen::VectorXd weights;  // n_i

  /// Tensor-product trapezoidal rule, nodes_per_dim per dimension.
  static IntegrationGrid tensor_trapezoid(const DomainBox& box, int nodes_per_dim);
  /// Uniform Monte Carlo nodes with equal weights V(D)/n.
  static IntegrationGrid monte_carlo(const DomainBox& box, int count, std::uint64_t seed);

  void validate(const DomainBox& box) const;
};

/// Floor applied to the IS0 posterior standard deviation before division.
inline constexpr double kSigmaFloor = 1e-12;

/// Domain-averaged entropy of the band events over the grid; in [0, ln 3].
double contour_entropy(const MultiSourceGp& state, const IntegrationGrid& grid,
                       const ToleranceRule& rule);

/// Same quadrature applied to precomputed IS0 mean/variance fields.
double contour_entropy_from_field(const MultiSourceGp::Is0Field& field,
                                  const Eigen::VectorXd& weights, double volume,
                                  const ToleranceRule& rule);

}  // namespace clover
