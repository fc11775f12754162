#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "clover/entropy.hpp"
#include "clover/misgp.hpp"
#include "clover/sources.hpp"

namespace clover {

/// Constants of the Gaussian approximations to Phi * ln(Phi):
/// xbar = Phi^{-1}(1/e), c = Phi(xbar) ln Phi(xbar) = -1/e.
struct ApproxConstants {
  static double xbar();
  static double c();
};

/// Single-bump approximation: Phi(x) ln Phi(x) ~= sqrt(2 pi) c phi(x - xbar).
double approx_phi_ln_phi(double x);

/// Two-bump approximation of (Phi(x+d) - Phi(x-d)) ln(Phi(x+d) - Phi(x-d)),
/// d >= 0:  sqrt(2 pi) c (phi(x - d + xbar) + phi(x + d - xbar)).
double approx_band_ln_band(double x, double d);

/// Discrete search set: candidate locations and the sources allowed to be
/// queried there. Fixed at initialization.
struct CandidateSet {
  Eigen::MatrixXd points;            // n_a x d
  std::vector<int> allowed_sources;  // subset of {0..M}

  static CandidateSet uniform_grid(const DomainBox& box, int per_dim,
                                   std::vector<int> sources);
  static CandidateSet latin_hypercube(const DomainBox& box, int count, std::uint64_t seed,
                                      std::vector<int> sources);

  void validate(const DomainBox& box, int num_sources) const;
};

struct AcquisitionDecision {
  int source = 0;
  Eigen::VectorXd location;
  double value = 0.0;              // entropy reduction per unit cost
  double expected_entropy = 0.0;   // expected look-ahead contour entropy
  double current_entropy = 0.0;
  Eigen::Index candidate_index = -1;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form expectation of the look-ahead contour entropy after observing
/// source l at x, integrated over the grid.
double expected_lookahead_entropy(const MultiSourceGp& state,
                                  const std::vector<InformationSource>& sources, int l,
                                  const Eigen::VectorXd& x, const IntegrationGrid& grid,
                                  const ToleranceRule& rule);

/// (current entropy - expected look-ahead entropy) / cost_l(x). May be
/// slightly negative from the approximation error; not clamped.
double acquisition_value(const MultiSourceGp& state,
                         const std::vector<InformationSource>& sources, int l,
                         const Eigen::VectorXd& x, const IntegrationGrid& grid,
                         const ToleranceRule& rule);

/// Exhaustive argmax of the acquisition over allowed sources x candidate
/// points, evaluated source-major. Ties break to the lower source index, then
/// to the lexicographically smaller location. Throws NumericalFailure when no
/// finite value exists.
AcquisitionDecision select_next(const MultiSourceGp& state,
                                const std::vector<InformationSource>& sources,
                                const CandidateSet& candidates, const IntegrationGrid& grid,
                                const ToleranceRule& rule);

/// Batched acquisition with caches that persist across iterations of the
/// outer loop. All heavy per-iteration work reduces to rank-one updates after
/// extend(); rebuild() refreshes everything after a hyperparameter change.
/// select() is a pure read and returns the same values as the one-shot
/// operations above (up to roundoff of the blocked linear algebra).
class AcquisitionEvaluator {
 public:
  AcquisitionEvaluator(const MultiSourceGp& state, const std::vector<InformationSource>& sources,
                       CandidateSet candidates, IntegrationGrid grid, ToleranceRule rule);

  /// Refresh every cache against a newly conditioned state (hyperparameters
  /// may have changed).
  void rebuild(const MultiSourceGp& state);

  /// Absorb records appended to the previous state (same hyperparameters and
  /// Cholesky prefix).
  void extend(const MultiSourceGp& state);

  double current_entropy() const;
  AcquisitionDecision select() const;

  const CandidateSet& candidates() const { return candidates_; }
  const IntegrationGrid& grid() const { return grid_; }
  const MultiSourceGp& state() const { return state_; }

 private:
  void recompute_entropy();
  double candidate_expected_entropy(int source_pos, Eigen::Index c) const;

  MultiSourceGp state_;
  std::vector<InformationSource> sources_;
  CandidateSet candidates_;
  IntegrationGrid grid_;
  ToleranceRule rule_;
  double volume_ = 0.0;

  Eigen::MatrixXd w_;          // n x n_i whitened node cross-covariances
  Eigen::VectorXd node_mean_;  // IS0 posterior mean at nodes
  Eigen::VectorXd node_var_;   // IS0 posterior variance at nodes
  Eigen::ArrayXd node_ratio_;  // mean / sd, resolved nodes masked
  Eigen::ArrayXd node_wts_;    // quadrature weights, resolved nodes zeroed
  Eigen::ArrayXd node_var_inv_;
  double entropy_ = 0.0;

  struct SourceCache {
    int source = 0;
    Eigen::MatrixXd u;          // n x n_a whitened candidate cross-covariances
    Eigen::VectorXd var;        // posterior variance of (source, cand)
    Eigen::VectorXd noise;      // lambda_source(cand)
    Eigen::VectorXd cost;       // c_source(cand)
    Eigen::MatrixXd cross;      // n_i x n_a posterior cov((0,node),(source,cand))
  };
  std::vector<SourceCache> per_source_;
};

}  // namespace clover
