#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "clover/domain.hpp"
#include "clover/kernels.hpp"
#include "clover/sources.hpp"

namespace clover {

/// Raised when a Gram matrix cannot be factored even after jitter escalation.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian-process surrogate over the index set {0..M} x D built from a
/// central process for the unbiased source plus independent bias processes
/// for every other source:
///
///   mean(l, x)            = mu_0(x) + mu_l(x)                  (no bias term for l = 0)
///   cov((l, x), (m, x'))  = k_0(x, x') + [l == m, l >= 1] k_l(x, x')
///
/// A default-constructed-from-specs instance is the prior; conditioned()
/// returns an immutable posterior snapshot. All queries on a snapshot are
/// const and safe to call concurrently.
class MultiSourceGp {
 public:
  /// means[0]/kernels[0] describe the central process, entries 1..M the biases.
  MultiSourceGp(DomainBox box, std::vector<MeanSpec> means, std::vector<KernelSpec> kernels);

  int num_sources() const { return static_cast<int>(kernels_.size()); }
  int dim() const { return box_.dim(); }
  const DomainBox& domain() const { return box_; }
  const MeanSpec& mean_spec(int idx) const { return means_.at(idx); }
  const KernelSpec& kernel_spec(int idx) const { return kernels_.at(idx); }

  double prior_mean(int source, const Eigen::VectorXd& x) const;
  double prior_cov(int l, const Eigen::VectorXd& x, int m, const Eigen::VectorXd& xp) const;

  /// Condition on noisy observations; noise[i] is the observation variance of
  /// record i. Throws ModelError when the Gram matrix stays indefinite after
  /// jitter escalation.
  MultiSourceGp conditioned(const SampleSet& samples, const Eigen::VectorXd& noise) const;
  /// Convenience overload taking the noise variances from the source list.
  MultiSourceGp conditioned(const SampleSet& samples,
                            const std::vector<InformationSource>& sources) const;

  /// Posterior snapshot extended by one record. Reuses the existing Cholesky
  /// factor (O(n^2)); falls back to a full re-factorization if the appended
  /// pivot degenerates.
  MultiSourceGp extended(const SampleRecord& record, double noise_var) const;

  bool is_conditioned() const { return data_ != nullptr; }
  int sample_count() const;
  const SampleSet& samples() const;

  double posterior_mean(int l, const Eigen::VectorXd& x) const;
  double posterior_cov(int l, const Eigen::VectorXd& x, int m, const Eigen::VectorXd& xp) const;
  /// Same-point posterior variance, clamped to zero from below.
  double posterior_var(int l, const Eigen::VectorXd& x) const;

  struct Lookahead {
    double variance = 0.0;
    bool degenerate = false;  // denominator fell below the jitter floor
  };
  /// Variance of the one-step-updated mean at (0, xp) induced by a
  /// yet-unobserved sample of source l at x with noise variance noise_var:
  ///   cov((0,xp),(l,x))^2 / (noise_var + var(l,x)).
  Lookahead lookahead_mean_variance(const Eigen::VectorXd& xp, int l, const Eigen::VectorXd& x,
                                    double noise_var) const;

  /// Posterior variance at (0, xp) after hypothetically observing (l, x);
  /// independent of the observed value.
  double fantasy_posterior_variance(const Eigen::VectorXd& xp, int l, const Eigen::VectorXd& x,
                                    double noise_var) const;

  struct Is0Field {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
  };
  /// Batched posterior mean/variance of the unbiased process at many points
  /// (one per row).
  Is0Field is0_field(const Eigen::MatrixXd& points) const;

  // --- internals used by the acquisition caches and by tests ---
  const Eigen::MatrixXd& chol() const;       // lower factor of K + Lambda + jitter I
  const Eigen::VectorXd& whitened() const;   // L^{-1} (y - mean)
  const Eigen::VectorXd& alpha() const;      // (K + Lambda)^{-1} (y - mean)
  double jitter() const;                     // absolute jitter on the Gram diagonal
  /// Prior cross-covariances between (l, p) for each row p of points and all
  /// conditioning records; result is sample_count x points.rows().
  Eigen::MatrixXd cross_with_samples(int l, const Eigen::MatrixXd& points) const;
  Eigen::VectorXd cross_with_samples(int l, const Eigen::VectorXd& x) const;

 private:
  struct Data;

  void check_source(int l) const;

  DomainBox box_;
  std::vector<MeanSpec> means_;
  std::vector<KernelSpec> kernels_;
  std::shared_ptr<const Data> data_;
};

}  // namespace clover
