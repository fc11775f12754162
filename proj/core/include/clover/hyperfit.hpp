#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "clover/domain.hpp"
#include "clover/kernels.hpp"
#include "clover/sources.hpp"

namespace clover {

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};

/// Optional Gaussian priors for MAP estimation: on the log signal variance,
/// on each raw length scale, and on the constant mean value.
struct HyperPriors {
  std::optional<NormalPrior> log_signal_variance;
  std::vector<std::optional<NormalPrior>> length_scales;
  std::optional<NormalPrior> mean_value;
};

/// Plain single-process regression data (used for the central process and for
/// each bias process separately).
struct FitData {
  Eigen::MatrixXd x;      // n x d
  Eigen::VectorXd y;      // n
  Eigen::VectorXd noise;  // n observation variances
};

/// Gaussian log marginal likelihood of the data under (mean, kernel) with the
/// given observation noise. Returns -inf when the Gram matrix cannot be
/// factored even with jitter.
double log_marginal_likelihood(const FitData& data, const MeanSpec& mean,
                               const KernelSpec& kernel);

enum class FitMode { MLE, MAP };

struct FitOptions {
  FitMode mode = FitMode::MLE;
  KernelFamily kernel_family = KernelFamily::SquaredExponential;
  MeanFamily mean_family = MeanFamily::Zero;
  HyperPriors priors;
  int starts = 8;
  int max_iterations = 250;
  std::uint64_t seed = 0;
};

struct FitResult {
  MeanSpec mean;
  KernelSpec kernel;
  double objective = 0.0;  // log likelihood (+ log prior for MAP) at the optimum
  bool fallback = false;   // every start failed; heuristic / prior-mean values returned
};

/// Multi-start derivative-free maximization of the (penalized) marginal
/// likelihood over log-transformed positive hyperparameters. Deterministic for
/// a fixed seed and invariant to the ordering of the rows of `data`.
FitResult fit(const FitData& data, const DomainBox& box, const FitOptions& options);

struct BiasSample {
  int source = 0;
  Eigen::VectorXd location;
  double delta = 0.0;
};

/// Pairs co-located evaluations of source l with the unbiased source and
/// emits delta_l = y_l - y_0, one record per (l, location). Co-location is
/// exact coordinate equality. Result[l-1] holds the records of source l.
std::vector<std::vector<BiasSample>> pair_biases(const SampleSet& samples, int num_sources);

/// Hyperparameters are re-estimated whenever the unbiased source is evaluated.
inline bool refresh_schedule(int source) { return source == 0; }

}  // namespace clover
