#pragma once

#include <Eigen/Core>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clover/acquisition.hpp"
#include "clover/contour.hpp"
#include "clover/entropy.hpp"
#include "clover/hyperfit.hpp"
#include "clover/math.hpp"
#include "clover/misgp.hpp"
#include "clover/sources.hpp"

namespace clover {

enum class InitialDesignType { LatinHypercube, UniformRandom, FixedList };
enum class CandidateScheme { UniformGrid, LatinHypercube };

struct CloverConfig {
  int initial_points = 10;
  InitialDesignType initial_design = InitialDesignType::LatinHypercube;
  Eigen::MatrixXd fixed_initial_points;  // used by FixedList

  CandidateScheme candidate_scheme = CandidateScheme::UniformGrid;
  int candidate_grid = 30;       // per dimension (grid) or point count (LHS)
  int integration_grid = 50;     // trapezoid nodes per dimension, d <= 2
  int integration_mc_nodes = 10000;  // Monte Carlo nodes, d > 2

  double c_eps = 2.0;
  ToleranceRule::Basis lookahead_basis = ToleranceRule::Basis::FantasySigma;

  // Stopping: all thresholds are active simultaneously, first hit wins.
  double budget = std::numeric_limits<double>::infinity();
  double entropy_floor = 0.0;
  double acquisition_floor = -std::numeric_limits<double>::infinity();
  long max_evaluations = std::numeric_limits<long>::max();

  std::uint64_t seed = 0;

  FitMode fit_mode = FitMode::MLE;
  MeanFamily mean_family = MeanFamily::Zero;
  KernelFamily kernel_family = KernelFamily::SquaredExponential;
  std::vector<HyperPriors> priors;  // indexed by source; missing entries mean none
  int fit_starts = 8;

  int contour_grid = 200;

  void validate(int dim) const;
};

struct EvalRecord {
  int source = 0;
  Eigen::VectorXd location;
  double value = 0.0;
  double cost = 0.0;
};

struct IterationTrace {
  int iteration = 0;              // 0 is the initial design
  std::vector<EvalRecord> evals;  // decision first, refresh co-evaluations after
  double cum_cost = 0.0;
  double entropy = 0.0;
  double acquisition = std::numeric_limits<double>::quiet_NaN();
  bool refreshed = false;
};

enum class StopReason { Budget, EntropyFloor, AcquisitionFloor, MaxEvaluations, Error };

std::string to_string(StopReason reason);

struct RunResult {
  std::vector<IterationTrace> trace;
  std::optional<ContourResult> contour;
  std::optional<MultiSourceGp> state;  // final posterior
  StopReason stop = StopReason::Error;
  bool ok = false;
  std::string error;

  double total_cost() const { return trace.empty() ? 0.0 : trace.back().cum_cost; }
  long total_evaluations() const;
};

/// Called after the initial design and after every loop iteration with the
/// trace row just produced and the posterior it refers to.
using IterationObserver = std::function<void(const IterationTrace&, const MultiSourceGp&)>;

/// Draws the initial locations and evaluates every source at each of them.
/// The returned set holds (M+1) * initial_points records.
SampleSet initial_design(const CloverConfig& config, const DomainBox& box,
                         const std::vector<InformationSource>& sources, Rng& rng);

/// Full algorithm: initial design, hyperparameter fit, budgeted loop of
/// select / evaluate / update, contour extraction. Surrogate failures mid-run
/// return ok == false with the partial trace preserved.
RunResult run(const CloverConfig& config, const DomainBox& box,
              const std::vector<InformationSource>& sources,
              const IterationObserver& observer = {});

}  // namespace clover
