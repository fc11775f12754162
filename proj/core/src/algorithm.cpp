#include "clover/algorithm.hpp"

#include <cmath>

#include "clover/math.hpp"

namespace clover {

void CloverConfig::validate(int dim) const {
  if (initial_design == InitialDesignType::FixedList) {
    if (fixed_initial_points.rows() < 2 || fixed_initial_points.cols() != dim)
      throw std::invalid_argument("CloverConfig: fixed initial design needs >= 2 points of the domain dimension");
  } else if (initial_points < 2) {
    throw std::invalid_argument("CloverConfig: initial design needs at least 2 points");
  }
  const bool bounded = std::isfinite(budget) ||
                       max_evaluations < std::numeric_limits<long>::max() ||
                       entropy_floor > 0.0 ||
                       acquisition_floor > -std::numeric_limits<double>::infinity();
  if (!bounded) throw std::invalid_argument("CloverConfig: no stopping rule configured");
  if (std::isfinite(budget) && !(budget > 0.0))
    throw std::invalid_argument("CloverConfig: budget must be positive");
  if (entropy_floor < 0.0)
    throw std::invalid_argument("CloverConfig: entropy floor must be nonnegative");
  if (!(c_eps > 0.0)) throw std::invalid_argument("CloverConfig: c_eps must be positive");
  if (candidate_grid < 2) throw std::invalid_argument("CloverConfig: candidate set too small");
  if (integration_grid < 2) throw std::invalid_argument("CloverConfig: integration grid too small");
  if (contour_grid < 2) throw std::invalid_argument("CloverConfig: contour grid too small");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Budget: return "budget";
    case StopReason::EntropyFloor: return "entropy_floor";
    case StopReason::AcquisitionFloor: return "acquisition_floor";
    case StopReason::MaxEvaluations: return "max_evaluations";
    case StopReason::Error: return "error";
  }
  return "unknown";
}

long RunResult::total_evaluations() const {
  long n = 0;
  for (const auto& t : trace) n += static_cast<long>(t.evals.size());
  return n;
}

namespace {

Eigen::MatrixXd latin_hypercube_points(const DomainBox& box, int count, Rng& rng) {
  const int d = box.dim();
  Eigen::MatrixXd pts(count, d);
  for (int k = 0; k < d; ++k) {
    std::vector<int> strata(count);
    for (int i = 0; i < count; ++i) strata[i] = i;
    for (int i = count - 1; i > 0; --i)
      std::swap(strata[i], strata[rng.next_u64() % (i + 1)]);
    for (int i = 0; i < count; ++i) {
      double u = (strata[i] + rng.uniform()) / count;
      pts(i, k) = box.lower()[k] + u * (box.upper()[k] - box.lower()[k]);
    }
  }
  return pts;
}

Eigen::MatrixXd design_points(const CloverConfig& config, const DomainBox& box, Rng& rng) {
  switch (config.initial_design) {
    case InitialDesignType::FixedList:
      return config.fixed_initial_points;
    case InitialDesignType::LatinHypercube:
      return latin_hypercube_points(box, config.initial_points, rng);
    case InitialDesignType::UniformRandom: {
      Eigen::MatrixXd pts(config.initial_points, box.dim());
      for (int i = 0; i < config.initial_points; ++i)
        for (int k = 0; k < box.dim(); ++k)
          pts(i, k) = rng.uniform(box.lower()[k], box.upper()[k]);
      return pts;
    }
  }
  throw std::logic_error("design_points: unknown design type");
}

// Fits the central process from the unbiased-source records and each bias
// process from the paired co-located deltas. Bias processes without enough
// pairs keep their previous specs.
void refit_hyperparameters(const SampleSet& samples,
                           const std::vector<InformationSource>& sources, const DomainBox& box,
                           const CloverConfig& config, std::vector<MeanSpec>& means,
                           std::vector<KernelSpec>& kernels) {
  const int m_plus_1 = static_cast<int>(sources.size());
  FitOptions options;
  options.mode = config.fit_mode;
  options.kernel_family = config.kernel_family;
  options.mean_family = config.mean_family;
  options.starts = config.fit_starts;
  options.seed = config.seed;

  FitData is0;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(samples.size()); ++i)
    if (samples.records()[i].source == 0) rows.push_back(i);
  is0.x.resize(rows.size(), box.dim());
  is0.y.resize(rows.size());
  is0.noise.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& rec = samples.records()[rows[r]];
    is0.x.row(r) = rec.location.transpose();
    is0.y[r] = rec.value;
    is0.noise[r] = sources[0].noise_variance(rec.location);
  }
  if (!config.priors.empty()) options.priors = config.priors[0];
  auto fit0 = fit(is0, box, options);
  means[0] = fit0.mean;
  kernels[0] = fit0.kernel;

  auto biases = pair_biases(samples, m_plus_1);
  for (int l = 1; l < m_plus_1; ++l) {
    const auto& pairs = biases[l - 1];
    if (pairs.size() < 2) continue;
    FitData data;
    data.x.resize(pairs.size(), box.dim());
    data.y.resize(pairs.size());
    data.noise.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      data.x.row(i) = pairs[i].location.transpose();
      data.y[i] = pairs[i].delta;
      // The difference of two noisy observations carries both noise terms.
      data.noise[i] = sources[l].noise_variance(pairs[i].location) +
                      sources[0].noise_variance(pairs[i].location);
    }
    FitOptions bias_options = options;
    bias_options.seed = Rng::mix(config.seed, 0xb1a5 + l);
    if (static_cast<int>(config.priors.size()) > l) bias_options.priors = config.priors[l];
    auto fitl = fit(data, box, bias_options);
    means[l] = fitl.mean;
    kernels[l] = fitl.kernel;
  }
}

}  // namespace

SampleSet initial_design(const CloverConfig& config, const DomainBox& box,
                         const std::vector<InformationSource>& sources, Rng& rng) {
  config.validate(box.dim());
  Eigen::MatrixXd pts = design_points(config, box, rng);
  SampleSet samples;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Eigen::VectorXd x = pts.row(i).transpose();
    for (std::size_t l = 0; l < sources.size(); ++l)
      samples.add(static_cast<int>(l), x, sources[l].evaluate(x));
  }
  return samples;
}

RunResult run(const CloverConfig& config, const DomainBox& box,
              const std::vector<InformationSource>& sources, const IterationObserver& observer) {
  config.validate(box.dim());
  if (sources.empty()) throw std::invalid_argument("run: need at least the unbiased source");
  const int m_plus_1 = static_cast<int>(sources.size());

  RunResult result;
  Rng rng(Rng::mix(config.seed, 0));

  double cum_cost = 0.0;
  long evaluations = 0;

  try {
    SampleSet samples = initial_design(config, box, sources, rng);
    IterationTrace init;
    init.iteration = 0;
    init.refreshed = true;
    for (const auto& rec : samples.records()) {
      double c = sources[rec.source].cost(rec.location);
      init.evals.push_back({rec.source, rec.location, rec.value, c});
      cum_cost += c;
      ++evaluations;
    }
    init.cum_cost = cum_cost;

    std::vector<MeanSpec> means(m_plus_1);
    std::vector<KernelSpec> kernels(m_plus_1);
    for (auto& k : kernels) {
      k.family = config.kernel_family;
      k.signal_variance = 1.0;
      k.length_scales = 0.2 * box.range();
    }
    for (auto& m : means) m.family = config.mean_family;
    refit_hyperparameters(samples, sources, box, config, means, kernels);

    MultiSourceGp gp =
        MultiSourceGp(box, means, kernels).conditioned(samples, sources);

    std::vector<int> allowed(m_plus_1);
    for (int l = 0; l < m_plus_1; ++l) allowed[l] = l;
    CandidateSet candidates =
        config.candidate_scheme == CandidateScheme::UniformGrid
            ? CandidateSet::uniform_grid(box, config.candidate_grid, allowed)
            : CandidateSet::latin_hypercube(box, config.candidate_grid,
                                            Rng::mix(config.seed, 0xca4d), allowed);
    IntegrationGrid grid =
        box.dim() <= 2
            ? IntegrationGrid::tensor_trapezoid(box, config.integration_grid)
            : IntegrationGrid::monte_carlo(box, config.integration_mc_nodes,
                                           Rng::mix(config.seed, 0x16e7));
    ToleranceRule rule{config.c_eps, config.lookahead_basis};

    AcquisitionEvaluator evaluator(gp, sources, candidates, grid, rule);
    init.entropy = evaluator.current_entropy();
    result.trace.push_back(init);
    if (observer) observer(result.trace.back(), gp);

    int iteration = 0;
    while (true) {
      if (cum_cost >= config.budget) {
        result.stop = StopReason::Budget;
        break;
      }
      if (result.trace.back().entropy <= config.entropy_floor) {
        result.stop = StopReason::EntropyFloor;
        break;
      }
      if (evaluations >= config.max_evaluations) {
        result.stop = StopReason::MaxEvaluations;
        break;
      }
      AcquisitionDecision decision = evaluator.select();
      if (decision.value <= config.acquisition_floor) {
        result.stop = StopReason::AcquisitionFloor;
        break;
      }

      ++iteration;
      IterationTrace row;
      row.iteration = iteration;
      row.acquisition = decision.value;

      double y = sources[decision.source].evaluate(decision.location);
      double c = sources[decision.source].cost(decision.location);
      samples.add(decision.source, decision.location, y);
      row.evals.push_back({decision.source, decision.location, y, c});
      cum_cost += c;
      ++evaluations;

      row.refreshed = refresh_schedule(decision.source);
      if (row.refreshed) {
        // Refresh the bias data by co-evaluating every other source at the
        // new location; the costs count against the budget.
        for (int l = 1; l < m_plus_1; ++l) {
          double yl = sources[l].evaluate(decision.location);
          double cl = sources[l].cost(decision.location);
          samples.add(l, decision.location, yl);
          row.evals.push_back({l, decision.location, yl, cl});
          cum_cost += cl;
          ++evaluations;
        }
        refit_hyperparameters(samples, sources, box, config, means, kernels);
        gp = MultiSourceGp(box, means, kernels).conditioned(samples, sources);
        evaluator.rebuild(gp);
      } else {
        const auto& rec = samples.records().back();
        gp = gp.extended(rec, sources[rec.source].noise_variance(rec.location));
        evaluator.extend(gp);
      }

      row.cum_cost = cum_cost;
      row.entropy = evaluator.current_entropy();
      result.trace.push_back(row);
      if (observer) observer(result.trace.back(), gp);
    }

    result.contour = extract_contour(gp, config.contour_grid);
    result.state = gp;
    result.ok = true;
  } catch (const std::exception& e) {
    result.ok = false;
    result.stop = StopReason::Error;
    result.error = e.what();
  }
  return result;
}

}  // namespace clover
