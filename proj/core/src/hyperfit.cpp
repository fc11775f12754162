#include "clover/hyperfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "clover/math.hpp"

namespace clover {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lml_impl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& noise,
                const MeanSpec& mean, const KernelSpec& kernel) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd gram = kernel_cross(kernel, x, x);
  gram.diagonal() += noise;
  gram.diagonal().array() += 1e-10 * gram.diagonal().mean();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    gram.diagonal().array() += 1e-6 * gram.diagonal().mean();
    llt.compute(gram);
    if (llt.info() != Eigen::Success) return kNegInf;
  }
  Eigen::VectorXd resid = y;
  for (Eigen::Index i = 0; i < n; ++i) resid[i] -= mean(x.row(i).transpose());
  Eigen::VectorXd b = llt.matrixL().solve(resid);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * b.squaredNorm() - logdet - 0.5 * n * std::log(2.0 * M_PI);
}

// Parameter layout: [log sv, log ls_1 .. log ls_d, (mean value)].
struct ParamSpace {
  int dim = 0;
  bool has_mean = false;
  Eigen::VectorXd lower, upper;  // bounds in the transformed space

  int size() const { return 1 + dim + (has_mean ? 1 : 0); }

  KernelSpec kernel(const Eigen::VectorXd& p, KernelFamily family) const {
    KernelSpec k;
    k.family = family;
    k.signal_variance = std::exp(p[0]);
    k.length_scales.resize(dim);
    for (int i = 0; i < dim; ++i) k.length_scales[i] = std::exp(p[1 + i]);
    return k;
  }

  MeanSpec mean(const Eigen::VectorXd& p, MeanFamily family) const {
    MeanSpec m;
    m.family = family;
    if (family == MeanFamily::Constant && has_mean) m.value = p[1 + dim];
    return m;
  }

  bool in_bounds(const Eigen::VectorXd& p) const {
    for (int i = 0; i < size(); ++i)
      if (p[i] < lower[i] || p[i] > upper[i]) return false;
    return true;
  }
};

double log_prior(const Eigen::VectorXd& p, const ParamSpace& space, const HyperPriors& priors) {
  double acc = 0.0;
  auto add = [&acc](const std::optional<NormalPrior>& prior, double value) {
    if (!prior) return;
    double z = (value - prior->mean) / prior->sd;
    acc += -0.5 * z * z - std::log(prior->sd * kSqrt2Pi);
  };
  add(priors.log_signal_variance, p[0]);
  for (int i = 0; i < space.dim; ++i) {
    if (i < static_cast<int>(priors.length_scales.size()))
      add(priors.length_scales[i], std::exp(p[1 + i]));
  }
  if (space.has_mean) add(priors.mean_value, p[1 + space.dim]);
  return acc;
}

// Standard Nelder-Mead maximization (operates on the negated objective).
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                            const Eigen::VectorXd& start, double step, int max_iterations,
                            double* best_value) {
  const int n = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> simplex(n + 1, start);
  std::vector<double> value(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1][i] += step;
  for (int i = 0; i <= n; ++i) value[i] = objective(simplex[i]);

  auto order = [&] {
    std::vector<int> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return value[a] > value[b]; });
    std::vector<Eigen::VectorXd> s2(n + 1);
    std::vector<double> v2(n + 1);
    for (int i = 0; i <= n; ++i) {
      s2[i] = simplex[idx[i]];
      v2[i] = value[idx[i]];
    }
    simplex.swap(s2);
    value.swap(v2);
  };

  order();
  for (int it = 0; it < max_iterations; ++it) {
    if (std::isfinite(value[0]) && std::isfinite(value[n]) &&
        value[0] - value[n] < 1e-10 * (1.0 + std::abs(value[0])))
      break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= n;

    Eigen::VectorXd reflected = centroid + (centroid - simplex[n]);
    double fr = objective(reflected);
    if (fr > value[0]) {
      Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[n]);
      double fe = objective(expanded);
      if (fe > fr) {
        simplex[n] = expanded;
        value[n] = fe;
      } else {
        simplex[n] = reflected;
        value[n] = fr;
      }
    } else if (fr > value[n - 1]) {
      simplex[n] = reflected;
      value[n] = fr;
    } else {
      Eigen::VectorXd contracted = centroid + 0.5 * (simplex[n] - centroid);
      double fc = objective(contracted);
      if (fc > value[n]) {
        simplex[n] = contracted;
        value[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
          value[i] = objective(simplex[i]);
        }
      }
    }
    order();
  }
  *best_value = value[0];
  return simplex[0];
}

}  // namespace

double log_marginal_likelihood(const FitData& data, const MeanSpec& mean,
                               const KernelSpec& kernel) {
  if (data.y.size() != data.x.rows() || data.noise.size() != data.y.size())
    throw std::invalid_argument("log_marginal_likelihood: inconsistent data sizes");
  return lml_impl(data.x, data.y, data.noise, mean, kernel);
}

FitResult fit(const FitData& data, const DomainBox& box, const FitOptions& options) {
  const Eigen::Index n = data.y.size();
  const int d = box.dim();
  if (n < 2) throw std::invalid_argument("fit: need at least 2 samples");
  if (data.x.cols() != d) throw std::invalid_argument("fit: data dimension mismatch");

  // Canonical row order makes the result independent of record permutation.
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (int k = 0; k < d; ++k) {
      if (data.x(a, k) != data.x(b, k)) return data.x(a, k) < data.x(b, k);
    }
    return data.y[a] < data.y[b];
  });
  FitData sorted;
  sorted.x.resize(n, d);
  sorted.y.resize(n);
  sorted.noise.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sorted.x.row(i) = data.x.row(idx[i]);
    sorted.y[i] = data.y[idx[i]];
    sorted.noise[i] = data.noise[idx[i]];
  }

  const double mean_y = sorted.y.mean();
  const double var_y = std::max((sorted.y.array() - mean_y).square().mean(), 1e-12);
  const double sd_y = std::sqrt(var_y);
  const Eigen::VectorXd range = box.range();

  ParamSpace space;
  space.dim = d;
  space.has_mean = options.mean_family == MeanFamily::Constant;
  space.lower.resize(space.size());
  space.upper.resize(space.size());
  space.lower[0] = std::log(1e-8 * var_y);
  space.upper[0] = std::log(1e4 * var_y);
  for (int k = 0; k < d; ++k) {
    space.lower[1 + k] = std::log(1e-3 * range[k]);
    space.upper[1 + k] = std::log(10.0 * range[k]);
  }
  if (space.has_mean) {
    space.lower[1 + d] = mean_y - 10.0 * sd_y - 1.0;
    space.upper[1 + d] = mean_y + 10.0 * sd_y + 1.0;
  }

  auto objective = [&](const Eigen::VectorXd& p) -> double {
    if (!space.in_bounds(p)) return kNegInf;
    KernelSpec kernel = space.kernel(p, options.kernel_family);
    MeanSpec mean = space.mean(p, options.mean_family);
    double value = lml_impl(sorted.x, sorted.y, sorted.noise, mean, kernel);
    if (options.mode == FitMode::MAP) value += log_prior(p, space, options.priors);
    return value;
  };

  // Start 0: data-scaled heuristics (MLE) or prior means (MAP); the rest are
  // seeded log-space perturbations.
  Eigen::VectorXd base(space.size());
  base[0] = std::log(var_y);
  for (int k = 0; k < d; ++k) base[1 + k] = std::log(0.2 * range[k]);
  if (space.has_mean) base[1 + d] = mean_y;
  if (options.mode == FitMode::MAP) {
    if (options.priors.log_signal_variance) base[0] = options.priors.log_signal_variance->mean;
    for (int k = 0; k < d; ++k) {
      if (k < static_cast<int>(options.priors.length_scales.size()) &&
          options.priors.length_scales[k] && options.priors.length_scales[k]->mean > 0.0)
        base[1 + k] = std::log(options.priors.length_scales[k]->mean);
    }
    if (space.has_mean && options.priors.mean_value) base[1 + d] = options.priors.mean_value->mean;
  }
  base = base.cwiseMax(space.lower).cwiseMin(space.upper);

  Rng rng(Rng::mix(options.seed, 0x68667479756c6cULL));
  Eigen::VectorXd best_p;
  double best_value = kNegInf;
  for (int s = 0; s < std::max(1, options.starts); ++s) {
    Eigen::VectorXd start = base;
    if (s > 0) {
      for (int i = 0; i < space.size(); ++i) {
        double scale = space.has_mean && i == 1 + d ? sd_y : 1.0;
        start[i] += scale * rng.normal();
      }
      start = start.cwiseMax(space.lower).cwiseMin(space.upper);
    }
    double value = kNegInf;
    Eigen::VectorXd p = nelder_mead(objective, start, 0.5, options.max_iterations, &value);
    if (value > best_value) {
      best_value = value;
      best_p = p;
    }
  }

  FitResult result;
  if (!std::isfinite(best_value)) {
    result.fallback = true;
    result.kernel = space.kernel(base, options.kernel_family);
    result.mean = space.mean(base, options.mean_family);
    result.objective = kNegInf;
    return result;
  }
  result.kernel = space.kernel(best_p, options.kernel_family);
  result.mean = space.mean(best_p, options.mean_family);
  result.objective = best_value;
  return result;
}

std::vector<std::vector<BiasSample>> pair_biases(const SampleSet& samples, int num_sources) {
  if (num_sources < 1) throw std::invalid_argument("pair_biases: need at least one source");
  // Group record values by exact location, separately per source; duplicate
  // observations at a location are resolved to the smallest value so that the
  // result does not depend on record order.
  struct VecLess {
    bool operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
      for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return a[i] < b[i];
      return false;
    }
  };
  std::map<Eigen::VectorXd, std::vector<std::vector<double>>, VecLess> by_location;
  for (const auto& r : samples.records()) {
    auto& slot = by_location[r.location];
    if (slot.empty()) slot.resize(num_sources);
    slot[r.source].push_back(r.value);
  }
  std::vector<std::vector<BiasSample>> out(std::max(0, num_sources - 1));
  for (auto& [loc, values] : by_location) {
    if (values[0].empty()) continue;
    double y0 = *std::min_element(values[0].begin(), values[0].end());
    for (int l = 1; l < num_sources; ++l) {
      if (values[l].empty()) continue;
      double yl = *std::min_element(values[l].begin(), values[l].end());
      out[l - 1].push_back({l, loc, yl - y0});
    }
  }
  return out;
}

}  // namespace clover
