#include "clover/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "clover/math.hpp"

namespace clover {

double ApproxConstants::xbar() {
  static const double v = normal_quantile(std::exp(-1.0));
  return v;
}

double ApproxConstants::c() { return -std::exp(-1.0); }

double approx_phi_ln_phi(double x) {
  return kSqrt2Pi * ApproxConstants::c() * normal_pdf(x - ApproxConstants::xbar());
}

double approx_band_ln_band(double x, double d) {
  if (d < 0.0) throw std::invalid_argument("approx_band_ln_band: d must be nonnegative");
  const double xb = ApproxConstants::xbar();
  return kSqrt2Pi * ApproxConstants::c() * (normal_pdf(x - d + xb) + normal_pdf(x + d - xb));
}

CandidateSet CandidateSet::uniform_grid(const DomainBox& box, int per_dim,
                                        std::vector<int> sources) {
  if (per_dim < 2) throw std::invalid_argument("CandidateSet: need at least 2 points per dim");
  const int d = box.dim();
  long total = 1;
  for (int k = 0; k < d; ++k) total *= per_dim;
  CandidateSet set;
  set.allowed_sources = std::move(sources);
  set.points.resize(total, d);
  std::vector<long> index(d, 0);
  for (long i = 0; i < total; ++i) {
    for (int k = 0; k < d; ++k) {
      double h = (box.upper()[k] - box.lower()[k]) / (per_dim - 1);
      set.points(i, k) = box.lower()[k] + index[k] * h;
    }
    for (int k = d - 1; k >= 0; --k) {
      if (++index[k] < per_dim) break;
      index[k] = 0;
    }
  }
  return set;
}

CandidateSet CandidateSet::latin_hypercube(const DomainBox& box, int count, std::uint64_t seed,
                                           std::vector<int> sources) {
  if (count < 1) throw std::invalid_argument("CandidateSet: need at least one point");
  CandidateSet set;
  set.allowed_sources = std::move(sources);
  set.points.resize(count, box.dim());
  Rng rng(seed);
  for (int k = 0; k < box.dim(); ++k) {
    std::vector<int> strata(count);
    for (int i = 0; i < count; ++i) strata[i] = i;
    for (int i = count - 1; i > 0; --i)
      std::swap(strata[i], strata[rng.next_u64() % (i + 1)]);
    for (int i = 0; i < count; ++i) {
      double u = (strata[i] + rng.uniform()) / count;
      set.points(i, k) = box.lower()[k] + u * (box.upper()[k] - box.lower()[k]);
    }
  }
  return set;
}

void CandidateSet::validate(const DomainBox& box, int num_sources) const {
  if (points.rows() == 0) throw std::invalid_argument("CandidateSet: empty point set");
  if (allowed_sources.empty()) throw std::invalid_argument("CandidateSet: no sources allowed");
  for (int s : allowed_sources)
    if (s < 0 || s >= num_sources)
      throw std::invalid_argument("CandidateSet: source index out of range");
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (!box.contains(points.row(i).transpose()))
      throw std::invalid_argument("CandidateSet: point outside domain");
}

namespace {

// Four-term Gaussian sum of the closed-form look-ahead entropy integrand at
// one node. `a` is mean/sd at the node, `r` the ratio of the fantasy to the
// current sd, `band` the half-width of the band in units of the current sd.
inline double lookahead_node_sum(double a, double band, double r) {
  const double t = ApproxConstants::xbar() * r;
  const double e0 = a + band + t;
  const double e1 = a + band - t;
  const double e2 = a - band + t;
  const double e3 = a - band - t;
  return std::exp(-0.5 * e0 * e0) + std::exp(-0.5 * e1 * e1) + std::exp(-0.5 * e2 * e2) +
         std::exp(-0.5 * e3 * e3);
}

inline bool decision_better(double u, int source, const Eigen::VectorXd& x, double best_u,
                            int best_source, const Eigen::VectorXd& best_x) {
  if (u != best_u) return u > best_u;
  if (source != best_source) return source < best_source;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (x[k] != best_x[k]) return x[k] < best_x[k];
  return false;
}

}  // namespace

double expected_lookahead_entropy(const MultiSourceGp& state,
                                  const std::vector<InformationSource>& sources, int l,
                                  const Eigen::VectorXd& x, const IntegrationGrid& grid,
                                  const ToleranceRule& rule) {
  auto field = state.is0_field(grid.nodes);
  const double lambda = sources.at(l).noise_variance(x);
  const double denom = lambda + state.posterior_var(l, x);

  Eigen::VectorXd cross(grid.nodes.rows());
  if (state.is_conditioned() && state.sample_count() > 0) {
    Eigen::MatrixXd a0 = state.cross_with_samples(0, grid.nodes);
    Eigen::MatrixXd w = state.chol().triangularView<Eigen::Lower>().solve(a0);
    Eigen::VectorXd v =
        state.chol().triangularView<Eigen::Lower>().solve(state.cross_with_samples(l, x));
    for (Eigen::Index i = 0; i < grid.nodes.rows(); ++i)
      cross[i] = state.prior_cov(0, grid.nodes.row(i).transpose(), l, x);
    cross -= w.transpose() * v;
  } else {
    for (Eigen::Index i = 0; i < grid.nodes.rows(); ++i)
      cross[i] = state.prior_cov(0, grid.nodes.row(i).transpose(), l, x);
  }

  const double floor2 = kSigmaFloor * kSigmaFloor;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < grid.nodes.rows(); ++i) {
    const double vn = field.variance[i];
    if (vn <= floor2) continue;  // fully resolved node
    double sbar2 = denom > 0.0 ? cross[i] * cross[i] / denom : 0.0;
    double r2 = std::clamp(1.0 - sbar2 / vn, 0.0, 1.0);
    double r = std::sqrt(r2);
    double sd = std::sqrt(vn);
    double a = field.mean[i] / sd;
    double band =
        rule.lookahead_basis == ToleranceRule::Basis::FantasySigma ? rule.c_eps * r : rule.c_eps;
    acc += grid.weights[i] * r * lookahead_node_sum(a, band, r);
  }
  return -ApproxConstants::c() * acc / state.domain().volume();
}

double acquisition_value(const MultiSourceGp& state,
                         const std::vector<InformationSource>& sources, int l,
                         const Eigen::VectorXd& x, const IntegrationGrid& grid,
                         const ToleranceRule& rule) {
  const double cost = sources.at(l).cost(x);
  if (!(cost > 0.0))
    throw std::invalid_argument("acquisition_value: query cost must be positive");
  const double current = contour_entropy(state, grid, rule);
  return (current - expected_lookahead_entropy(state, sources, l, x, grid, rule)) / cost;
}

AcquisitionDecision select_next(const MultiSourceGp& state,
                                const std::vector<InformationSource>& sources,
                                const CandidateSet& candidates, const IntegrationGrid& grid,
                                const ToleranceRule& rule) {
  AcquisitionEvaluator eval(state, sources, candidates, grid, rule);
  return eval.select();
}

AcquisitionEvaluator::AcquisitionEvaluator(const MultiSourceGp& state,
                                           const std::vector<InformationSource>& sources,
                                           CandidateSet candidates, IntegrationGrid grid,
                                           ToleranceRule rule)
    : state_(state),
      sources_(sources),
      candidates_(std::move(candidates)),
      grid_(std::move(grid)),
      rule_(rule) {
  candidates_.validate(state.domain(), state.num_sources());
  grid_.validate(state.domain());
  volume_ = state.domain().volume();

  per_source_.resize(candidates_.allowed_sources.size());
  const Eigen::Index na = candidates_.points.rows();
  for (std::size_t s = 0; s < per_source_.size(); ++s) {
    SourceCache& c = per_source_[s];
    c.source = candidates_.allowed_sources[s];
    c.noise.resize(na);
    c.cost.resize(na);
    for (Eigen::Index i = 0; i < na; ++i) {
      Eigen::VectorXd x = candidates_.points.row(i).transpose();
      c.noise[i] = sources_.at(c.source).noise_variance(x);
      c.cost[i] = sources_.at(c.source).cost(x);
      if (!(c.cost[i] > 0.0))
        throw std::invalid_argument("AcquisitionEvaluator: query cost must be positive");
    }
  }
  rebuild(state);
}

void AcquisitionEvaluator::rebuild(const MultiSourceGp& state) {
  state_ = state;
  const Eigen::Index ni = grid_.nodes.rows();
  const Eigen::Index na = candidates_.points.rows();
  const double sv0 = state_.kernel_spec(0).signal_variance;

  node_mean_.resize(ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    node_mean_[i] = state_.mean_spec(0)(grid_.nodes.row(i).transpose());

  Eigen::MatrixXd prior_cross = kernel_cross(state_.kernel_spec(0), grid_.nodes,
                                             candidates_.points);  // n_i x n_a

  if (!state_.is_conditioned() || state_.sample_count() == 0) {
    w_.resize(0, ni);
    node_var_ = Eigen::VectorXd::Constant(ni, sv0);
    for (auto& c : per_source_) {
      c.u.resize(0, na);
      double sv = sv0 + (c.source > 0 ? state_.kernel_spec(c.source).signal_variance : 0.0);
      c.var = Eigen::VectorXd::Constant(na, sv);
      c.cross = prior_cross;
    }
    recompute_entropy();
    return;
  }

  const auto& L = state_.chol();
  w_ = L.triangularView<Eigen::Lower>().solve(state_.cross_with_samples(0, grid_.nodes));
  node_mean_ += w_.transpose() * state_.whitened();
  node_var_ =
      (sv0 - w_.colwise().squaredNorm().transpose().array()).cwiseMax(0.0).matrix();

  for (auto& c : per_source_) {
    c.u = L.triangularView<Eigen::Lower>().solve(
        state_.cross_with_samples(c.source, candidates_.points));
    double sv = sv0 + (c.source > 0 ? state_.kernel_spec(c.source).signal_variance : 0.0);
    c.var = (sv - c.u.colwise().squaredNorm().transpose().array()).cwiseMax(0.0).matrix();
    c.cross = prior_cross - w_.transpose() * c.u;
  }
  recompute_entropy();
}

void AcquisitionEvaluator::extend(const MultiSourceGp& state) {
  const int n_old = static_cast<int>(w_.rows());
  const int n_new = state.sample_count();
  if (n_new < n_old) throw std::logic_error("AcquisitionEvaluator: state shrank");
  if (state.chol().rows() != n_new || n_old == 0) {
    rebuild(state);
    return;
  }

  const Eigen::Index ni = grid_.nodes.rows();
  const Eigen::Index na = candidates_.points.rows();
  w_.conservativeResize(n_new, Eigen::NoChange);
  for (auto& c : per_source_) c.u.conservativeResize(n_new, Eigen::NoChange);

  for (int n = n_old; n < n_new; ++n) {
    const auto& L = state.chol();
    const SampleRecord& rec = state.samples().records()[n];
    const double lnn = L(n, n);
    const auto l2 = L.row(n).head(n);

    // Node cross-covariances against the new record never pick up a bias term
    // (the node index is source 0).
    Eigen::MatrixXd a_new = kernel_cross(state.kernel_spec(0),
                                         Eigen::MatrixXd(rec.location.transpose()), grid_.nodes);
    Eigen::RowVectorXd w_new = (a_new.row(0) - l2 * w_.topRows(n)) / lnn;
    w_.row(n) = w_new;
    const double beta_n = state.whitened()[n];
    node_mean_ += w_new.transpose() * beta_n;
    node_var_ = (node_var_.array() - w_new.transpose().array().square()).cwiseMax(0.0).matrix();

    for (auto& c : per_source_) {
      Eigen::MatrixXd b_new =
          kernel_cross(state.kernel_spec(0), Eigen::MatrixXd(rec.location.transpose()),
                       candidates_.points);
      if (c.source > 0 && c.source == rec.source) {
        b_new += kernel_cross(state.kernel_spec(c.source),
                              Eigen::MatrixXd(rec.location.transpose()), candidates_.points);
      }
      Eigen::RowVectorXd u_new = (b_new.row(0) - l2 * c.u.topRows(n)) / lnn;
      c.u.row(n) = u_new;
      c.var = (c.var.array() - u_new.transpose().array().square()).cwiseMax(0.0).matrix();
      c.cross.noalias() -= w_new.transpose() * u_new;
    }
  }
  state_ = state;
  recompute_entropy();
}

void AcquisitionEvaluator::recompute_entropy() {
  MultiSourceGp::Is0Field field;
  field.mean = node_mean_;
  field.variance = node_var_;
  entropy_ = contour_entropy_from_field(field, grid_.weights, volume_, rule_);

  const double floor2 = kSigmaFloor * kSigmaFloor;
  node_ratio_ = node_mean_.array() / node_var_.array().max(floor2).sqrt();
  // Masked weights zero out fully resolved nodes in the look-ahead quadrature.
  node_wts_ = (node_var_.array() > floor2)
                  .select(grid_.weights.array(), Eigen::ArrayXd::Zero(grid_.weights.size()));
  node_var_inv_ = (node_var_.array() > floor2)
                      .select(node_var_.array().max(floor2).inverse(),
                              Eigen::ArrayXd::Zero(node_var_.size()));
}

double AcquisitionEvaluator::current_entropy() const { return entropy_; }

double AcquisitionEvaluator::candidate_expected_entropy(int source_pos, Eigen::Index c) const {
  const SourceCache& sc = per_source_[source_pos];
  const double denom = sc.noise[c] + sc.var[c];
  const double xb = ApproxConstants::xbar();

  Eigen::ArrayXd sbar2 = denom > 0.0 ? (sc.cross.col(c).array().square() / denom).eval()
                                     : Eigen::ArrayXd::Zero(node_var_.size()).eval();
  Eigen::ArrayXd r = (1.0 - sbar2 * node_var_inv_).max(0.0).min(1.0).sqrt();
  Eigen::ArrayXd band = rule_.lookahead_basis == ToleranceRule::Basis::FantasySigma
                            ? (rule_.c_eps * r).eval()
                            : Eigen::ArrayXd::Constant(r.size(), rule_.c_eps).eval();
  Eigen::ArrayXd t = xb * r;
  Eigen::ArrayXd sum = (-0.5 * (node_ratio_ + band + t).square()).exp() +
                       (-0.5 * (node_ratio_ + band - t).square()).exp() +
                       (-0.5 * (node_ratio_ - band + t).square()).exp() +
                       (-0.5 * (node_ratio_ - band - t).square()).exp();
  double acc = (node_wts_ * r * sum).sum();
  return -ApproxConstants::c() * acc / volume_;
}

AcquisitionDecision AcquisitionEvaluator::select() const {
  AcquisitionDecision best;
  bool have = false;
  long nonfinite = 0;
  for (std::size_t s = 0; s < per_source_.size(); ++s) {
    const SourceCache& sc = per_source_[s];
    for (Eigen::Index c = 0; c < candidates_.points.rows(); ++c) {
      double expected = candidate_expected_entropy(static_cast<int>(s), c);
      double u = (entropy_ - expected) / sc.cost[c];
      if (!std::isfinite(u)) {
        ++nonfinite;
        continue;
      }
      Eigen::VectorXd x = candidates_.points.row(c).transpose();
      if (!have || decision_better(u, sc.source, x, best.value, best.source, best.location)) {
        have = true;
        best.source = sc.source;
        best.location = x;
        best.value = u;
        best.expected_entropy = expected;
        best.current_entropy = entropy_;
        best.candidate_index = c;
      }
    }
  }
  if (!have) {
    std::ostringstream msg;
    msg << "select: no finite acquisition value over "
        << per_source_.size() * candidates_.points.rows() << " candidates (" << nonfinite
        << " non-finite); current entropy " << entropy_;
    throw NumericalFailure(msg.str());
  }
  return best;
}

}  // namespace clover
