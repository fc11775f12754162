#include "clover/misgp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace clover {

struct MultiSourceGp::Data {
  SampleSet samples;
  Eigen::VectorXi source;
  Eigen::MatrixXd X;      // n x d
  Eigen::VectorXd y;
  Eigen::VectorXd noise;
  Eigen::MatrixXd L;      // lower Cholesky factor of K + Lambda + jitter I
  Eigen::VectorXd beta;   // L^{-1} (y - m)
  Eigen::VectorXd alpha;  // L^{-T} beta
  double jitter = 0.0;
};

MultiSourceGp::MultiSourceGp(DomainBox box, std::vector<MeanSpec> means,
                             std::vector<KernelSpec> kernels)
    : box_(std::move(box)), means_(std::move(means)), kernels_(std::move(kernels)) {
  if (kernels_.empty() || means_.size() != kernels_.size())
    throw std::invalid_argument("MultiSourceGp: need one mean and one kernel per source");
  for (const auto& k : kernels_) {
    k.validate();
    if (k.length_scales.size() != box_.dim())
      throw std::invalid_argument("MultiSourceGp: kernel dimension mismatch");
  }
}

void MultiSourceGp::check_source(int l) const {
  if (l < 0 || l >= num_sources())
    throw std::invalid_argument("MultiSourceGp: invalid source index " + std::to_string(l));
}

double MultiSourceGp::prior_mean(int source, const Eigen::VectorXd& x) const {
  check_source(source);
  double m = means_[0](x);
  if (source > 0) m += means_[source](x);
  return m;
}

double MultiSourceGp::prior_cov(int l, const Eigen::VectorXd& x, int m,
                                const Eigen::VectorXd& xp) const {
  check_source(l);
  check_source(m);
  double c = kernels_[0](x, xp);
  if (l == m && l > 0) c += kernels_[l](x, xp);
  return c;
}

Eigen::MatrixXd MultiSourceGp::cross_with_samples(int l, const Eigen::MatrixXd& points) const {
  check_source(l);
  const Data& d = *data_;
  Eigen::MatrixXd K = kernel_cross(kernels_[0], d.X, points);
  if (l > 0) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < d.source.size(); ++i)
      if (d.source[i] == l) rows.push_back(i);
    if (!rows.empty()) {
      Eigen::MatrixXd Xl(rows.size(), d.X.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) Xl.row(r) = d.X.row(rows[r]);
      Eigen::MatrixXd Kb = kernel_cross(kernels_[l], Xl, points);
      for (std::size_t r = 0; r < rows.size(); ++r) K.row(rows[r]) += Kb.row(r);
    }
  }
  return K;
}

Eigen::VectorXd MultiSourceGp::cross_with_samples(int l, const Eigen::VectorXd& x) const {
  check_source(l);
  const Data& d = *data_;
  Eigen::VectorXd k(d.X.rows());
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    Eigen::VectorXd xi = d.X.row(i).transpose();
    k[i] = kernels_[0](xi, x);
    if (l > 0 && d.source[i] == l) k[i] += kernels_[l](xi, x);
  }
  return k;
}

namespace {

// Manual Cholesky that reports the first failing pivot, used only on the
// error path to produce an actionable message.
int failing_pivot(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) s -= a(j, k) * a(j, k);
    if (!(s > 0.0)) return static_cast<int>(j);
    double ljj = std::sqrt(s);
    a(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) t -= a(i, k) * a(j, k);
      a(i, j) = t / ljj;
    }
  }
  return -1;
}

}  // namespace

MultiSourceGp MultiSourceGp::conditioned(const SampleSet& samples,
                                         const Eigen::VectorXd& noise) const {
  if (noise.size() != static_cast<Eigen::Index>(samples.size()))
    throw std::invalid_argument("conditioned: one noise variance per record required");
  samples.validate(box_, num_sources());

  MultiSourceGp out(*this);
  auto data = std::make_shared<Data>();
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  data->samples = samples;
  data->source.resize(n);
  data->X.resize(n, box_.dim());
  data->y.resize(n);
  data->noise = noise;
  for (Eigen::Index i = 0; i < n; ++i) {
    const SampleRecord& r = samples.records()[i];
    data->source[i] = r.source;
    data->X.row(i) = r.location.transpose();
    data->y[i] = r.value;
  }
  if (n == 0) {
    data->jitter = 0.0;
    out.data_ = std::move(data);
    return out;
  }

  Eigen::MatrixXd gram = kernel_cross(kernels_[0], data->X, data->X);
  for (int l = 1; l < num_sources(); ++l) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (data->source[i] == l) rows.push_back(i);
    if (rows.empty()) continue;
    Eigen::MatrixXd Xl(rows.size(), data->X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) Xl.row(r) = data->X.row(rows[r]);
    Eigen::MatrixXd Kb = kernel_cross(kernels_[l], Xl, Xl);
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < rows.size(); ++b) gram(rows[a], rows[b]) += Kb(a, b);
  }
  gram.diagonal() += noise;

  const double mean_diag = gram.diagonal().mean();
  double rel = 1e-10;
  Eigen::LLT<Eigen::MatrixXd> llt;
  while (true) {
    Eigen::MatrixXd regularized = gram;
    regularized.diagonal().array() += rel * mean_diag;
    llt.compute(regularized);
    if (llt.info() == Eigen::Success) {
      data->jitter = rel * mean_diag;
      data->L = llt.matrixL();
      break;
    }
    if (rel >= 1e-4) {
      Eigen::MatrixXd reg = gram;
      reg.diagonal().array() += rel * mean_diag;
      int p = failing_pivot(reg);
      int q = 0;
      double best = -1.0;
      for (int j = 0; j < p; ++j) {
        double corr = std::abs(gram(p, j)) / std::sqrt(gram(p, p) * gram(j, j));
        if (corr > best) {
          best = corr;
          q = j;
        }
      }
      std::ostringstream msg;
      msg << "conditioned: Gram matrix not positive definite after jitter escalation; "
          << "offending sample pair (" << q << ", " << p << ")";
      throw ModelError(msg.str());
    }
    rel *= 10.0;
  }

  Eigen::VectorXd resid(n);
  for (Eigen::Index i = 0; i < n; ++i)
    resid[i] = data->y[i] - prior_mean(data->source[i], data->X.row(i).transpose());
  data->beta = data->L.triangularView<Eigen::Lower>().solve(resid);
  data->alpha = data->L.transpose().triangularView<Eigen::Upper>().solve(data->beta);
  out.data_ = std::move(data);
  return out;
}

MultiSourceGp MultiSourceGp::conditioned(const SampleSet& samples,
                                         const std::vector<InformationSource>& sources) const {
  Eigen::VectorXd noise(samples.size());
  for (Eigen::Index i = 0; i < noise.size(); ++i) {
    const SampleRecord& r = samples.records()[i];
    noise[i] = sources.at(r.source).noise_variance(r.location);
  }
  return conditioned(samples, noise);
}

MultiSourceGp MultiSourceGp::extended(const SampleRecord& record, double noise_var) const {
  if (!is_conditioned() || sample_count() == 0) {
    SampleSet s = is_conditioned() ? data_->samples : SampleSet{};
    s.add(record.source, record.location, record.value);
    Eigen::VectorXd noise(1);
    noise[0] = noise_var;
    return conditioned(s, noise);
  }
  const Data& d = *data_;
  const Eigen::Index n = d.X.rows();

  Eigen::VectorXd k = cross_with_samples(record.source, record.location);
  double diag =
      prior_cov(record.source, record.location, record.source, record.location) + noise_var +
      d.jitter;
  Eigen::VectorXd l2 = d.L.triangularView<Eigen::Lower>().solve(k);
  double pivot = diag - l2.squaredNorm();
  if (!(pivot > 1e-12 * diag)) {
    // Appended pivot degenerate at the current jitter level; re-factor from
    // scratch so the escalation policy can kick in.
    SampleSet s = d.samples;
    s.add(record.source, record.location, record.value);
    Eigen::VectorXd noise(n + 1);
    noise.head(n) = d.noise;
    noise[n] = noise_var;
    return conditioned(s, noise);
  }

  MultiSourceGp out(*this);
  auto nd = std::make_shared<Data>();
  nd->samples = d.samples;
  nd->samples.add(record.source, record.location, record.value);
  nd->source.resize(n + 1);
  nd->source.head(n) = d.source;
  nd->source[n] = record.source;
  nd->X.resize(n + 1, d.X.cols());
  nd->X.topRows(n) = d.X;
  nd->X.row(n) = record.location.transpose();
  nd->y.resize(n + 1);
  nd->y.head(n) = d.y;
  nd->y[n] = record.value;
  nd->noise.resize(n + 1);
  nd->noise.head(n) = d.noise;
  nd->noise[n] = noise_var;
  nd->jitter = d.jitter;

  nd->L = Eigen::MatrixXd::Zero(n + 1, n + 1);
  nd->L.topLeftCorner(n, n) = d.L;
  nd->L.row(n).head(n) = l2.transpose();
  nd->L(n, n) = std::sqrt(pivot);

  double resid = record.value - prior_mean(record.source, record.location);
  nd->beta.resize(n + 1);
  nd->beta.head(n) = d.beta;
  nd->beta[n] = (resid - l2.dot(d.beta)) / nd->L(n, n);
  nd->alpha = nd->L.transpose().triangularView<Eigen::Upper>().solve(nd->beta);
  out.data_ = std::move(nd);
  return out;
}

int MultiSourceGp::sample_count() const {
  return data_ ? static_cast<int>(data_->X.rows()) : 0;
}

const SampleSet& MultiSourceGp::samples() const {
  if (!data_) throw std::logic_error("MultiSourceGp: not conditioned");
  return data_->samples;
}

double MultiSourceGp::posterior_mean(int l, const Eigen::VectorXd& x) const {
  double m = prior_mean(l, x);
  if (!data_ || data_->X.rows() == 0) return m;
  return m + cross_with_samples(l, x).dot(data_->alpha);
}

double MultiSourceGp::posterior_cov(int l, const Eigen::VectorXd& x, int m,
                                    const Eigen::VectorXd& xp) const {
  double prior = prior_cov(l, x, m, xp);
  if (!data_ || data_->X.rows() == 0) return prior;
  Eigen::VectorXd v1 = data_->L.triangularView<Eigen::Lower>().solve(cross_with_samples(l, x));
  Eigen::VectorXd v2 = data_->L.triangularView<Eigen::Lower>().solve(cross_with_samples(m, xp));
  return prior - v1.dot(v2);
}

double MultiSourceGp::posterior_var(int l, const Eigen::VectorXd& x) const {
  double prior = prior_cov(l, x, l, x);
  if (!data_ || data_->X.rows() == 0) return prior;
  Eigen::VectorXd v = data_->L.triangularView<Eigen::Lower>().solve(cross_with_samples(l, x));
  return std::max(0.0, prior - v.squaredNorm());
}

MultiSourceGp::Lookahead MultiSourceGp::lookahead_mean_variance(const Eigen::VectorXd& xp, int l,
                                                                const Eigen::VectorXd& x,
                                                                double noise_var) const {
  check_source(l);
  const double num = posterior_cov(0, xp, l, x);
  const double den = noise_var + posterior_var(l, x);
  const double floor = data_ ? std::max(data_->jitter, 1e-300) : 1e-300;
  if (den < floor) return {0.0, true};
  return {num * num / den, false};
}

double MultiSourceGp::fantasy_posterior_variance(const Eigen::VectorXd& xp, int l,
                                                 const Eigen::VectorXd& x,
                                                 double noise_var) const {
  return std::max(0.0, posterior_var(0, xp) - lookahead_mean_variance(xp, l, x, noise_var).variance);
}

MultiSourceGp::Is0Field MultiSourceGp::is0_field(const Eigen::MatrixXd& points) const {
  Is0Field f;
  const Eigen::Index m = points.rows();
  f.mean.resize(m);
  f.variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) f.mean[i] = means_[0](points.row(i).transpose());
  if (!data_ || data_->X.rows() == 0) {
    f.variance.setConstant(kernels_[0].signal_variance);
    return f;
  }
  Eigen::MatrixXd cross = kernel_cross(kernels_[0], data_->X, points);  // n x m
  Eigen::MatrixXd w = data_->L.triangularView<Eigen::Lower>().solve(cross);
  f.mean += w.transpose() * data_->beta;
  Eigen::VectorXd wsq = w.colwise().squaredNorm().transpose();
  f.variance = (kernels_[0].signal_variance - wsq.array()).cwiseMax(0.0).matrix();
  return f;
}

const Eigen::MatrixXd& MultiSourceGp::chol() const {
  if (!data_) throw std::logic_error("MultiSourceGp: not conditioned");
  return data_->L;
}

const Eigen::VectorXd& MultiSourceGp::whitened() const {
  if (!data_) throw std::logic_error("MultiSourceGp: not conditioned");
  return data_->beta;
}

const Eigen::VectorXd& MultiSourceGp::alpha() const {
  if (!data_) throw std::logic_error("MultiSourceGp: not conditioned");
  return data_->alpha;
}

double MultiSourceGp::jitter() const { return data_ ? data_->jitter : 0.0; }

}  // namespace clover
