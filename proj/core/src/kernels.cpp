#include "clover/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace clover {

namespace {
constexpr double kSqrt5 = 2.2360679774997896964;
}

void KernelSpec::validate() const {
  if (!(signal_variance > 0.0))
    throw std::invalid_argument("KernelSpec: signal_variance must be positive");
  if (length_scales.size() == 0)
    throw std::invalid_argument("KernelSpec: empty length scales");
  for (Eigen::Index i = 0; i < length_scales.size(); ++i)
    if (!(length_scales[i] > 0.0))
      throw std::invalid_argument("KernelSpec: length scales must be positive");
}

double KernelSpec::operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  double r2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double t = (a[i] - b[i]) / length_scales[i];
    r2 += t * t;
  }
  if (family == KernelFamily::SquaredExponential)
    return signal_variance * std::exp(-0.5 * r2);
  double r = std::sqrt(r2);
  return signal_variance * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r2) * std::exp(-kSqrt5 * r);
}

Eigen::MatrixXd kernel_cross(const KernelSpec& k, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b) {
  // Scaled squared distances via the |u|^2 + |v|^2 - 2 u.v expansion.
  Eigen::MatrixXd as = a;
  Eigen::MatrixXd bs = b;
  for (Eigen::Index j = 0; j < as.cols(); ++j) {
    as.col(j) /= k.length_scales[j];
    bs.col(j) /= k.length_scales[j];
  }
  Eigen::VectorXd an = as.rowwise().squaredNorm();
  Eigen::VectorXd bn = bs.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * as * bs.transpose();
  d2.colwise() += an;
  d2.rowwise() += bn.transpose();
  d2 = d2.cwiseMax(0.0);
  if (k.family == KernelFamily::SquaredExponential)
    return k.signal_variance * (-0.5 * d2.array()).exp().matrix();
  Eigen::ArrayXXd r = d2.array().sqrt();
  return (k.signal_variance * (1.0 + kSqrt5 * r + 5.0 / 3.0 * d2.array()) *
          (-kSqrt5 * r).exp())
      .matrix();
}

}  // namespace clover
