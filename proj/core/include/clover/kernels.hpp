#pragma once

#include <Eigen/Core>

namespace clover {

enum class KernelFamily { SquaredExponential, Matern52 };
enum class MeanFamily { Zero, Constant };

/// Stationary covariance kernel with per-dimension (ARD) length scales.
/// k(x, x) == signal_variance for both families.
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;

  void validate() const;

  double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

/// Dense kernel matrix between two point sets (rows are points).
Eigen::MatrixXd kernel_cross(const KernelSpec& k, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b);

struct MeanSpec {
  MeanFamily family = MeanFamily::Zero;
  double value = 0.0;

  double operator()(const Eigen::VectorXd&) const {
    return family == MeanFamily::Zero ? 0.0 : value;
  }
};

}  // namespace clover
