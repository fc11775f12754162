#pragma once

#include <Eigen/Core>
#include <stdexcept>

namespace clover {

/// Compact rectangular input domain.
class DomainBox {
 public:
  DomainBox(Eigen::VectorXd lower, Eigen::VectorXd upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() == 0 || lower_.size() != upper_.size())
      throw std::invalid_argument("DomainBox: bound dimensions mismatch");
    for (Eigen::Index i = 0; i < lower_.size(); ++i)
      if (!(upper_[i] > lower_[i]))
        throw std::invalid_argument("DomainBox: upper must exceed lower in every dimension");
  }

  int dim() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  Eigen::VectorXd range() const { return upper_ - lower_; }

  double volume() const {
    double v = 1.0;
    for (Eigen::Index i = 0; i < lower_.size(); ++i) v *= upper_[i] - lower_[i];
    return v;
  }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const {
    if (x.size() != lower_.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double span = upper_[i] - lower_[i];
      if (x[i] < lower_[i] - tol * span || x[i] > upper_[i] + tol * span) return false;
    }
    return true;
  }

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

}  // namespace clover
