#include "clover/entropy.hpp"

#include <cmath>
#include <stdexcept>

#include "clover/math.hpp"

namespace clover {

EventProbs event_probs(double mu, double sigma, double eps) {
  if (!(sigma > 0.0)) throw std::invalid_argument("event_probs: sigma must be positive");
  if (eps < 0.0) throw std::invalid_argument("event_probs: eps must be nonnegative");
  EventProbs p;
  p.below = normal_cdf((-mu - eps) / sigma);
  p.above = normal_cdf((mu - eps) / sigma);
  p.center = std::max(0.0, 1.0 - p.below - p.above);
  return p;
}

double pointwise_entropy(const EventProbs& p) {
  return -(xlnx(p.below) + xlnx(p.center) + xlnx(p.above));
}

IntegrationGrid IntegrationGrid::tensor_trapezoid(const DomainBox& box, int nodes_per_dim) {
  if (nodes_per_dim < 2)
    throw std::invalid_argument("tensor_trapezoid: need at least 2 nodes per dimension");
  const int d = box.dim();
  const int n1 = nodes_per_dim;
  long total = 1;
  for (int k = 0; k < d; ++k) total *= n1;

  IntegrationGrid g;
  g.nodes.resize(total, d);
  g.weights.resize(total);
  std::vector<long> index(d, 0);
  for (long i = 0; i < total; ++i) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      double h = (box.upper()[k] - box.lower()[k]) / (n1 - 1);
      g.nodes(i, k) = box.lower()[k] + index[k] * h;
      double wk = h;
      if (index[k] == 0 || index[k] == n1 - 1) wk *= 0.5;
      w *= wk;
    }
    g.weights[i] = w;
    for (int k = d - 1; k >= 0; --k) {
      if (++index[k] < n1) break;
      index[k] = 0;
    }
  }
  return g;
}

IntegrationGrid IntegrationGrid::monte_carlo(const DomainBox& box, int count,
                                             std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("monte_carlo: need at least one node");
  IntegrationGrid g;
  const int d = box.dim();
  g.nodes.resize(count, d);
  g.weights = Eigen::VectorXd::Constant(count, box.volume() / count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < d; ++k) g.nodes(i, k) = rng.uniform(box.lower()[k], box.upper()[k]);
  return g;
}

void IntegrationGrid::validate(const DomainBox& box) const {
  if (nodes.rows() == 0 || nodes.rows() != weights.size())
    throw std::invalid_argument("IntegrationGrid: node/weight size mismatch");
  for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
    if (!(weights[i] > 0.0))
      throw std::invalid_argument("IntegrationGrid: weights must be positive");
    if (!box.contains(nodes.row(i).transpose()))
      throw std::invalid_argument("IntegrationGrid: node outside domain");
  }
  if (std::abs(weights.sum() - box.volume()) > 1e-8 * box.volume())
    throw std::invalid_argument("IntegrationGrid: weights do not sum to the domain volume");
}

double contour_entropy_from_field(const MultiSourceGp::Is0Field& field,
                                  const Eigen::VectorXd& weights, double volume,
                                  const ToleranceRule& rule) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    double sd = std::sqrt(std::max(field.variance[i], 0.0));
    if (sd < kSigmaFloor) sd = kSigmaFloor;
    acc += weights[i] * pointwise_entropy(event_probs(field.mean[i], sd, rule.c_eps * sd));
  }
  return acc / volume;
}

double contour_entropy(const MultiSourceGp& state, const IntegrationGrid& grid,
                       const ToleranceRule& rule) {
  auto field = state.is0_field(grid.nodes);
  return contour_entropy_from_field(field, grid.weights, state.domain().volume(), rule);
}

}  // namespace clover
