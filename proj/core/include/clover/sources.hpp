#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "clover/domain.hpp"

namespace clover {

/// One information source: an evaluator plus its known query-cost and
/// noise-variance functions. Index 0 in a source list is the unbiased source.
struct InformationSource {
  std::function<double(const Eigen::VectorXd&)> evaluate;
  std::function<double(const Eigen::VectorXd&)> cost;
  std::function<double(const Eigen::VectorXd&)> noise_variance;
};

/// Source with constant query cost and constant noise variance.
InformationSource make_source(std::function<double(const Eigen::VectorXd&)> fn,
                              double query_cost, double noise_var = 0.0);

struct SampleRecord {
  int source = 0;
  Eigen::VectorXd location;
  double value = 0.0;
};

class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(std::vector<SampleRecord> records) : records_(std::move(records)) {}

  void add(int source, Eigen::VectorXd location, double value) {
    records_.push_back({source, std::move(location), value});
  }

  const std::vector<SampleRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Throws std::invalid_argument if a record references a source outside
  /// [0, num_sources) or a location outside the domain.
  void validate(const DomainBox& box, int num_sources) const;

 private:
  std::vector<SampleRecord> records_;
};

}  // namespace clover
