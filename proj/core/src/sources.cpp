#include "clover/sources.hpp"

#include <stdexcept>
#include <string>

namespace clover {

InformationSource make_source(std::function<double(const Eigen::VectorXd&)> fn,
                              double query_cost, double noise_var) {
  if (!(query_cost > 0.0))
    throw std::invalid_argument("make_source: query cost must be positive");
  if (noise_var < 0.0)
    throw std::invalid_argument("make_source: noise variance must be nonnegative");
  InformationSource s;
  s.evaluate = std::move(fn);
  s.cost = [query_cost](const Eigen::VectorXd&) { return query_cost; };
  s.noise_variance = [noise_var](const Eigen::VectorXd&) { return noise_var; };
  return s;
}

void SampleSet::validate(const DomainBox& box, int num_sources) const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.source < 0 || r.source >= num_sources)
      throw std::invalid_argument("SampleSet: record " + std::to_string(i) +
                                  " references invalid source " + std::to_string(r.source));
    if (!box.contains(r.location))
      throw std::invalid_argument("SampleSet: record " + std::to_string(i) +
                                  " lies outside the domain");
  }
}

}  // namespace clover
