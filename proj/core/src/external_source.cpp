#include <cstdio>
#include <cstring>
#include <memory>

#include "clover/experiment.hpp"
#include "csv_io.hpp"

namespace clover {

namespace {

std::string substitute(const std::string& tmpl, const Eigen::VectorXd& x) {
  std::string out = tmpl;
  for (int k = 0; k < x.size(); ++k) {
    std::string key = "{x" + std::to_string(k + 1) + "}";
    std::string value = csv::format(x[k]);
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return out;
}

}  // namespace

InformationSource external_source(const std::string& command_template, int dim, double cost,
                                  double noise_var) {
  if (command_template.empty())
    throw std::invalid_argument("external_source: empty command template");
  auto evaluator = [command_template, dim](const Eigen::VectorXd& x) -> double {
    if (x.size() != dim) throw EvaluationError("external source: dimension mismatch");
    std::string cmd = substitute(command_template, x);
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw EvaluationError("external source: cannot spawn '" + cmd + "'");
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
    int status = pclose(pipe);
    if (status != 0)
      throw EvaluationError("external source: '" + cmd + "' exited with status " +
                            std::to_string(status));
    // Take the last whitespace-separated token as the value.
    std::size_t end = output.find_last_not_of(" \t\r\n");
    if (end == std::string::npos)
      throw EvaluationError("external source: '" + cmd + "' produced no output");
    std::size_t begin = output.find_last_of(" \t\r\n", end);
    std::string token = output.substr(begin == std::string::npos ? 0 : begin + 1,
                                      end - (begin == std::string::npos ? 0 : begin + 1) + 1);
    try {
      return csv::parse_double(token, "external source output");
    } catch (const std::exception& e) {
      throw EvaluationError(e.what());
    }
  };
  return make_source(evaluator, cost, noise_var);
}

}  // namespace clover
