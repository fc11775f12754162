#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clover/algorithm.hpp"
#include "clover/problems.hpp"

namespace clover {

/// Config-file or CLI usage errors; message carries file:line anchors.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure of an external information-source command.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps a shell command as an information source. Placeholders {x1}..{xd}
/// are substituted with the coordinates at 17 significant digits; the command
/// must print one real number on stdout.
InformationSource external_source(const std::string& command_template, int dim, double cost,
                                  double noise_var);

struct ExternalSourceSpec {
  std::string command;
  double cost = 1.0;
  double noise = 0.0;
};

struct ExternalProblemSpec {
  DomainBox domain{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  double level = 0.0;
  std::vector<ExternalSourceSpec> sources;
};

struct ExperimentConfig {
  std::string problem = "multimodal";  // registry name or "external"
  std::optional<ExternalProblemSpec> external;
  std::vector<int> use_sources;  // empty = all of the problem's sources

  CloverConfig clover;
  int replications = 1;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  int jobs = 0;  // replications run in parallel when > 1
  bool write_contour = false;

  long metric_mc = 20000;        // per-iteration accuracy metrics
  long final_metric_mc = 1000000;  // failure probability at stop
  double checkpoint_step = 1.0;  // summary checkpoint spacing (cost units)
};

ExperimentConfig parse_experiment_config(const std::string& path);

/// One trace row per evaluation record; spec'd column set.
struct TraceRow {
  int iteration = 0;
  int source = 0;
  Eigen::VectorXd location;
  double value = 0.0;
  double step_cost = 0.0;
  double cum_cost = 0.0;
  double entropy = 0.0;
  double acquisition = std::numeric_limits<double>::quiet_NaN();
  bool refreshed = false;
};

std::vector<TraceRow> trace_rows(const std::vector<IterationTrace>& trace);
std::string trace_csv(const std::vector<TraceRow>& rows, int dim);
std::vector<TraceRow> parse_trace_csv(const std::string& path);

/// Per-iteration metric series of one replication.
struct MetricSeries {
  std::vector<std::string> names;          // e.g. entropy, area_rel_err
  std::vector<double> cost;                // cumulative cost per iteration
  std::vector<std::vector<double>> values; // values[i] aligns with names
};

/// Percentile summary over replications at common cost checkpoints
/// (step interpolation, last value carried forward; linear-interpolation
/// percentile convention).
struct SummaryTable {
  std::vector<double> checkpoints;
  std::vector<std::string> metrics;
  // indexed [metric][checkpoint] -> {p25, median, p75}
  std::vector<std::vector<std::array<double, 3>>> quantiles;

  std::string csv() const;
};

SummaryTable summarize(const std::vector<MetricSeries>& series, double checkpoint_step);

/// Summarize previously written trace CSVs; when a metrics CSV written by
/// run_experiment sits next to a trace file, its columns are included.
SummaryTable summarize_files(const std::vector<std::string>& trace_paths, double checkpoint_step);

struct ReplicationOutcome {
  int replication = 0;
  bool ok = false;
  std::string error;
  StopReason stop = StopReason::Error;
  long evaluations = 0;
  double total_cost = 0.0;
  double entropy = 0.0;
  std::map<std::string, double> final_metrics;
};

struct ExperimentResult {
  bool ok = false;
  std::vector<ReplicationOutcome> outcomes;
  SummaryTable summary;
};

/// Runs all replications (optionally in parallel), writes one trace CSV and
/// one metrics CSV per replication plus summary.csv and final.csv into the
/// output directory. Replication i uses seed master_seed + i.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace clover
