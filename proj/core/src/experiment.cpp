#include "clover/experiment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "clover/math.hpp"
#include "csv_io.hpp"

namespace clover {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  std::size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

struct ConfigLine {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

[[noreturn]] void config_fail(const std::string& path, int line, const std::string& what) {
  throw ConfigError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<ConfigLine> read_config_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<ConfigLine> lines;
  std::string section;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_fail(path, number, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) config_fail(path, number, "expected 'key = value'");
    ConfigLine cl;
    cl.section = section;
    cl.key = lower(trim(line.substr(0, eq)));
    cl.value = trim(line.substr(eq + 1));
    cl.line = number;
    if (cl.key.empty()) config_fail(path, number, "empty key");
    lines.push_back(cl);
  }
  return lines;
}

double to_double(const ConfigLine& cl, const std::string& path) {
  try {
    return csv::parse_double(cl.value, cl.key);
  } catch (const std::exception& e) {
    config_fail(path, cl.line, e.what());
  }
}

long to_long(const ConfigLine& cl, const std::string& path) {
  try {
    return csv::parse_long(cl.value, cl.key);
  } catch (const std::exception& e) {
    config_fail(path, cl.line, e.what());
  }
}

Eigen::VectorXd to_vector(const ConfigLine& cl, const std::string& path) {
  std::vector<double> vals;
  std::istringstream ss(cl.value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) config_fail(path, cl.line, "empty vector component");
    try {
      vals.push_back(csv::parse_double(tok, cl.key));
    } catch (const std::exception& e) {
      config_fail(path, cl.line, e.what());
    }
  }
  if (vals.empty()) config_fail(path, cl.line, "empty vector");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& path) {
  ExperimentConfig cfg;
  ExternalProblemSpec external;
  Eigen::VectorXd ext_lower, ext_upper;
  std::map<int, ExternalSourceSpec> ext_sources;
  std::map<int, HyperPriors> priors;
  std::map<int, Eigen::VectorXd> prior_ls_mean, prior_ls_sd;

  for (const auto& cl : read_config_lines(path)) {
    const std::string& key = cl.key;
    if (cl.section.empty()) {
      if (key == "problem") cfg.problem = cl.value;
      else if (key == "replications") cfg.replications = static_cast<int>(to_long(cl, path));
      else if (key == "seed") cfg.master_seed = static_cast<std::uint64_t>(to_long(cl, path));
      else if (key == "output") cfg.output_dir = cl.value;
      else if (key == "jobs") cfg.jobs = static_cast<int>(to_long(cl, path));
      else if (key == "write_contour") cfg.write_contour = cl.value == "true" || cl.value == "1";
      else if (key == "metric_mc") cfg.metric_mc = to_long(cl, path);
      else if (key == "final_metric_mc") cfg.final_metric_mc = to_long(cl, path);
      else if (key == "checkpoint_step") cfg.checkpoint_step = to_double(cl, path);
      else if (key == "sources") {
        if (lower(cl.value) != "all") {
          std::istringstream ss(cl.value);
          std::string tok;
          while (std::getline(ss, tok, ','))
            cfg.use_sources.push_back(static_cast<int>(csv::parse_long(trim(tok), "sources")));
        }
      } else if (key == "initial_points") {
        cfg.clover.initial_points = static_cast<int>(to_long(cl, path));
      } else if (key == "initial_design") {
        std::string v = lower(cl.value);
        if (v == "lhs") cfg.clover.initial_design = InitialDesignType::LatinHypercube;
        else if (v == "random") cfg.clover.initial_design = InitialDesignType::UniformRandom;
        else if (v == "fixed") cfg.clover.initial_design = InitialDesignType::FixedList;
        else config_fail(path, cl.line, "initial_design must be lhs, random or fixed");
      } else if (key == "fixed_points") {
        std::vector<Eigen::VectorXd> pts;
        std::istringstream ss(cl.value);
        std::string group;
        while (std::getline(ss, group, ';')) {
          ConfigLine sub = cl;
          sub.value = trim(group);
          pts.push_back(to_vector(sub, path));
        }
        if (pts.empty()) config_fail(path, cl.line, "fixed_points is empty");
        Eigen::MatrixXd m(pts.size(), pts[0].size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (pts[i].size() != pts[0].size())
            config_fail(path, cl.line, "fixed_points rows differ in dimension");
          m.row(i) = pts[i].transpose();
        }
        cfg.clover.fixed_initial_points = m;
      } else if (key == "candidate_scheme") {
        std::string v = lower(cl.value);
        if (v == "grid") cfg.clover.candidate_scheme = CandidateScheme::UniformGrid;
        else if (v == "lhs") cfg.clover.candidate_scheme = CandidateScheme::LatinHypercube;
        else config_fail(path, cl.line, "candidate_scheme must be grid or lhs");
      } else if (key == "candidate_grid") {
        cfg.clover.candidate_grid = static_cast<int>(to_long(cl, path));
      } else if (key == "integration_grid") {
        cfg.clover.integration_grid = static_cast<int>(to_long(cl, path));
      } else if (key == "integration_mc_nodes") {
        cfg.clover.integration_mc_nodes = static_cast<int>(to_long(cl, path));
      } else if (key == "c_eps") {
        cfg.clover.c_eps = to_double(cl, path);
      } else if (key == "lookahead_epsilon") {
        std::string v = lower(cl.value);
        if (v == "fantasy") cfg.clover.lookahead_basis = ToleranceRule::Basis::FantasySigma;
        else if (v == "current") cfg.clover.lookahead_basis = ToleranceRule::Basis::CurrentSigma;
        else config_fail(path, cl.line, "lookahead_epsilon must be fantasy or current");
      } else if (key == "budget") {
        cfg.clover.budget = to_double(cl, path);
      } else if (key == "entropy_floor") {
        cfg.clover.entropy_floor = to_double(cl, path);
      } else if (key == "acquisition_floor") {
        cfg.clover.acquisition_floor = to_double(cl, path);
      } else if (key == "max_evaluations") {
        cfg.clover.max_evaluations = to_long(cl, path);
      } else if (key == "fit_mode") {
        std::string v = lower(cl.value);
        if (v == "mle") cfg.clover.fit_mode = FitMode::MLE;
        else if (v == "map") cfg.clover.fit_mode = FitMode::MAP;
        else config_fail(path, cl.line, "fit_mode must be mle or map");
      } else if (key == "mean_family") {
        std::string v = lower(cl.value);
        if (v == "zero") cfg.clover.mean_family = MeanFamily::Zero;
        else if (v == "constant") cfg.clover.mean_family = MeanFamily::Constant;
        else config_fail(path, cl.line, "mean_family must be zero or constant");
      } else if (key == "kernel_family") {
        std::string v = lower(cl.value);
        if (v == "se") cfg.clover.kernel_family = KernelFamily::SquaredExponential;
        else if (v == "matern52") cfg.clover.kernel_family = KernelFamily::Matern52;
        else config_fail(path, cl.line, "kernel_family must be se or matern52");
      } else if (key == "fit_starts") {
        cfg.clover.fit_starts = static_cast<int>(to_long(cl, path));
      } else if (key == "contour_grid") {
        cfg.clover.contour_grid = static_cast<int>(to_long(cl, path));
      } else {
        config_fail(path, cl.line, "unknown key '" + key + "'");
      }
    } else if (cl.section == "external") {
      if (key == "lower") ext_lower = to_vector(cl, path);
      else if (key == "upper") ext_upper = to_vector(cl, path);
      else if (key == "level") external.level = to_double(cl, path);
      else config_fail(path, cl.line, "unknown key '" + key + "' in [external]");
    } else if (cl.section.rfind("external.source.", 0) == 0) {
      int idx = 0;
      try {
        idx = std::stoi(cl.section.substr(16));
      } catch (...) {
        config_fail(path, cl.line, "bad external source section '" + cl.section + "'");
      }
      auto& src = ext_sources[idx];
      if (key == "command") src.command = cl.value;
      else if (key == "cost") src.cost = to_double(cl, path);
      else if (key == "noise") src.noise = to_double(cl, path);
      else config_fail(path, cl.line, "unknown key '" + key + "' in [" + cl.section + "]");
    } else if (cl.section.rfind("priors.", 0) == 0) {
      int idx = 0;
      try {
        idx = std::stoi(cl.section.substr(7));
      } catch (...) {
        config_fail(path, cl.line, "bad priors section '" + cl.section + "'");
      }
      auto& p = priors[idx];
      if (key == "log_signal_variance_mean")
        p.log_signal_variance = NormalPrior{to_double(cl, path),
                                            p.log_signal_variance ? p.log_signal_variance->sd : 1.0};
      else if (key == "log_signal_variance_sd")
        p.log_signal_variance =
            NormalPrior{p.log_signal_variance ? p.log_signal_variance->mean : 0.0,
                        to_double(cl, path)};
      else if (key == "length_scale_mean") prior_ls_mean[idx] = to_vector(cl, path);
      else if (key == "length_scale_sd") prior_ls_sd[idx] = to_vector(cl, path);
      else if (key == "mean_value_mean")
        p.mean_value = NormalPrior{to_double(cl, path), p.mean_value ? p.mean_value->sd : 1.0};
      else if (key == "mean_value_sd")
        p.mean_value = NormalPrior{p.mean_value ? p.mean_value->mean : 0.0, to_double(cl, path)};
      else config_fail(path, cl.line, "unknown key '" + key + "' in [" + cl.section + "]");
    } else {
      config_fail(path, cl.line, "unknown section '" + cl.section + "'");
    }
  }

  if (cfg.problem == "external") {
    if (ext_lower.size() == 0 || ext_upper.size() == 0)
      throw ConfigError(path + ": [external] requires lower and upper bounds");
    external.domain = DomainBox(ext_lower, ext_upper);
    if (ext_sources.empty())
      throw ConfigError(path + ": external problem needs at least [external.source.0]");
    for (int i = 0; i < static_cast<int>(ext_sources.size()); ++i) {
      auto it = ext_sources.find(i);
      if (it == ext_sources.end())
        throw ConfigError(path + ": external source indices must be contiguous from 0");
      if (it->second.command.empty())
        throw ConfigError(path + ": external source " + std::to_string(i) + " lacks a command");
      external.sources.push_back(it->second);
    }
    cfg.external = external;
  }

  for (auto& [idx, p] : priors) {
    auto mean_it = prior_ls_mean.find(idx);
    auto sd_it = prior_ls_sd.find(idx);
    if (mean_it != prior_ls_mean.end()) {
      Eigen::VectorXd sd = sd_it != prior_ls_sd.end()
                               ? sd_it->second
                               : Eigen::VectorXd::Ones(mean_it->second.size());
      if (sd.size() != mean_it->second.size())
        throw ConfigError(path + ": length_scale_mean and length_scale_sd disagree in size");
      p.length_scales.resize(mean_it->second.size());
      for (Eigen::Index k = 0; k < mean_it->second.size(); ++k)
        p.length_scales[k] = NormalPrior{mean_it->second[k], sd[k]};
    }
    if (static_cast<int>(cfg.clover.priors.size()) <= idx) cfg.clover.priors.resize(idx + 1);
    cfg.clover.priors[idx] = p;
  }

  if (cfg.replications < 1) throw ConfigError(path + ": replications must be >= 1");
  return cfg;
}

std::vector<TraceRow> trace_rows(const std::vector<IterationTrace>& trace) {
  std::vector<TraceRow> rows;
  for (const auto& it : trace) {
    double cum = it.cum_cost;
    // Reconstruct the running cost within the iteration so every row carries
    // the cumulative cost after its own evaluation.
    double within = 0.0;
    for (const auto& e : it.evals) within += e.cost;
    double before = cum - within;
    for (const auto& e : it.evals) {
      TraceRow r;
      r.iteration = it.iteration;
      r.source = e.source;
      r.location = e.location;
      r.value = e.value;
      r.step_cost = e.cost;
      before += e.cost;
      r.cum_cost = before;
      r.entropy = it.entropy;
      r.acquisition = it.acquisition;
      r.refreshed = it.refreshed;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::string trace_csv(const std::vector<TraceRow>& rows, int dim) {
  std::ostringstream out;
  out << "iter,source";
  for (int k = 0; k < dim; ++k) out << ",x" << k + 1;
  out << ",y,step_cost,cum_cost,entropy,acquisition,refreshed\n";
  for (const auto& r : rows) {
    out << r.iteration << "," << r.source;
    for (int k = 0; k < dim; ++k) out << "," << csv::format(r.location[k]);
    out << "," << csv::format(r.value) << "," << csv::format(r.step_cost) << ","
        << csv::format(r.cum_cost) << "," << csv::format(r.entropy) << ","
        << csv::format(r.acquisition) << "," << (r.refreshed ? 1 : 0) << "\n";
  }
  return out.str();
}

std::vector<TraceRow> parse_trace_csv(const std::string& path) {
  csv::Table t = csv::read_table(path);
  int dim = 0;
  while (t.column("x" + std::to_string(dim + 1)) >= 0) ++dim;
  if (dim == 0) throw std::runtime_error(path + ": no coordinate columns");
  const int ci = t.column("iter"), cs = t.column("source"), cy = t.column("y"),
            cstep = t.column("step_cost"), ccum = t.column("cum_cost"),
            cent = t.column("entropy"), cacq = t.column("acquisition"),
            cref = t.column("refreshed");
  if (ci < 0 || cs < 0 || cy < 0 || cstep < 0 || ccum < 0 || cent < 0 || cacq < 0 || cref < 0)
    throw std::runtime_error(path + ": missing trace columns");
  std::vector<TraceRow> rows;
  for (const auto& fields : t.rows) {
    TraceRow r;
    r.iteration = static_cast<int>(csv::parse_long(fields[ci], path));
    r.source = static_cast<int>(csv::parse_long(fields[cs], path));
    r.location.resize(dim);
    for (int k = 0; k < dim; ++k)
      r.location[k] = csv::parse_double(fields[t.column("x" + std::to_string(k + 1))], path);
    r.value = csv::parse_double(fields[cy], path);
    r.step_cost = csv::parse_double(fields[cstep], path);
    r.cum_cost = csv::parse_double(fields[ccum], path);
    r.entropy = csv::parse_double(fields[cent], path);
    r.acquisition = csv::parse_double(fields[cacq], path);
    r.refreshed = csv::parse_long(fields[cref], path) != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

double quantile_linear(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  if (m == 1) return v[0];
  double h = (m - 1) * p;
  std::size_t i = static_cast<std::size_t>(h);
  if (i + 1 >= m) return v[m - 1];
  double frac = h - i;
  return v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace

SummaryTable summarize(const std::vector<MetricSeries>& series, double checkpoint_step) {
  if (series.empty()) throw std::invalid_argument("summarize: no input series");
  if (!(checkpoint_step > 0.0)) throw std::invalid_argument("summarize: bad checkpoint step");

  SummaryTable table;
  table.metrics = series.front().names;
  for (const auto& s : series)
    if (s.names != table.metrics)
      throw std::invalid_argument("summarize: metric sets differ between series");

  double max_cost = 0.0;
  for (const auto& s : series) {
    if (s.cost.empty()) throw std::invalid_argument("summarize: empty series");
    max_cost = std::max(max_cost, s.cost.back());
  }
  for (double c = 0.0; c <= max_cost + 1e-12; c += checkpoint_step)
    table.checkpoints.push_back(c);

  table.quantiles.assign(table.metrics.size(),
                         std::vector<std::array<double, 3>>(
                             table.checkpoints.size(),
                             {std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN()}));

  for (std::size_t m = 0; m < table.metrics.size(); ++m) {
    for (std::size_t c = 0; c < table.checkpoints.size(); ++c) {
      std::vector<double> at;
      for (const auto& s : series) {
        // Step interpolation: last row with cost <= checkpoint.
        std::size_t last = s.cost.size();
        for (std::size_t i = 0; i < s.cost.size(); ++i)
          if (s.cost[i] <= table.checkpoints[c] + 1e-12) last = i;
        if (last == s.cost.size()) continue;  // checkpoint precedes the series
        double v = s.values[last][m];
        if (std::isfinite(v)) at.push_back(v);
      }
      if (at.empty()) continue;
      table.quantiles[m][c] = {quantile_linear(at, 0.25), quantile_linear(at, 0.5),
                               quantile_linear(at, 0.75)};
    }
  }
  return table;
}

std::string SummaryTable::csv() const {
  std::ostringstream out;
  // Percentiles use linear interpolation between order statistics.
  out << "metric,checkpoint,p25,median,p75\n";
  for (std::size_t m = 0; m < metrics.size(); ++m)
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      out << metrics[m] << "," << csv::format(checkpoints[c]) << ","
          << csv::format(quantiles[m][c][0]) << "," << csv::format(quantiles[m][c][1]) << ","
          << csv::format(quantiles[m][c][2]) << "\n";
    }
  return out.str();
}

SummaryTable summarize_files(const std::vector<std::string>& trace_paths,
                             double checkpoint_step) {
  if (trace_paths.empty()) throw std::invalid_argument("summarize_files: no trace files");
  std::vector<MetricSeries> series;
  for (const auto& path : trace_paths) {
    auto rows = parse_trace_csv(path);
    if (rows.empty()) throw std::runtime_error(path + ": empty trace");
    MetricSeries s;
    s.names = {"entropy"};
    // One sample per iteration: the last row of each iteration block.
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i + 1 < rows.size() && rows[i + 1].iteration == rows[i].iteration) continue;
      s.cost.push_back(rows[i].cum_cost);
      s.values.push_back({rows[i].entropy});
    }
    // Merge the metrics file written by run_experiment when present.
    std::filesystem::path p(path);
    std::string name = p.filename().string();
    if (name.rfind("trace_", 0) == 0) {
      std::filesystem::path mp = p.parent_path() / ("metrics_" + name.substr(6));
      if (std::filesystem::exists(mp)) {
        csv::Table t = csv::read_table(mp.string());
        int ccost = t.column("cum_cost");
        if (ccost >= 0 && t.rows.size() == s.cost.size()) {
          for (std::size_t col = 0; col < t.header.size(); ++col) {
            if (t.header[col] == "iter" || t.header[col] == "cum_cost" ||
                t.header[col] == "entropy")
              continue;
            s.names.push_back(t.header[col]);
            for (std::size_t i = 0; i < t.rows.size(); ++i)
              s.values[i].push_back(csv::parse_double(t.rows[i][col], mp.string()));
          }
        }
      }
    }
    series.push_back(std::move(s));
  }
  return summarize(series, checkpoint_step);
}

namespace {

// Incrementally tracked posterior of the unbiased process at a fixed point
// set; mirrors MultiSourceGp::is0_field but reuses the factor across appends.
class FieldTracker {
 public:
  explicit FieldTracker(Eigen::MatrixXd points) : points_(std::move(points)) {}

  void rebuild(const MultiSourceGp& gp) {
    const Eigen::Index m = points_.rows();
    mean_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i)
      mean_[i] = gp.mean_spec(0)(points_.row(i).transpose());
    if (gp.sample_count() == 0) {
      w_.resize(0, m);
      return;
    }
    w_ = gp.chol().triangularView<Eigen::Lower>().solve(gp.cross_with_samples(0, points_));
    mean_ += w_.transpose() * gp.whitened();
    n_ = gp.sample_count();
  }

  void extend(const MultiSourceGp& gp) {
    const int n_new = gp.sample_count();
    if (w_.rows() == 0 || n_new < n_) {
      rebuild(gp);
      return;
    }
    w_.conservativeResize(n_new, Eigen::NoChange);
    for (int n = n_; n < n_new; ++n) {
      const auto& rec = gp.samples().records()[n];
      Eigen::MatrixXd a = kernel_cross(gp.kernel_spec(0),
                                       Eigen::MatrixXd(rec.location.transpose()), points_);
      Eigen::RowVectorXd w_new = (a.row(0) - gp.chol().row(n).head(n) * w_.topRows(n)) /
                                 gp.chol()(n, n);
      w_.row(n) = w_new;
      mean_ += w_new.transpose() * gp.whitened()[n];
    }
    n_ = n_new;
  }

  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::MatrixXd points_;
  Eigen::MatrixXd w_;
  Eigen::VectorXd mean_;
  int n_ = 0;
};

struct ProblemInstance {
  DomainBox domain{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  std::vector<InformationSource> sources;
  std::function<double(const Eigen::VectorXd&)> truth;  // shifted: zero contour
  std::optional<DomainBox> area_region;
  std::optional<GaussianInput> failure_input;
};

ProblemInstance instantiate(const ExperimentConfig& cfg) {
  ProblemInstance inst;
  if (cfg.external) {
    inst.domain = cfg.external->domain;
    for (const auto& s : cfg.external->sources)
      inst.sources.push_back(
          external_source(s.command, inst.domain.dim(), s.cost, s.noise));
    if (cfg.external->level != 0.0) {
      // Zero-contour restatement: shift every source by the level.
      double level = cfg.external->level;
      for (auto& s : inst.sources) {
        auto inner = s.evaluate;
        s.evaluate = [inner, level](const Eigen::VectorXd& x) { return inner(x) - level; };
      }
    }
  } else {
    const AnalyticProblem& p = find_problem(cfg.problem);
    inst.domain = p.domain;
    inst.sources = p.sources;
    double level = p.level;
    auto truth = p.truth;
    inst.truth = [truth, level](const Eigen::VectorXd& x) { return truth(x) - level; };
    inst.area_region = p.area_region;
    inst.failure_input = p.failure_input;
  }
  if (!cfg.use_sources.empty()) {
    std::vector<InformationSource> keep;
    for (int idx : cfg.use_sources) {
      if (idx < 0 || idx >= static_cast<int>(inst.sources.size()))
        throw ConfigError("sources: index " + std::to_string(idx) + " out of range");
      keep.push_back(inst.sources[idx]);
    }
    if (cfg.use_sources[0] != 0)
      throw ConfigError("sources: the first retained source must be 0 (unbiased)");
    inst.sources = std::move(keep);
  }
  return inst;
}

struct ReplicationData {
  ReplicationOutcome outcome;
  std::vector<TraceRow> rows;
  MetricSeries metrics;
};

ReplicationData run_replication(const ExperimentConfig& cfg, const ProblemInstance& inst,
                                int rep) {
  ReplicationData data;
  data.outcome.replication = rep;

  CloverConfig clover = cfg.clover;
  clover.seed = cfg.master_seed + static_cast<std::uint64_t>(rep);

  const bool has_truth = static_cast<bool>(inst.truth);
  const bool track_area = has_truth && inst.area_region.has_value() && cfg.metric_mc > 0;
  const bool track_pf = has_truth && inst.failure_input.has_value() && cfg.metric_mc > 0;

  // Common-random-number metric points: the truth indicator on the same
  // points as the surrogate indicator, so the error estimate converges to
  // zero with the surrogate.
  Eigen::MatrixXd area_pts;
  std::vector<bool> area_truth;
  double area_truth_value = 0.0;
  std::optional<FieldTracker> area_tracker;
  if (track_area) {
    const DomainBox& region = *inst.area_region;
    Rng rng(Rng::mix(clover.seed, 0xa7ea));
    area_pts.resize(cfg.metric_mc, region.dim());
    for (long i = 0; i < cfg.metric_mc; ++i)
      for (int k = 0; k < region.dim(); ++k)
        area_pts(i, k) = rng.uniform(region.lower()[k], region.upper()[k]);
    long hits = 0;
    area_truth.resize(cfg.metric_mc);
    for (long i = 0; i < cfg.metric_mc; ++i) {
      area_truth[i] = inst.truth(area_pts.row(i).transpose()) > 0.0;
      if (area_truth[i]) ++hits;
    }
    area_truth_value = static_cast<double>(hits) / cfg.metric_mc * region.volume();
    area_tracker.emplace(area_pts);
  }

  Eigen::MatrixXd pf_pts;
  double pf_truth_value = 0.0;
  std::optional<FieldTracker> pf_tracker;
  if (track_pf) {
    const GaussianInput& input = *inst.failure_input;
    Eigen::LLT<Eigen::MatrixXd> llt(input.cov);
    Eigen::MatrixXd chol = llt.matrixL();
    Rng rng(Rng::mix(clover.seed, 0xf0f));
    const int d = static_cast<int>(input.mean.size());
    pf_pts.resize(cfg.metric_mc, d);
    Eigen::VectorXd z(d);
    long hits = 0;
    for (long i = 0; i < cfg.metric_mc; ++i) {
      for (int k = 0; k < d; ++k) z[k] = rng.normal();
      pf_pts.row(i) = (input.mean + chol * z).transpose();
      if (inst.truth(pf_pts.row(i).transpose()) > 0.0) ++hits;
    }
    pf_truth_value = static_cast<double>(hits) / cfg.metric_mc;
    pf_tracker.emplace(pf_pts);
  }

  MetricSeries& series = data.metrics;
  series.names = {"entropy"};
  if (track_area) series.names.push_back("area_rel_err");
  if (track_pf) series.names.push_back("pf_rel_err");

  int last_n = 0;
  auto observer = [&](const IterationTrace& it, const MultiSourceGp& gp) {
    std::vector<double> row{it.entropy};
    if (track_area) {
      if (it.refreshed || gp.sample_count() < last_n) area_tracker->rebuild(gp);
      else area_tracker->extend(gp);
      const Eigen::VectorXd& mean = area_tracker->mean();
      long hits = 0;
      for (long i = 0; i < cfg.metric_mc; ++i)
        if (mean[i] > 0.0) ++hits;
      double area = static_cast<double>(hits) / cfg.metric_mc * inst.area_region->volume();
      row.push_back(std::abs(area - area_truth_value) / std::abs(area_truth_value));
    }
    if (track_pf) {
      if (it.refreshed || gp.sample_count() < last_n) pf_tracker->rebuild(gp);
      else pf_tracker->extend(gp);
      const Eigen::VectorXd& mean = pf_tracker->mean();
      long hits = 0;
      for (long i = 0; i < cfg.metric_mc; ++i)
        if (mean[i] > 0.0) ++hits;
      double pf = static_cast<double>(hits) / cfg.metric_mc;
      row.push_back(pf_truth_value > 0.0
                        ? std::abs(pf - pf_truth_value) / pf_truth_value
                        : std::abs(pf - pf_truth_value));
    }
    last_n = gp.sample_count();
    series.cost.push_back(it.cum_cost);
    series.values.push_back(std::move(row));
  };

  RunResult result = run(clover, inst.domain, inst.sources, observer);
  data.rows = trace_rows(result.trace);
  data.outcome.ok = result.ok;
  data.outcome.error = result.error;
  data.outcome.stop = result.stop;
  data.outcome.evaluations = result.total_evaluations();
  data.outcome.total_cost = result.total_cost();
  data.outcome.entropy = result.trace.empty() ? 0.0 : result.trace.back().entropy;

  if (result.ok && result.state) {
    if (track_area && !series.values.empty())
      data.outcome.final_metrics["area_rel_err"] =
          series.values.back()[1];
    if (has_truth && inst.failure_input && cfg.final_metric_mc > 0) {
      const MultiSourceGp& gp = *result.state;
      // Batched evaluation: sample, then one field query.
      const GaussianInput& input = *inst.failure_input;
      Eigen::LLT<Eigen::MatrixXd> llt(input.cov);
      Eigen::MatrixXd chol = llt.matrixL();
      Rng rng(Rng::mix(clover.seed, 0xf1a1));
      const int d = static_cast<int>(input.mean.size());
      Eigen::MatrixXd pts(cfg.final_metric_mc, d);
      Eigen::VectorXd z(d);
      long truth_hits = 0;
      for (long i = 0; i < cfg.final_metric_mc; ++i) {
        for (int k = 0; k < d; ++k) z[k] = rng.normal();
        pts.row(i) = (input.mean + chol * z).transpose();
        if (inst.truth(pts.row(i).transpose()) > 0.0) ++truth_hits;
      }
      Eigen::VectorXd mean = gp.is0_field(pts).mean;
      long hits = 0;
      for (long i = 0; i < cfg.final_metric_mc; ++i)
        if (mean[i] > 0.0) ++hits;
      double pf = static_cast<double>(hits) / cfg.final_metric_mc;
      double pf_truth = static_cast<double>(truth_hits) / cfg.final_metric_mc;
      data.outcome.final_metrics["pf"] = pf;
      data.outcome.final_metrics["pf_truth"] = pf_truth;
      data.outcome.final_metrics["pf_rel_err"] =
          pf_truth > 0.0 ? std::abs(pf - pf_truth) / pf_truth : std::abs(pf - pf_truth);
    }
  }

  if (cfg.write_contour && result.contour) {
    std::filesystem::path dir(cfg.output_dir);
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "%04d", rep);
    std::ofstream sg(dir / ("signs_" + std::string(suffix) + ".csv"));
    sg << result.contour->sign_grid_csv();
    std::ofstream pl(dir / ("contour_" + std::string(suffix) + ".csv"));
    pl << result.contour->polyline_csv();
  }
  return data;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ProblemInstance inst = instantiate(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<ReplicationData> all(cfg.replications);
  const int jobs = std::max(1, cfg.jobs);
  if (jobs <= 1) {
    for (int r = 0; r < cfg.replications; ++r) all[r] = run_replication(cfg, inst, r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      while (true) {
        int r = next.fetch_add(1);
        if (r >= cfg.replications) break;
        all[r] = run_replication(cfg, inst, r);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(jobs, cfg.replications); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentResult result;
  result.ok = true;
  const int dim = inst.domain.dim();
  std::filesystem::path dir(cfg.output_dir);

  std::ofstream final_csv(dir / "final.csv");
  final_csv << "rep,ok,stop,evaluations,total_cost,entropy";
  bool any_area = false, any_pf = false;
  for (const auto& d : all) {
    if (d.outcome.final_metrics.count("area_rel_err")) any_area = true;
    if (d.outcome.final_metrics.count("pf_rel_err")) any_pf = true;
  }
  if (any_area) final_csv << ",area_rel_err";
  if (any_pf) final_csv << ",pf,pf_truth,pf_rel_err";
  final_csv << ",error\n";

  std::vector<MetricSeries> series;
  for (int r = 0; r < cfg.replications; ++r) {
    const ReplicationData& d = all[r];
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "%04d", r);
    std::ofstream tf(dir / ("trace_" + std::string(suffix) + ".csv"));
    tf << trace_csv(d.rows, dim);

    std::ofstream mf(dir / ("metrics_" + std::string(suffix) + ".csv"));
    mf << "iter,cum_cost";
    for (const auto& n : d.metrics.names) mf << "," << n;
    mf << "\n";
    for (std::size_t i = 0; i < d.metrics.cost.size(); ++i) {
      mf << i << "," << csv::format(d.metrics.cost[i]);
      for (double v : d.metrics.values[i]) mf << "," << csv::format(v);
      mf << "\n";
    }

    final_csv << r << "," << (d.outcome.ok ? 1 : 0) << "," << to_string(d.outcome.stop) << ","
              << d.outcome.evaluations << "," << csv::format(d.outcome.total_cost) << ","
              << csv::format(d.outcome.entropy);
    auto metric_or_nan = [&](const char* key) {
      auto it = d.outcome.final_metrics.find(key);
      return it == d.outcome.final_metrics.end() ? std::numeric_limits<double>::quiet_NaN()
                                                 : it->second;
    };
    if (any_area) final_csv << "," << csv::format(metric_or_nan("area_rel_err"));
    if (any_pf)
      final_csv << "," << csv::format(metric_or_nan("pf")) << ","
                << csv::format(metric_or_nan("pf_truth")) << ","
                << csv::format(metric_or_nan("pf_rel_err"));
    final_csv << "," << d.outcome.error << "\n";

    result.outcomes.push_back(d.outcome);
    if (!d.outcome.ok) result.ok = false;
    if (d.outcome.ok) series.push_back(d.metrics);
  }

  if (!series.empty()) {
    result.summary = summarize(series, cfg.checkpoint_step);
    std::ofstream sf(dir / "summary.csv");
    sf << result.summary.csv();
  }
  return result;
}

}  // namespace clover
