#include "clover/contour.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "csv_io.hpp"

namespace clover {

namespace {

signed char sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

// Global edge identifier within the output grid: cell corner (i, j) plus
// orientation (0 = edge to (i+1, j), 1 = edge to (i, j+1)).
struct EdgeKey {
  int i = 0, j = 0, orient = 0;
  bool operator<(const EdgeKey& o) const {
    if (i != o.i) return i < o.i;
    if (j != o.j) return j < o.j;
    return orient < o.orient;
  }
  bool operator==(const EdgeKey& o) const {
    return i == o.i && j == o.j && orient == o.orient;
  }
};

}  // namespace

ContourResult extract_contour(const MultiSourceGp& state, int nodes_per_dim) {
  if (nodes_per_dim < 2) throw std::invalid_argument("extract_contour: need >= 2 nodes per dim");
  const DomainBox& box = state.domain();
  const int d = box.dim();

  ContourResult result;
  result.axes.resize(d);
  long total = 1;
  for (int k = 0; k < d; ++k) {
    result.axes[k] = Eigen::VectorXd::LinSpaced(nodes_per_dim, box.lower()[k], box.upper()[k]);
    total *= nodes_per_dim;
  }

  Eigen::MatrixXd points(total, d);
  std::vector<long> index(d, 0);
  for (long i = 0; i < total; ++i) {
    for (int k = 0; k < d; ++k) points(i, k) = result.axes[k][index[k]];
    for (int k = d - 1; k >= 0; --k) {
      if (++index[k] < nodes_per_dim) break;
      index[k] = 0;
    }
  }
  Eigen::VectorXd mean = state.is0_field(points).mean;
  result.signs.resize(total);
  for (long i = 0; i < total; ++i) result.signs[i] = sign_of(mean[i]);

  if (d == 1) {
    for (int i = 0; i + 1 < nodes_per_dim; ++i) {
      double a = mean[i], b = mean[i + 1];
      if (sign_of(a) * sign_of(b) < 0) {
        double t = a / (a - b);
        Eigen::MatrixXd p(1, 1);
        p(0, 0) = result.axes[0][i] + t * (result.axes[0][i + 1] - result.axes[0][i]);
        result.polylines.push_back(p);
      } else if (a == 0.0 && b != 0.0) {
        Eigen::MatrixXd p(1, 1);
        p(0, 0) = result.axes[0][i];
        result.polylines.push_back(p);
      }
    }
    return result;
  }
  if (d != 2) return result;  // sign grid only beyond 2 dimensions

  const int n = nodes_per_dim;
  auto value = [&](int i, int j) { return mean[static_cast<long>(i) * n + j]; };
  auto interpolated = [&](const EdgeKey& e) {
    Eigen::Vector2d p;
    double a = value(e.i, e.j);
    double b = e.orient == 0 ? value(e.i + 1, e.j) : value(e.i, e.j + 1);
    double t = a / (a - b);
    if (e.orient == 0) {
      p[0] = result.axes[0][e.i] + t * (result.axes[0][e.i + 1] - result.axes[0][e.i]);
      p[1] = result.axes[1][e.j];
    } else {
      p[0] = result.axes[0][e.i];
      p[1] = result.axes[1][e.j] + t * (result.axes[1][e.j + 1] - result.axes[1][e.j]);
    }
    return p;
  };

  // Ambiguous saddle cells need the mean at the cell center.
  std::vector<std::pair<int, int>> ambiguous;
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      bool p00 = value(i, j) > 0.0, p10 = value(i + 1, j) > 0.0;
      bool p01 = value(i, j + 1) > 0.0, p11 = value(i + 1, j + 1) > 0.0;
      if (p00 == p11 && p10 == p01 && p00 != p10) ambiguous.emplace_back(i, j);
    }
  std::map<std::pair<int, int>, double> center_value;
  if (!ambiguous.empty()) {
    Eigen::MatrixXd centers(ambiguous.size(), 2);
    for (std::size_t a = 0; a < ambiguous.size(); ++a) {
      auto [i, j] = ambiguous[a];
      centers(a, 0) = 0.5 * (result.axes[0][i] + result.axes[0][i + 1]);
      centers(a, 1) = 0.5 * (result.axes[1][j] + result.axes[1][j + 1]);
    }
    Eigen::VectorXd cmean = state.is0_field(centers).mean;
    for (std::size_t a = 0; a < ambiguous.size(); ++a) center_value[ambiguous[a]] = cmean[a];
  }

  // Collect crossing segments cell by cell.
  std::vector<std::pair<EdgeKey, EdgeKey>> segments;
  for (int i = 0; i + 1 < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      double v00 = value(i, j), v10 = value(i + 1, j);
      double v01 = value(i, j + 1), v11 = value(i + 1, j + 1);
      bool p00 = v00 > 0.0, p10 = v10 > 0.0, p01 = v01 > 0.0, p11 = v11 > 0.0;

      EdgeKey bottom{i, j, 0}, top{i, j + 1, 0}, left{i, j, 1}, right{i + 1, j, 1};
      bool cb = p00 != p10, ct = p01 != p11, cl = p00 != p01, cr = p10 != p11;
      int crossings = cb + ct + cl + cr;
      if (crossings == 0) continue;

      if (crossings == 4) {
        bool center_positive = center_value.count({i, j}) ? center_value[{i, j}] > 0.0 : p00;
        // Pair edges so the contour separates the center from the corners of
        // the opposite sign.
        if (p00 == center_positive) {
          segments.emplace_back(bottom, right);
          segments.emplace_back(left, top);
        } else {
          segments.emplace_back(bottom, left);
          segments.emplace_back(right, top);
        }
        continue;
      }
      std::vector<EdgeKey> crossed;
      if (cb) crossed.push_back(bottom);
      if (cr) crossed.push_back(right);
      if (ct) crossed.push_back(top);
      if (cl) crossed.push_back(left);
      if (crossed.size() == 2) segments.emplace_back(crossed[0], crossed[1]);
    }
  }

  // Stitch segments sharing grid edges into chains.
  std::map<EdgeKey, std::vector<std::size_t>> incidence;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    incidence[segments[s].first].push_back(s);
    incidence[segments[s].second].push_back(s);
  }
  std::vector<bool> used(segments.size(), false);
  auto walk = [&](std::size_t start, const EdgeKey& from) {
    std::vector<EdgeKey> chain{from};
    std::size_t seg = start;
    EdgeKey at = from;
    while (true) {
      used[seg] = true;
      EdgeKey next = segments[seg].first == at ? segments[seg].second : segments[seg].first;
      chain.push_back(next);
      at = next;
      const auto& inc = incidence[at];
      std::size_t follow = segments.size();
      for (std::size_t cand : inc)
        if (!used[cand]) {
          follow = cand;
          break;
        }
      if (follow == segments.size()) break;
      seg = follow;
    }
    return chain;
  };

  std::vector<std::vector<EdgeKey>> chains;
  // Open chains first (edges incident to exactly one segment), then loops.
  for (const auto& [key, inc] : incidence) {
    if (inc.size() != 1 || used[inc[0]]) continue;
    chains.push_back(walk(inc[0], key));
  }
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) chains.push_back(walk(s, segments[s].first));

  for (const auto& chain : chains) {
    Eigen::MatrixXd line(chain.size(), 2);
    for (std::size_t p = 0; p < chain.size(); ++p) line.row(p) = interpolated(chain[p]).transpose();
    result.polylines.push_back(std::move(line));
  }
  return result;
}

std::string ContourResult::sign_grid_csv() const {
  std::ostringstream out;
  const int d = static_cast<int>(axes.size());
  for (int k = 0; k < d; ++k) out << "x" << k + 1 << ",";
  out << "sign\n";
  std::vector<long> index(d, 0);
  for (std::size_t i = 0; i < signs.size(); ++i) {
    for (int k = 0; k < d; ++k) out << csv::format(axes[k][index[k]]) << ",";
    out << int(signs[i]) << "\n";
    for (int k = d - 1; k >= 0; --k) {
      if (++index[k] < axes[k].size()) break;
      index[k] = 0;
    }
  }
  return out.str();
}

std::string ContourResult::polyline_csv() const {
  std::ostringstream out;
  const int d = axes.empty() ? 0 : static_cast<int>(axes.size());
  out << "polyline,vertex";
  for (int k = 0; k < d; ++k) out << ",x" << k + 1;
  out << "\n";
  for (std::size_t p = 0; p < polylines.size(); ++p)
    for (Eigen::Index v = 0; v < polylines[p].rows(); ++v) {
      out << p << "," << v;
      for (Eigen::Index k = 0; k < polylines[p].cols(); ++k)
        out << "," << csv::format(polylines[p](v, k));
      out << "\n";
    }
  return out.str();
}

}  // namespace clover
