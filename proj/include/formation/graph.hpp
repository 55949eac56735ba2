#pragma once

// Weighted directed communication graph. Convention: adjacency(i, j) > 0 means
// vehicle i uses vehicle j's state, so information flows j -> i.

#include "formation/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace formation {

using AdjacencyMatrix = Eigen::MatrixXd;

struct FormationGraph {
  AdjacencyMatrix adjacency;
  std::vector<Vec3> offsets;  // desired absolute position per vehicle
  Vec3 maneuver_velocity = Vec3::Zero();

  int size() const { return static_cast<int>(adjacency.rows()); }

  /// Vehicles whose state vehicle i reads, in increasing index order.
  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < size(); ++j) {
      if (j != i && adjacency(i, j) > 0.0) out.push_back(j);
    }
    return out;
  }

  void validate() const {
    const auto n = adjacency.rows();
    if (adjacency.cols() != n) throw ConfigError("adjacency matrix must be square");
    if (n < 2) throw ConfigError("formation graph needs at least 2 vehicles");
    if (static_cast<Eigen::Index>(offsets.size()) != n) {
      throw ConfigError("offsets list must have one entry per vehicle");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double a = adjacency(i, j);
        if (!std::isfinite(a) || a < 0.0) {
          std::ostringstream msg;
          msg << "adjacency weight a(" << i << "," << j << ") must be finite and >= 0";
          throw ConfigError(msg.str());
        }
        if (i == j && a != 0.0) throw ConfigError("self-weights a_ii must be 0");
      }
    }
  }

  /// Build from (from, to, weight) triples: information flows from -> to.
  static FormationGraph from_edges(int n, const std::vector<std::tuple<int, int, double>>& edges,
                                   std::vector<Vec3> offsets, const Vec3& v_star) {
    if (n < 2) throw ConfigError("formation graph needs at least 2 vehicles");
    FormationGraph g;
    g.adjacency = AdjacencyMatrix::Zero(n, n);
    for (const auto& [from, to, w] : edges) {
      if (from < 0 || from >= n || to < 0 || to >= n) throw ConfigError("edge endpoint out of range");
      if (from == to) throw ConfigError("self-edges are not supported");
      if (w < 0.0) throw ConfigError("edge weights must be >= 0");
      g.adjacency(to, from) = w;
    }
    g.offsets = std::move(offsets);
    g.maneuver_velocity = v_star;
    g.validate();
    return g;
  }
};

struct GraphAnalysis {
  Eigen::VectorXd degree;
  Eigen::MatrixXd laplacian;
  bool has_spanning_tree = false;
  double max_degree = 0.0;
};

/// True iff some node reaches every other node following information flow j -> i.
inline bool has_spanning_tree(const AdjacencyMatrix& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  if (n == 0) return false;
  std::vector<char> seen(n);
  std::vector<int> stack;
  stack.reserve(n);
  for (int root = 0; root < n; ++root) {
    std::fill(seen.begin(), seen.end(), 0);
    seen[root] = 1;
    stack.assign(1, root);
    int count = 1;
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      for (int i = 0; i < n; ++i) {
        if (!seen[i] && i != j && adjacency(i, j) > 0.0) {
          seen[i] = 1;
          ++count;
          stack.push_back(i);
        }
      }
    }
    if (count == n) return true;
  }
  return false;
}

inline bool has_spanning_tree(const FormationGraph& graph) { return has_spanning_tree(graph.adjacency); }

inline GraphAnalysis analyze(const FormationGraph& graph) {
  graph.validate();
  GraphAnalysis out;
  out.degree = graph.adjacency.rowwise().sum();
  out.laplacian = -graph.adjacency;
  out.laplacian.diagonal() = out.degree;
  out.max_degree = out.degree.maxCoeff();
  out.has_spanning_tree = has_spanning_tree(graph.adjacency);
  return out;
}

struct GammaReport {
  bool valid = false;
  bool interval_empty = false;
  double lower = 0.0;  // sqrt(max degree), inclusive
  double upper = 0.0;  // 1/h, exclusive
  std::string message;
};

/// Checks sqrt(max_degree) <= gamma < 1/h.
inline GammaReport validate_gamma(const GraphAnalysis& analysis, double gamma, double h) {
  if (!(h > 0.0)) throw ConfigError("sample period h must be > 0");
  GammaReport r;
  r.lower = std::sqrt(analysis.max_degree);
  r.upper = 1.0 / h;
  r.interval_empty = !(r.lower < r.upper);
  std::ostringstream msg;
  if (r.interval_empty) {
    msg << "admissible gamma interval [" << r.lower << ", " << r.upper << ") is empty";
  } else if (gamma < r.lower) {
    msg << "gamma " << gamma << " violates sqrt(max degree) = " << r.lower << " <= gamma";
  } else if (!(gamma < r.upper)) {
    msg << "gamma " << gamma << " violates gamma < 1/h = " << r.upper;
  } else {
    r.valid = true;
    msg << "gamma " << gamma << " in [" << r.lower << ", " << r.upper << ")";
  }
  r.message = msg.str();
  return r;
}

}  // namespace formation
