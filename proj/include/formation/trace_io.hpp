#pragma once

// CSV trace/metrics writers, atomic file output and the column projections
// used to export plot-ready data.

#include "formation/sim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace formation {

inline std::string fmt_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{
      "k",     "vehicle_id", "p_x",     "p_y",       "p_z",      "v_x", "v_y", "v_z",
      "phi",   "theta",      "psi",     "T",         "phi_ref",  "theta_ref", "psi_rate",
      "z_x",   "z_y",        "z_z",     "solver_status", "solver_iters", "cost", "max_violation"};
  return cols;
}

inline std::string join(const std::vector<std::string>& v, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

inline std::string trace_csv(const std::vector<StepTrace>& trace) {
  std::ostringstream os;
  os << join(trace_columns()) << '\n';
  for (const auto& st : trace) {
    for (std::size_t i = 0; i < st.vehicles.size(); ++i) {
      const auto& v = st.vehicles[i];
      const auto& s = v.state;
      const auto& u = v.input;
      os << st.k << ',' << i + 1;
      for (double x : {s.p.x(), s.p.y(), s.p.z(), s.v.x(), s.v.y(), s.v.z(), s.phi, s.theta, s.psi, u.thrust,
                       u.phi_ref, u.theta_ref, u.psi_rate, v.reference.z.x(), v.reference.z.y(), v.reference.z.z()}) {
        os << ',' << fmt_num(x);
      }
      os << ',' << to_string(v.status) << ',' << v.iterations << ',' << fmt_num(v.cost) << ','
         << fmt_num(v.max_violation) << '\n';
    }
  }
  return os.str();
}

inline std::string metrics_csv(const MetricsSeries& m, const std::vector<StepTrace>& trace) {
  std::ostringstream os;
  const std::size_t n = m.velocity_error.empty() ? 0 : m.velocity_error.front().size();
  os << "k,eps_f";
  for (std::size_t i = 0; i < n; ++i) os << ",eps_v_" << i + 1;
  os << ",min_d_ij,min_d_im\n";
  for (std::size_t r = 0; r < m.size(); ++r) {
    os << trace[r].k << ',' << fmt_num(m.formation_error[r]);
    for (double e : m.velocity_error[r]) os << ',' << fmt_num(e);
    os << ',' << fmt_num(m.min_pairwise[r]) << ',' << fmt_num(m.min_obstacle[r]) << '\n';
  }
  return os.str();
}

/// One row per generated reciprocal constraint and per vehicle with active obstacle rows.
inline std::string constraints_csv(const std::vector<StepTrace>& trace) {
  std::ostringstream os;
  os << "k,vehicle_id,kind,other_id,step_index,count\n";
  for (const auto& st : trace) {
    for (std::size_t i = 0; i < st.vehicles.size(); ++i) {
      const auto& v = st.vehicles[i];
      for (const auto& rc : v.reciprocal) {
        os << st.k << ',' << i + 1 << ",reciprocal," << rc.neighbor_id + 1 << ',' << rc.step << ",1\n";
      }
      if (v.active_obstacle_rows > 0) {
        os << st.k << ',' << i + 1 << ",obstacle,0,-1," << v.active_obstacle_rows << '\n';
      }
    }
  }
  return os.str();
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("csv has no column '" + name + "'");
  }
};

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "' is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size()) {
      throw std::runtime_error("'" + path.string() + "' has a malformed row");
    }
  }
  return t;
}

/// Keeps the named columns of a table, in the given order.
inline std::string project_columns(const CsvTable& t, const std::vector<std::string>& names) {
  std::vector<int> idx;
  for (const auto& n : names) idx.push_back(t.column(n));
  std::ostringstream os;
  os << join(names) << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < idx.size(); ++c) os << (c ? "," : "") << r[idx[c]];
    os << '\n';
  }
  return os.str();
}

}  // namespace formation
