#pragma once

// Linear double-integrator reference model driven by a distributed formation
// consensus law, and the stochastic iteration matrix used to certify it.

#include "formation/graph.hpp"
#include "formation/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

namespace formation {

struct ReferenceOutput {
  Vec3 z = Vec3::Zero();
  Vec3 z_v = Vec3::Zero();
};

struct NeighborMeasurement {
  int neighbor_id = -1;
  Vec3 relative_position = Vec3::Zero();  // p_j - p_i
  double weight = 0.0;                    // a_ij
  Vec3 offset = Vec3::Zero();             // delta*_j
};

/// u_f = sum_j a_ij (p_j - p_i - (delta*_j - delta*_i)) - 2 gamma (v_i - v*).
/// The bracket vanishes when p_i - p_j = delta*_i - delta*_j.
inline Vec3 formation_input(const Vec3& self_velocity, const Vec3& self_offset,
                            std::span<const NeighborMeasurement> neighbors, const Vec3& v_star,
                            double gamma) {
  Vec3 u = Vec3::Zero();
  for (const auto& nb : neighbors) {
    u += nb.weight * (nb.relative_position - (nb.offset - self_offset));
  }
  u -= 2.0 * gamma * (self_velocity - v_star);
  return u;
}

inline ReferenceOutput step(const ReferenceOutput& ref, const Vec3& u_f, double h) {
  return {ref.z + h * ref.z_v, ref.z_v + h * u_f};
}

/// Rolls the reference forward N steps holding the current formation input fixed.
inline std::vector<ReferenceOutput> predict_horizon(const ReferenceOutput& ref, const Vec3& u_f_now,
                                                    double h, int horizon) {
  if (horizon < 1) throw ConfigError("predict_horizon: horizon must be >= 1");
  std::vector<ReferenceOutput> out;
  out.reserve(horizon + 1);
  out.push_back(ref);
  for (int l = 0; l < horizon; ++l) out.push_back(step(out.back(), u_f_now, h));
  return out;
}

/// 2n x 2n iteration matrix of the error-free reference network; rows 2i, 2i+1 belong to vehicle i.
struct XiMatrix {
  Eigen::MatrixXd entries;

  int vehicles() const { return static_cast<int>(entries.rows() / 2); }
  static int position_row(int vehicle) { return 2 * vehicle; }
  static int velocity_row(int vehicle) { return 2 * vehicle + 1; }

  double max_row_sum_residual() const {
    return (entries.rowwise().sum().array() - 1.0).abs().maxCoeff();
  }
};

/// Assembles I (x) A - L (x) B with A = [[1-gh, gh], [gh, 1-gh]] and B = [[0, 0], [h/g, 0]].
inline XiMatrix build_xi(const GraphAnalysis& analysis, double gamma, double h) {
  if (!(h > 0.0) || !(gamma > 0.0)) throw ConfigError("build_xi: gamma and h must be > 0");
  const auto n = analysis.laplacian.rows();
  Eigen::Matrix2d a;
  a << 1.0 - gamma * h, gamma * h, gamma * h, 1.0 - gamma * h;
  Eigen::Matrix2d b;
  b << 0.0, 0.0, h / gamma, 0.0;
  XiMatrix xi;
  xi.entries = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Matrix2d block = -analysis.laplacian(i, j) * b;
      if (i == j) block += a;
      xi.entries.block<2, 2>(2 * i, 2 * j) = block;
    }
  }
  return xi;
}

class EigenSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpectralReport {
  int eigenvalue_one_multiplicity = 0;
  double max_other_modulus = 0.0;
  std::vector<std::complex<double>> eigenvalues;
};

inline constexpr double kUnitEigenvalueTol = 1e-8;

inline SpectralReport spectral_report(const XiMatrix& xi, double tol = kUnitEigenvalueTol) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(xi.entries, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw EigenSolveError("eigenvalue iteration did not converge");
  SpectralReport r;
  const auto& ev = solver.eigenvalues();
  r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  for (const auto& lambda : r.eigenvalues) {
    if (std::abs(lambda - 1.0) <= tol) {
      ++r.eigenvalue_one_multiplicity;
    } else {
      r.max_other_modulus = std::max(r.max_other_modulus, std::abs(lambda));
    }
  }
  return r;
}

}  // namespace formation
