#pragma once

#include "formation/reference_model.hpp"
#include "formation/sim.hpp"

#include <sstream>
#include <string>

namespace formation {

inline constexpr double kStochasticTol = 1e-10;

/// Scenario validation plus the numeric convergence certificate of the reference network.
struct ConvergenceCheck {
  ScenarioCheck scenario;
  bool xi_available = false;
  double xi_row_residual = 0.0;
  double xi_min_entry = 0.0;
  double xi_min_diagonal = 0.0;
  SpectralReport spectral;
  bool spectral_converged = true;

  bool stochastic() const { return xi_row_residual <= kStochasticTol && xi_min_entry >= 0.0 && xi_min_diagonal > 0.0; }
  bool spectral_ok() const {
    return spectral_converged && spectral.eigenvalue_one_multiplicity == 1 &&
           spectral.max_other_modulus < 1.0 - kUnitEigenvalueTol;
  }
  bool passed() const { return scenario.passed() && xi_available && stochastic() && spectral_ok(); }

  std::string text() const {
    std::ostringstream os;
    auto mark = [](bool ok) { return ok ? "PASS" : "FAIL"; };
    os << "[" << mark(scenario.structural_ok) << "] scenario structure\n";
    if (!scenario.structural_ok) {
      for (const auto& p : scenario.problems) os << "       " << p << '\n';
      return os.str();
    }
    os << "[" << mark(scenario.spanning_tree) << "] directed spanning tree\n";
    os << "[" << mark(scenario.gamma.valid) << "] gamma: " << scenario.gamma.message << '\n';
    os << "[" << mark(scenario.initial_separation) << "] initial separation outside collision ellipsoid\n";
    if (xi_available) {
      os << "[" << mark(stochastic()) << "] Xi stochastic: row-sum residual " << xi_row_residual << ", min entry "
         << xi_min_entry << ", min diagonal " << xi_min_diagonal << '\n';
      if (spectral_converged) {
        os << "[" << mark(spectral_ok()) << "] Xi spectrum: eigenvalue-1 multiplicity "
           << spectral.eigenvalue_one_multiplicity << ", max other |lambda| " << spectral.max_other_modulus << '\n';
      } else {
        os << "[FAIL] Xi spectrum: eigenvalue iteration did not converge\n";
      }
    }
    for (const auto& p : scenario.problems) os << "       " << p << '\n';
    return os.str();
  }
};

inline ConvergenceCheck check_convergence(const Scenario& sc) {
  ConvergenceCheck r;
  r.scenario = check_scenario(sc);
  if (!r.scenario.structural_ok || !(sc.control.gamma > 0.0) || !(sc.control.h > 0.0)) return r;
  const auto xi = build_xi(analyze(sc.graph), sc.control.gamma, sc.control.h);
  r.xi_available = true;
  r.xi_row_residual = xi.max_row_sum_residual();
  r.xi_min_entry = xi.entries.minCoeff();
  r.xi_min_diagonal = xi.entries.diagonal().minCoeff();
  try {
    r.spectral = spectral_report(xi);
  } catch (const EigenSolveError&) {
    r.spectral_converged = false;
  }
  return r;
}

}  // namespace formation
