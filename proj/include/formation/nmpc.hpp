#pragma once

// Per-vehicle tracking OCP, transcribed by single shooting over the input
// sequence. Box bounds on the inputs are enforced by projection; obstacle,
// reciprocal, speed and flying-area inequalities enter as quadratic exterior
// penalties whose weight grows whenever the inner solve stalls infeasible.

#include "formation/safety.hpp"
#include "formation/types.hpp"
#include "formation/vehicle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace formation {

struct OcpWeights {
  StateVec q_state = (StateVec() << 1, 1, 3, 1, 1, 1, 0.1, 0.1, 0.1).finished() * 100.0;
  InputVec q_input = InputVec::Ones();

  void validate() const {
    if ((q_state.array() < 0.0).any() || (q_input.array() < 0.0).any()) {
      throw ConfigError("OCP weights must be >= 0");
    }
    if (!(q_state.array() > 0.0).any()) throw ConfigError("at least one state weight must be > 0");
  }
};

struct PhysicalLimits {
  Vec3 p_min{-100.0, -100.0, 0.0};
  Vec3 p_max{100.0, 100.0, 10.0};
  double v_max = 3.0;
  InputVec u_min = (InputVec() << 5.0, -0.4, -0.4, -0.1).finished();
  InputVec u_max = (InputVec() << 15.0, 0.4, 0.4, 0.1).finished();

  void validate() const {
    if (!(p_min.array() < p_max.array()).all()) throw ConfigError("p_min must be < p_max componentwise");
    if (!(v_max > 0.0)) throw ConfigError("v_max must be > 0");
    if (!(u_min(0) > 0.0) || !(u_min(0) < u_max(0))) throw ConfigError("need 0 < T_min < T_max");
    for (int k = 1; k < kInputDim; ++k) {
      if (!(u_max(k) > 0.0) || u_min(k) != -u_max(k)) {
        throw ConfigError("attitude and yaw-rate limits must be symmetric and > 0");
      }
    }
  }

  InputVec clamp(const InputVec& u) const { return u.cwiseMax(u_min).cwiseMin(u_max); }
};

struct SolverSettings {
  int max_iterations = 200;
  double eps_c = 1e-3;
  double penalty_initial = 10.0;
  double penalty_factor = 2.0;
  double penalty_cap = 1e6;
  // Back-off added to obstacle (m) and reciprocal (scaled) constraints inside the solver,
  // so that penalty solutions land strictly on the safe side of the nominal boundary.
  double obstacle_margin = 0.02;
  double reciprocal_margin = 0.02;
  double optimality_tol = 1e-7;
  // A constraint counts as active when its tightened residual exceeds -activity_band.
  double activity_band = 1e-2;
};

struct ReciprocalConstraint {
  int neighbor_id = -1;
  Vec3 neighbor_point = Vec3::Zero();  // predicted neighbor position at step
  Ellipsoid outer;                     // outer ellipsoid at step
  int step = 0;                        // first-collision index l_c
};

struct OcpProblem {
  StateVec initial_state = StateVec::Zero();
  std::vector<StateVec> ref_states;  // N+1
  std::vector<InputVec> ref_inputs;  // N+1, the last one unused
  std::vector<Cylinder> obstacles;
  std::vector<ReciprocalConstraint> reciprocal;
  PhysicalLimits limits;
  OcpWeights weights;
  VehicleParams params;
  int horizon = 10;
  double h = 0.05;

  int obstacle_constraint_count() const { return static_cast<int>(obstacles.size()) * (horizon + 1); }
  int reciprocal_constraint_count() const { return static_cast<int>(reciprocal.size()); }
};

inline OcpProblem build_ocp(const StateVec& x_now, std::vector<StateVec> ref_states,
                            std::vector<InputVec> ref_inputs, std::vector<Cylinder> obstacles,
                            std::vector<ReciprocalConstraint> reciprocal, const PhysicalLimits& limits,
                            const OcpWeights& weights, const VehicleParams& params, int horizon, double h) {
  if (horizon < 1) throw ConfigError("build_ocp: horizon must be >= 1");
  if (!(h > 0.0)) throw ConfigError("build_ocp: h must be > 0");
  const auto expected = static_cast<std::size_t>(horizon + 1);
  if (ref_states.size() != expected || ref_inputs.size() != expected) {
    std::ostringstream msg;
    msg << "build_ocp: reference horizon must have " << expected << " entries (got " << ref_states.size()
        << " states, " << ref_inputs.size() << " inputs)";
    throw ConfigError(msg.str());
  }
  for (const auto& rc : reciprocal) {
    if (rc.step < 0 || rc.step > horizon) throw ConfigError("build_ocp: reciprocal index outside [0, N]");
  }
  OcpProblem p;
  p.initial_state = x_now;
  p.ref_states = std::move(ref_states);
  p.ref_inputs = std::move(ref_inputs);
  p.obstacles = std::move(obstacles);
  p.reciprocal = std::move(reciprocal);
  p.limits = limits;
  p.weights = weights;
  p.params = params;
  p.horizon = horizon;
  p.h = h;
  return p;
}

inline double stage_cost(const StateVec& x, const InputVec& u, const StateVec& x_ref, const InputVec& u_ref,
                         const OcpWeights& w) {
  const StateVec dx = x - x_ref;
  const InputVec du = u - u_ref;
  return dx.dot(w.q_state.cwiseProduct(dx)) + du.dot(w.q_input.cwiseProduct(du));
}

enum class SolverStatus { kConverged, kMaxIter, kInfeasibleFallback };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kConverged: return "converged";
    case SolverStatus::kMaxIter: return "max_iter";
    case SolverStatus::kInfeasibleFallback: return "infeasible_fallback";
  }
  return "unknown";
}

struct OcpSolution {
  std::vector<ControlInput> inputs;
  std::vector<VehicleState> predicted_states;
  double cost = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  SolverStatus status = SolverStatus::kConverged;
  double penalty = 0.0;
  int active_obstacle_rows = 0;
  int active_reciprocal_rows = 0;
};

inline ControlInput first_input(const OcpSolution& s) { return s.inputs.front(); }

/// Drops the first input and repeats the last one.
inline std::vector<ControlInput> shift_warm_start(const OcpSolution& previous) {
  std::vector<ControlInput> out(previous.inputs.begin() + 1, previous.inputs.end());
  out.push_back(previous.inputs.back());
  return out;
}

inline std::vector<VehicleState> rollout(const StateVec& x0, const std::vector<ControlInput>& inputs,
                                         double h, const VehicleParams& prm) {
  std::vector<VehicleState> out;
  out.reserve(inputs.size() + 1);
  StateVec x = x0;
  out.push_back(VehicleState::unpack(x));
  for (const auto& u : inputs) {
    x = euler_step(x, u.pack(), h, prm);
    out.push_back(VehicleState::unpack(x));
  }
  return out;
}

namespace detail {

struct Evaluation {
  double objective = 0.0;  // tracking + effort + penalty
  double cost = 0.0;       // tracking + effort
  double violation = 0.0;  // worst tightened residual, clipped at 0
  double nominal_violation = 0.0;
  int active_obstacle = 0;
  int active_reciprocal = 0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd gauss_newton;  // 2 J^T J
  std::vector<StateVec> states;
};

class Objective {
 public:
  Objective(const OcpProblem& p, const SolverSettings& s) : p_(p), s_(s), n_(p.horizon), dim_(kInputDim * p.horizon) {}

  int dim() const { return dim_; }

  Evaluation evaluate(const Eigen::VectorXd& u, double penalty, bool derivatives) const {
    Evaluation ev;
    const auto& q = p_.weights.q_state;
    const auto& qu = p_.weights.q_input;
    ev.states.resize(n_ + 1);
    ev.states[0] = p_.initial_state;
    for (int l = 0; l < n_; ++l) {
      ev.states[l + 1] = euler_step(ev.states[l], u.segment<kInputDim>(kInputDim * l), p_.h, p_.params);
    }
    if (derivatives) {
      ev.gradient = Eigen::VectorXd::Zero(dim_);
      ev.gauss_newton = Eigen::MatrixXd::Zero(dim_, dim_);
    }
    // Sensitivity of the current state to the stacked inputs; only the first 4l columns are nonzero.
    Eigen::Matrix<double, kStateDim, Eigen::Dynamic> sens;
    if (derivatives) sens = Eigen::Matrix<double, kStateDim, Eigen::Dynamic>::Zero(kStateDim, dim_);

    double objective = 0.0;
    double cost = 0.0;
    {
      const StateVec dx0 = ev.states[0] - p_.ref_states[0];
      cost += dx0.dot(q.cwiseProduct(dx0));
    }
    for (int l = 0; l < n_; ++l) {
      const InputVec ul = u.segment<kInputDim>(kInputDim * l);
      const InputVec du = ul - p_.ref_inputs[l];
      cost += du.dot(qu.cwiseProduct(du));
      if (derivatives) {
        ev.gradient.segment<kInputDim>(kInputDim * l) += 2.0 * qu.cwiseProduct(du);
        ev.gauss_newton.diagonal().segment<kInputDim>(kInputDim * l) += 2.0 * qu;

        const auto jac = dynamics_jacobians(ev.states[l], ul, p_.params);
        const int cols = kInputDim * (l + 1);
        const Eigen::Matrix<double, kStateDim, kStateDim> phi =
            Eigen::Matrix<double, kStateDim, kStateDim>::Identity() + p_.h * jac.a;
        sens.leftCols(kInputDim * l) = (phi * sens.leftCols(kInputDim * l)).eval();
        sens.middleCols<kInputDim>(kInputDim * l) = p_.h * jac.b;

        const StateVec dx = ev.states[l + 1] - p_.ref_states[l + 1];
        const auto s = sens.leftCols(cols);
        ev.gradient.head(cols) += 2.0 * s.transpose() * q.cwiseProduct(dx);
        ev.gauss_newton.topLeftCorner(cols, cols) += 2.0 * s.transpose() * q.asDiagonal() * s;
      }
      const StateVec dx = ev.states[l + 1] - p_.ref_states[l + 1];
      cost += dx.dot(q.cwiseProduct(dx));
      objective += accumulate_constraints(l + 1, ev, penalty, derivatives ? &sens : nullptr);
    }
    ev.cost = cost;
    ev.objective = cost + objective;
    return ev;
  }

 private:
  // Adds the penalty rows of step l; returns their contribution to the objective.
  double accumulate_constraints(int l, Evaluation& ev, double penalty,
                                const Eigen::Matrix<double, kStateDim, Eigen::Dynamic>* sens) const {
    const StateVec& x = ev.states[l];
    const Vec3 pos = x.segment<3>(0);
    const Vec3 vel = x.segment<3>(3);
    const int cols = kInputDim * l;
    double total = 0.0;

    auto row = [&](double nominal, double tightened, const StateVec& grad_x) {
      ev.nominal_violation = std::max(ev.nominal_violation, nominal);
      ev.violation = std::max(ev.violation, tightened);
      if (tightened <= 0.0) return;
      total += penalty * tightened * tightened;
      if (sens) {
        const Eigen::RowVectorXd jrow = grad_x.transpose() * sens->leftCols(cols);
        ev.gradient.head(cols) += 2.0 * penalty * tightened * jrow.transpose();
        ev.gauss_newton.topLeftCorner(cols, cols) += 2.0 * penalty * jrow.transpose() * jrow;
      }
    };

    for (const auto& cyl : p_.obstacles) {
      const Vec2 d = pos.head<2>() - cyl.center;
      const double dist = d.norm();
      const double nominal = cyl.radius - dist;
      const double tightened = nominal + s_.obstacle_margin;
      if (tightened > -s_.activity_band) ++ev.active_obstacle;
      StateVec g = StateVec::Zero();
      if (dist > 1e-12) g.head<2>() = -d / dist;
      row(nominal, tightened, g);
    }
    for (const auto& rc : p_.reciprocal) {
      if (std::max(rc.step, 1) != l) continue;
      const Vec3 sep = pos - rc.neighbor_point;
      const Vec3 scaled = sep.cwiseQuotient(rc.outer.semi_axes);
      const double sn = scaled.norm();
      const double nominal = 1.0 - sn;
      const double tightened = nominal + s_.reciprocal_margin;
      if (tightened > -s_.activity_band) ++ev.active_reciprocal;
      StateVec g = StateVec::Zero();
      if (sn > 1e-12) g.head<3>() = -scaled.cwiseQuotient(rc.outer.semi_axes) / sn;
      row(nominal, tightened, g);
    }
    {
      const double nominal = vel.squaredNorm() - p_.limits.v_max * p_.limits.v_max;
      StateVec g = StateVec::Zero();
      g.segment<3>(3) = 2.0 * vel;
      row(nominal, nominal, g);
    }
    for (int k = 0; k < 3; ++k) {
      StateVec g = StateVec::Zero();
      g(k) = 1.0;
      const double upper = pos(k) - p_.limits.p_max(k);
      row(upper, upper, g);
      g(k) = -1.0;
      const double lower = p_.limits.p_min(k) - pos(k);
      row(lower, lower, g);
    }
    return total;
  }

  const OcpProblem& p_;
  const SolverSettings& s_;
  int n_;
  int dim_;
};

inline Eigen::VectorXd stack(const std::vector<ControlInput>& inputs) {
  Eigen::VectorXd u(kInputDim * static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t l = 0; l < inputs.size(); ++l) u.segment<kInputDim>(kInputDim * l) = inputs[l].pack();
  return u;
}

inline std::vector<ControlInput> unstack(const Eigen::VectorXd& u) {
  std::vector<ControlInput> out(u.size() / kInputDim);
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l] = ControlInput::unpack(u.segment<kInputDim>(kInputDim * l));
  }
  return out;
}

}  // namespace detail

/// Objective (tracking + effort + penalty) and its analytic gradient for a stacked input sequence.
struct PenalizedObjective {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

inline PenalizedObjective penalized_objective(const OcpProblem& problem, const Eigen::VectorXd& stacked_inputs,
                                              double penalty, const SolverSettings& settings = {}) {
  detail::Objective obj(problem, settings);
  auto ev = obj.evaluate(stacked_inputs, penalty, true);
  return {ev.objective, std::move(ev.gradient)};
}

class NmpcSolver {
 public:
  explicit NmpcSolver(SolverSettings settings = {}) : settings_(settings) {}

  const SolverSettings& settings() const { return settings_; }

  OcpSolution solve(const OcpProblem& problem, const std::optional<OcpSolution>& warm_start = std::nullopt) const {
    const int n = problem.horizon;
    detail::Objective obj(problem, settings_);
    const Eigen::VectorXd lo = problem.limits.u_min.replicate(n, 1);
    const Eigen::VectorXd hi = problem.limits.u_max.replicate(n, 1);
    auto project = [&](const Eigen::VectorXd& u) { return Eigen::VectorXd(u.cwiseMax(lo).cwiseMin(hi)); };

    std::vector<ControlInput> initial;
    const bool warm = warm_start && static_cast<int>(warm_start->inputs.size()) == n;
    if (warm) {
      initial = shift_warm_start(*warm_start);
    } else {
      initial.reserve(n);
      for (int l = 0; l < n; ++l) initial.push_back(ControlInput::unpack(problem.ref_inputs[l]));
    }
    const Eigen::VectorXd u_initial = project(detail::stack(initial));

    double penalty = settings_.penalty_initial;
    if (warm) penalty = std::clamp(warm_start->penalty, settings_.penalty_initial, settings_.penalty_cap);

    Eigen::VectorXd u = u_initial;
    int iterations = 0;
    bool stationary = false;
    detail::Evaluation ev = obj.evaluate(u, penalty, true);
    while (true) {
      stationary = false;
      while (iterations < settings_.max_iterations) {
        ++iterations;
        const auto next = newton_step(obj, u, ev, penalty, project, lo, hi);
        if (!next) {
          stationary = true;
          break;
        }
        const double decrease = ev.objective - next->second.objective;
        const double step = (next->first - u).lpNorm<Eigen::Infinity>();
        u = next->first;
        ev = next->second;
        if (step < 1e-10 || decrease <= settings_.optimality_tol * (1.0 + ev.objective)) {
          stationary = true;
          break;
        }
      }
      if (ev.violation <= settings_.eps_c) break;
      if (!stationary || penalty >= settings_.penalty_cap) break;
      penalty = std::min(settings_.penalty_cap, penalty * settings_.penalty_factor);
      ev = obj.evaluate(u, penalty, true);
    }

    // Never hand back something worse than the shifted warm start under the final penalty.
    if (warm) {
      const auto ev_warm = obj.evaluate(u_initial, penalty, false);
      if (ev_warm.objective < ev.objective) {
        u = u_initial;
        ev = obj.evaluate(u, penalty, true);
      }
    }

    SolverStatus status = SolverStatus::kConverged;
    if (ev.nominal_violation > settings_.eps_c) {
      status = SolverStatus::kInfeasibleFallback;
      u = u_initial;
      ev = obj.evaluate(u, penalty, false);
    } else if (!stationary) {
      status = SolverStatus::kMaxIter;
    }
    return package(problem, u, ev, iterations, status, penalty);
  }

 private:
  template <typename Project>
  std::optional<std::pair<Eigen::VectorXd, detail::Evaluation>> newton_step(
      const detail::Objective& obj, const Eigen::VectorXd& u, const detail::Evaluation& ev, double penalty,
      const Project& project, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) const {
    const auto dim = u.size();
    const Eigen::VectorXd& g = ev.gradient;
    // Bertsekas-style active set: variables pinned at a bound with the gradient pushing outward.
    const Eigen::VectorXd moved = u - project(u - g);
    const double width = moved.template lpNorm<Eigen::Infinity>();
    const double eps_active = std::min(1e-6, width);
    std::vector<Eigen::Index> free;
    free.reserve(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const bool at_lo = u(i) <= lo(i) + eps_active && g(i) > 0.0;
      const bool at_hi = u(i) >= hi(i) - eps_active && g(i) < 0.0;
      if (!at_lo && !at_hi) free.push_back(i);
    }
    if (width < 1e-12) return std::nullopt;

    Eigen::VectorXd direction = Eigen::VectorXd::Zero(dim);
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = g(free[a]);
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = ev.gauss_newton(free[a], free[b]);
      }
      hff.diagonal().array() += 1e-9 * (1.0 + hff.diagonal().maxCoeff());
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hff);
      const Eigen::VectorXd df = ldlt.solve(-gf);
      for (Eigen::Index a = 0; a < nf; ++a) direction(free[a]) = df(a);
    }

    constexpr double kArmijo = 1e-4;
    auto search = [&](const Eigen::VectorXd& d) -> std::optional<std::pair<Eigen::VectorXd, detail::Evaluation>> {
      double alpha = 1.0;
      for (int k = 0; k < 30; ++k, alpha *= 0.5) {
        Eigen::VectorXd trial = project(u + alpha * d);
        const double predicted = g.dot(trial - u);
        if (predicted >= 0.0) continue;
        if (obj.evaluate(trial, penalty, false).objective <= ev.objective + kArmijo * predicted) {
          auto ev_trial = obj.evaluate(trial, penalty, true);
          return std::make_pair(std::move(trial), std::move(ev_trial));
        }
      }
      return std::nullopt;
    };

    if (direction.allFinite() && direction.lpNorm<Eigen::Infinity>() > 0.0) {
      if (auto r = search(direction)) return r;
    }
    // Fall back to a diagonally scaled projected gradient step.
    const Eigen::VectorXd scale = ev.gauss_newton.diagonal().cwiseMax(1e-9).cwiseInverse();
    return search(-scale.cwiseProduct(g));
  }

  OcpSolution package(const OcpProblem& problem, const Eigen::VectorXd& u, const detail::Evaluation& ev,
                      int iterations, SolverStatus status, double penalty) const {
    OcpSolution s;
    s.inputs = detail::unstack(u);
    s.predicted_states = rollout(problem.initial_state, s.inputs, problem.h, problem.params);
    s.cost = ev.cost;
    s.max_violation = ev.nominal_violation;
    s.iterations = iterations;
    s.status = status;
    s.penalty = penalty;
    s.active_obstacle_rows = ev.active_obstacle;
    s.active_reciprocal_rows = ev.active_reciprocal;
    return s;
  }

  SolverSettings settings_;
};

}  // namespace formation
