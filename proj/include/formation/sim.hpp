#pragma once

// Fixed-step lockstep simulation of the whole swarm. Every vehicle senses a
// snapshot taken at the step boundary, runs its reference model and tracking
// OCP on local information only, and all plants advance together.

#include "formation/graph.hpp"
#include "formation/nmpc.hpp"
#include "formation/reference_model.hpp"
#include "formation/safety.hpp"
#include "formation/types.hpp"
#include "formation/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace formation {

struct SafetyConfig {
  Ellipsoid collision{Vec3{0.6, 0.6, 0.72}};
  double t_max = 2.0;  // neighbor acceleration bound used by the error ball
  int m_r = 2;
  double perception_radius = 1e6;
  BetaRule beta_rule = BetaRule::kTraceOptimal;
};

struct ControlConfig {
  double gamma = 2.0;
  double h = 0.05;
  int horizon = 10;
  int duration_steps = 1200;
  double psi_ref = 0.0;
  int plant_substeps = 1;
  bool strict = true;
};

struct FormationSwitch {
  int step = 0;
  std::vector<Vec3> offsets;
};

struct Scenario {
  std::string name;
  FormationGraph graph;
  std::vector<VehicleState> initial;
  VehicleParams vehicle;
  std::vector<Cylinder> obstacles;
  PhysicalLimits limits;
  OcpWeights weights;
  SafetyConfig safety;
  ControlConfig control;
  SolverSettings solver;
  std::vector<FormationSwitch> schedule;

  int size() const { return graph.size(); }

  /// Desired absolute positions in force at step k.
  const std::vector<Vec3>& offsets_at(int k) const {
    const std::vector<Vec3>* current = &graph.offsets;
    for (const auto& sw : schedule) {
      if (sw.step <= k) current = &sw.offsets;
    }
    return *current;
  }
};

inline double scaled_distance(const Vec3& a, const Vec3& b, const Ellipsoid& e) { return e.scaled_norm(a - b); }

struct ScenarioCheck {
  bool structural_ok = true;  // shapes, parameter ranges
  bool spanning_tree = false;
  GammaReport gamma;
  bool initial_separation = true;
  std::vector<std::string> problems;

  bool passed() const { return structural_ok && spanning_tree && gamma.valid && initial_separation; }
};

/// Checks everything the closed loop relies on; never throws.
inline ScenarioCheck check_scenario(const Scenario& sc) {
  ScenarioCheck r;
  auto fail = [&](std::string msg) {
    r.structural_ok = false;
    r.problems.push_back(std::move(msg));
  };
  try {
    sc.graph.validate();
    sc.vehicle.validate();
    sc.limits.validate();
    sc.weights.validate();
    sc.safety.collision.validate();
  } catch (const std::exception& e) {
    fail(e.what());
    return r;
  }
  const int n = sc.size();
  if (static_cast<int>(sc.initial.size()) != n) fail("initial state list must have one entry per vehicle");
  if (!(sc.control.h > 0.0)) fail("control.h must be > 0");
  if (!(sc.control.gamma > 0.0)) fail("control.gamma must be > 0");
  if (sc.control.horizon < 1) fail("control.horizon must be >= 1");
  if (sc.control.duration_steps < 1) fail("control.duration_steps must be >= 1");
  if (sc.control.plant_substeps < 1) fail("control.plant_substeps must be >= 1");
  if (sc.safety.m_r < 1) fail("safety.m_r must be >= 1");
  if (sc.safety.t_max < 0.0) fail("safety.t_max must be >= 0");
  for (const auto& c : sc.obstacles) {
    if (!(c.radius > 0.0)) fail("obstacle radius must be > 0");
  }
  for (const auto& sw : sc.schedule) {
    if (static_cast<int>(sw.offsets.size()) != n) fail("schedule offsets must have one entry per vehicle");
    if (sw.step < 0) fail("schedule step must be >= 0");
  }
  if (!r.structural_ok) return r;

  const auto analysis = analyze(sc.graph);
  r.spanning_tree = analysis.has_spanning_tree;
  if (!r.spanning_tree) r.problems.push_back("communication graph has no directed spanning tree");
  r.gamma = validate_gamma(analysis, sc.control.gamma, sc.control.h);
  if (!r.gamma.valid) r.problems.push_back(r.gamma.message);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = scaled_distance(sc.initial[i].p, sc.initial[j].p, sc.safety.collision);
      if (!(d > 1.0)) {
        r.initial_separation = false;
        std::ostringstream msg;
        msg << "vehicles " << i + 1 << " and " << j + 1 << " start inside the collision ellipsoid (d = " << d << ")";
        r.problems.push_back(msg.str());
      }
    }
  }
  return r;
}

struct VehicleRuntime {
  VehicleState state;
  ReferenceOutput reference;
  std::optional<OcpSolution> previous;
};

struct WorldState {
  int k = 0;
  std::vector<VehicleRuntime> vehicles;
};

inline WorldState initial_world(const Scenario& sc) {
  WorldState w;
  w.vehicles.reserve(sc.initial.size());
  for (const auto& s : sc.initial) {
    VehicleRuntime v;
    v.state = s;
    v.reference.z = s.p;
    v.reference.z_v = s.v;
    w.vehicles.push_back(std::move(v));
  }
  return w;
}

struct ActiveReciprocal {
  int neighbor_id = -1;
  int step = 0;
};

struct VehicleControl {
  ControlInput input;
  OcpSolution solution;
  Vec3 formation_input = Vec3::Zero();
  std::vector<ActiveReciprocal> reciprocal;
};

/// Everything vehicle i may read at step k: its own runtime and its graph neighbors' positions/velocities.
struct LocalView {
  int self = 0;
  const VehicleRuntime* own = nullptr;
  std::vector<std::pair<int, std::pair<Vec3, Vec3>>> neighbors;  // id -> (p, v)
};

inline LocalView local_view(const Scenario& sc, const WorldState& w, int i) {
  LocalView view;
  view.self = i;
  view.own = &w.vehicles[i];
  for (int j : sc.graph.neighbors(i)) {
    view.neighbors.push_back({j, {w.vehicles[j].state.p, w.vehicles[j].state.v}});
  }
  return view;
}

/// Reference states and inputs along the horizon, with attitudes from the flat-output inversion.
inline void reference_horizon(const Scenario& sc, const std::vector<ReferenceOutput>& refs, const Vec3& u_f,
                              std::vector<StateVec>& x_r, std::vector<InputVec>& u_r) {
  const double g = sc.vehicle.gravity;
  // Keep the demanded specific force pointing upward (only reachable under extreme demands).
  Vec3 accel = u_f;
  accel.z() = std::max(accel.z(), -0.8 * g);
  x_r.clear();
  u_r.clear();
  for (const auto& ref : refs) {
    Vec3 a = accel;
    const double t_z = a.z() + g + sc.vehicle.damping.z() * ref.z_v.z();
    if (t_z < 0.2 * g) a.z() += 0.2 * g - t_z;
    const auto att = flat_reference_attitude(a, ref.z_v, sc.control.psi_ref, sc.vehicle);
    StateVec xr;
    xr << ref.z, ref.z_v, att.phi, att.theta, sc.control.psi_ref;
    x_r.push_back(xr);
    u_r.push_back((InputVec() << g, att.phi, att.theta, 0.0).finished());
  }
}

struct VehicleProblem {
  OcpProblem problem;
  Vec3 formation_input = Vec3::Zero();
  std::vector<ActiveReciprocal> reciprocal;
};

/// Builds vehicle i's tracking OCP from its local view.
inline VehicleProblem build_vehicle_problem(const Scenario& sc, const LocalView& view, const std::vector<Vec3>& offsets) {
  const auto& own = *view.own;
  const int i = view.self;
  const double h = sc.control.h;
  const int horizon = sc.control.horizon;

  std::vector<NeighborMeasurement> meas;
  meas.reserve(view.neighbors.size());
  for (const auto& [j, pv] : view.neighbors) {
    meas.push_back({j, pv.first - own.state.p, sc.graph.adjacency(i, j), offsets[j]});
  }
  VehicleProblem out;
  out.formation_input =
      formation_input(own.state.v, offsets[i], meas, sc.graph.maneuver_velocity, sc.control.gamma);
  const auto refs = predict_horizon(own.reference, out.formation_input, h, horizon);
  std::vector<StateVec> x_r;
  std::vector<InputVec> u_r;
  reference_horizon(sc, refs, out.formation_input, x_r, u_r);

  // Own plan for the collision check: the previous optimal inputs, shifted and replayed from now.
  std::vector<Vec3> own_plan;
  own_plan.reserve(horizon + 1);
  if (own.previous && static_cast<int>(own.previous->inputs.size()) == horizon) {
    for (const auto& s : rollout(own.state.pack(), shift_warm_start(*own.previous), h, sc.vehicle)) {
      own_plan.push_back(s.p);
    }
  } else {
    own_plan.assign(horizon + 1, own.state.p);
  }

  std::vector<ReciprocalConstraint> reciprocal;
  for (const auto& [j, pv] : view.neighbors) {
    const auto pred = predict_neighbor_region(j, pv.first, pv.second, h, horizon, sc.safety.t_max, sc.safety.m_r,
                                              sc.safety.collision, sc.safety.beta_rule);
    if (const auto lc = first_collision(own_plan, pred)) {
      // The measured position at l = 0 cannot be moved; an immediate overlap is resolved at l = 1.
      const int l = std::max(*lc, 1);
      reciprocal.push_back({j, pred.positions[l], pred.outer[l], *lc});
      out.reciprocal.push_back({j, *lc});
    }
  }

  out.problem = build_ocp(own.state.pack(), std::move(x_r), std::move(u_r),
                          perceived_obstacles(own.state.p, sc.obstacles, sc.safety.perception_radius),
                          std::move(reciprocal), sc.limits, sc.weights, sc.vehicle, horizon, h);
  return out;
}

inline VehicleControl compute_vehicle_control(const Scenario& sc, const LocalView& view, const NmpcSolver& solver,
                                              const std::vector<Vec3>& offsets) {
  auto vp = build_vehicle_problem(sc, view, offsets);
  VehicleControl out;
  out.formation_input = vp.formation_input;
  out.reciprocal = std::move(vp.reciprocal);
  out.solution = solver.solve(vp.problem, view.own->previous);
  out.input = first_input(out.solution);
  return out;
}

struct VehicleTrace {
  VehicleState state;
  ControlInput input;
  ReferenceOutput reference;
  SolverStatus status = SolverStatus::kConverged;
  int iterations = 0;
  double cost = 0.0;
  double max_violation = 0.0;
  int active_obstacle_rows = 0;
  int active_reciprocal_rows = 0;
  std::vector<ActiveReciprocal> reciprocal;
  bool rollout_consistent = true;
  bool inputs_in_bounds = true;
};

struct StepTrace {
  int k = 0;
  std::vector<VehicleTrace> vehicles;

  bool constraints_active() const {
    return std::any_of(vehicles.begin(), vehicles.end(), [](const VehicleTrace& v) {
      return !v.reciprocal.empty() || v.active_obstacle_rows > 0 || v.active_reciprocal_rows > 0;
    });
  }
};

inline bool rollout_consistent(const OcpSolution& s, const VehicleParams& prm, double h) {
  for (std::size_t l = 0; l + 1 < s.predicted_states.size(); ++l) {
    if (!(euler_step(s.predicted_states[l], s.inputs[l], h, prm) == s.predicted_states[l + 1])) return false;
  }
  return s.predicted_states.size() == s.inputs.size() + 1;
}

inline bool inputs_in_bounds(const OcpSolution& s, const PhysicalLimits& lim) {
  return std::all_of(s.inputs.begin(), s.inputs.end(), [&](const ControlInput& u) {
    const InputVec v = u.pack();
    return (v.array() >= lim.u_min.array()).all() && (v.array() <= lim.u_max.array()).all();
  });
}

class Simulation {
 public:
  explicit Simulation(Scenario scenario) : sc_(std::move(scenario)), solver_(sc_.solver) {
    const auto chk = check_scenario(sc_);
    if (!chk.structural_ok || (sc_.control.strict && !chk.passed())) {
      std::string msg = "scenario validation failed:";
      for (const auto& p : chk.problems) msg += "\n  " + p;
      throw ConfigError(msg);
    }
    world_ = initial_world(sc_);
  }

  const Scenario& scenario() const { return sc_; }
  const WorldState& world() const { return world_; }
  WorldState& mutable_world() { return world_; }

  VehicleControl control_for(int i) const {
    return compute_vehicle_control(sc_, local_view(sc_, world_, i), solver_, sc_.offsets_at(world_.k));
  }

  StepTrace step() {
    const int n = sc_.size();
    const auto& offsets = sc_.offsets_at(world_.k);
    std::vector<VehicleControl> controls;
    controls.reserve(n);
    for (int i = 0; i < n; ++i) controls.push_back(compute_vehicle_control(sc_, local_view(sc_, world_, i), solver_, offsets));

    StepTrace trace;
    trace.k = world_.k;
    trace.vehicles.reserve(n);
    for (int i = 0; i < n; ++i) {
      auto& v = world_.vehicles[i];
      const auto& c = controls[i];
      VehicleTrace vt;
      vt.state = v.state;
      vt.input = c.input;
      vt.reference = v.reference;
      vt.status = c.solution.status;
      vt.iterations = c.solution.iterations;
      vt.cost = c.solution.cost;
      vt.max_violation = c.solution.max_violation;
      vt.active_obstacle_rows = c.solution.active_obstacle_rows;
      vt.active_reciprocal_rows = c.solution.active_reciprocal_rows;
      vt.reciprocal = c.reciprocal;
      vt.rollout_consistent = rollout_consistent(c.solution, sc_.vehicle, sc_.control.h);
      vt.inputs_in_bounds = inputs_in_bounds(c.solution, sc_.limits);
      trace.vehicles.push_back(std::move(vt));

      const int sub = sc_.control.plant_substeps;
      StateVec x = v.state.pack();
      for (int s = 0; s < sub; ++s) x = euler_step(x, c.input.pack(), sc_.control.h / sub, sc_.vehicle);
      v.state = VehicleState::unpack(x);
      v.reference = formation::step(v.reference, c.formation_input, sc_.control.h);
      v.previous = c.solution;
    }
    ++world_.k;
    return trace;
  }

 private:
  Scenario sc_;
  NmpcSolver solver_;
  WorldState world_;
};

struct MetricsSeries {
  std::vector<double> formation_error;
  std::vector<std::vector<double>> velocity_error;  // [k][i]
  std::vector<double> min_pairwise;
  std::vector<double> min_obstacle;

  std::size_t size() const { return formation_error.size(); }
};

struct StepMetrics {
  double formation_error = 0.0;
  std::vector<double> velocity_error;
  double min_pairwise = std::numeric_limits<double>::infinity();
  double min_obstacle = std::numeric_limits<double>::infinity();
};

inline StepMetrics step_metrics(const Scenario& sc, const std::vector<VehicleState>& states,
                                const std::vector<Vec3>& offsets) {
  const int n = static_cast<int>(states.size());
  StepMetrics m;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double a = sc.graph.adjacency(i, j);
      if (i == j || a <= 0.0) continue;
      m.formation_error += a * (states[i].p - states[j].p - (offsets[i] - offsets[j])).norm();
    }
    m.velocity_error.push_back((states[i].v - sc.graph.maneuver_velocity).norm());
    for (int j = i + 1; j < n; ++j) {
      m.min_pairwise = std::min(m.min_pairwise, scaled_distance(states[i].p, states[j].p, sc.safety.collision));
    }
    for (const auto& c : sc.obstacles) m.min_obstacle = std::min(m.min_obstacle, obstacle_clearance(states[i].p, c));
  }
  return m;
}

inline MetricsSeries compute_metrics(const Scenario& sc, const std::vector<StepTrace>& trace) {
  if (trace.empty()) throw ConfigError("compute_metrics: empty trace");
  MetricsSeries out;
  std::vector<VehicleState> states;
  for (const auto& st : trace) {
    states.clear();
    for (const auto& v : st.vehicles) states.push_back(v.state);
    auto m = step_metrics(sc, states, sc.offsets_at(st.k));
    out.formation_error.push_back(m.formation_error);
    out.velocity_error.push_back(std::move(m.velocity_error));
    out.min_pairwise.push_back(m.min_pairwise);
    out.min_obstacle.push_back(m.min_obstacle);
  }
  return out;
}

struct RunResult {
  std::vector<StepTrace> trace;
  MetricsSeries metrics;
};

inline RunResult run(const Scenario& sc) {
  Simulation sim(sc);
  RunResult r;
  r.trace.reserve(sc.control.duration_steps);
  for (int k = 0; k < sc.control.duration_steps; ++k) r.trace.push_back(sim.step());
  r.metrics = compute_metrics(sc, r.trace);
  return r;
}

}  // namespace formation
