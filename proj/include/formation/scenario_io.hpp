#pragma once

// JSON scenario files. A user document is merged over a fully populated
// default document; keys absent from the defaults are rejected, as are
// dotted-key overrides naming keys that do not exist.

#include "formation/sim.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace formation {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class ScenarioParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed(const json& j, std::string_view what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw ScenarioParseError(std::string(what) + ": expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw ScenarioParseError(std::string(what) + ": entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

inline std::vector<Vec3> vec3_list(const json& j, std::string_view what) {
  if (!j.is_array()) throw ScenarioParseError(std::string(what) + ": expected an array");
  std::vector<Vec3> out;
  for (const auto& e : j) out.push_back(fixed<3>(e, what));
  return out;
}

inline double number(const json& j, std::string_view what) {
  if (!j.is_number()) throw ScenarioParseError(std::string(what) + ": expected a number");
  return j.get<double>();
}

inline int integer(const json& j, std::string_view what) {
  if (!j.is_number_integer()) throw ScenarioParseError(std::string(what) + ": expected an integer");
  return j.get<int>();
}

// Sections whose contents are free-form lists rather than fixed keys.
inline bool open_section(const std::string& path) {
  return path == "graph.edges" || path == "graph.offsets" || path == "initial_states" || path == "obstacles" ||
         path == "schedule";
}

inline void check_known_keys(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string child = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.is_object() || !defaults.contains(it.key())) {
      throw ScenarioParseError("unknown scenario key '" + child + "'");
    }
    if (!open_section(child)) check_known_keys(it.value(), defaults.at(it.key()), child);
  }
}

}  // namespace io_detail

/// Every tunable key with its default. graph and initial_states must come from the file.
inline json default_document() {
  const ControlConfig control;
  const VehicleParams vehicle;
  const PhysicalLimits limits;
  const OcpWeights weights;
  const SafetyConfig safety;
  const SolverSettings solver;
  using io_detail::vec;
  return json{
      {"schema_version", kSchemaVersion},
      {"name", "unnamed"},
      {"description", ""},
      {"control",
       {{"gamma", control.gamma},
        {"h", control.h},
        {"N", control.horizon},
        {"duration_steps", control.duration_steps},
        {"psi_ref", control.psi_ref},
        {"plant_substeps", control.plant_substeps},
        {"strict", control.strict}}},
      {"vehicle",
       {{"tau_phi", vehicle.tau_phi},
        {"tau_theta", vehicle.tau_theta},
        {"k_phi", vehicle.k_phi},
        {"k_theta", vehicle.k_theta},
        {"damping", vec(vehicle.damping)},
        {"gravity", vehicle.gravity}}},
      {"limits",
       {{"p_min", vec(limits.p_min)},
        {"p_max", vec(limits.p_max)},
        {"v_max", limits.v_max},
        {"u_min", vec(limits.u_min)},
        {"u_max", vec(limits.u_max)}}},
      {"weights", {{"q_state", vec(weights.q_state)}, {"q_input", vec(weights.q_input)}}},
      {"safety",
       {{"ellipsoid", vec(safety.collision.semi_axes)},
        {"t_max", safety.t_max},
        {"m_r", safety.m_r},
        {"perception_radius", safety.perception_radius},
        {"beta_rule", "trace_optimal"}}},
      {"nmpc",
       {{"max_iterations", solver.max_iterations},
        {"eps_c", solver.eps_c},
        {"penalty_initial", solver.penalty_initial},
        {"penalty_factor", solver.penalty_factor},
        {"penalty_cap", solver.penalty_cap},
        {"obstacle_margin", solver.obstacle_margin},
        {"reciprocal_margin", solver.reciprocal_margin},
        {"optimality_tol", solver.optimality_tol},
        {"activity_band", solver.activity_band}}},
      {"graph", {{"edges", json::array()}, {"offsets", json::array()}, {"v_star", json::array({0.5, 0.0, 0.0})}}},
      {"initial_states", json::array()},
      {"obstacles", json::array()},
      {"schedule", json::array()},
  };
}

/// Merges the user document over the defaults, rejecting unknown keys and wrong schema versions.
inline json resolve_document(const json& user) {
  if (!user.is_object()) throw ScenarioParseError("scenario root must be a JSON object");
  if (!user.contains("schema_version")) throw ScenarioParseError("scenario is missing 'schema_version'");
  if (!user["schema_version"].is_number_integer() || user["schema_version"].get<int>() != kSchemaVersion) {
    throw ScenarioParseError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  json doc = default_document();
  io_detail::check_known_keys(user, doc, "");
  doc.merge_patch(user);
  return doc;
}

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a plain string.
inline void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ScenarioParseError("override '" + std::string(assignment) + "' must have the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json* node = &doc;
  std::stringstream ss(key);
  std::string token;
  while (std::getline(ss, token, '.')) {
    if (node->is_object() && node->contains(token)) {
      node = &(*node)[token];
    } else if (node->is_array() && !token.empty() && token.find_first_not_of("0123456789") == std::string::npos &&
               std::stoul(token) < node->size()) {
      node = &(*node)[std::stoul(token)];
    } else {
      throw ScenarioParseError("override names unknown key '" + key + "'");
    }
  }
  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;
  if (node->is_number() && !value.is_number()) throw ScenarioParseError("override '" + key + "' expects a number");
  if (node->is_boolean() && !value.is_boolean()) throw ScenarioParseError("override '" + key + "' expects a boolean");
  *node = value;
}

inline BetaRule parse_beta_rule(const json& j) {
  if (j == "trace_optimal") return BetaRule::kTraceOptimal;
  if (j == "as_printed") return BetaRule::kAsPrinted;
  throw ScenarioParseError("safety.beta_rule must be 'trace_optimal' or 'as_printed'");
}

/// Builds a Scenario from a resolved document. Throws ScenarioParseError on shape/type errors.
inline Scenario scenario_from_document(const json& doc) {
  using namespace io_detail;
  try {
    Scenario sc;
    sc.name = doc.at("name").get<std::string>();

    const auto& c = doc.at("control");
    sc.control.gamma = number(c.at("gamma"), "control.gamma");
    sc.control.h = number(c.at("h"), "control.h");
    sc.control.horizon = integer(c.at("N"), "control.N");
    sc.control.duration_steps = integer(c.at("duration_steps"), "control.duration_steps");
    sc.control.psi_ref = number(c.at("psi_ref"), "control.psi_ref");
    sc.control.plant_substeps = integer(c.at("plant_substeps"), "control.plant_substeps");
    if (!c.at("strict").is_boolean()) throw ScenarioParseError("control.strict: expected a boolean");
    sc.control.strict = c.at("strict").get<bool>();

    const auto& v = doc.at("vehicle");
    sc.vehicle.tau_phi = number(v.at("tau_phi"), "vehicle.tau_phi");
    sc.vehicle.tau_theta = number(v.at("tau_theta"), "vehicle.tau_theta");
    sc.vehicle.k_phi = number(v.at("k_phi"), "vehicle.k_phi");
    sc.vehicle.k_theta = number(v.at("k_theta"), "vehicle.k_theta");
    sc.vehicle.damping = fixed<3>(v.at("damping"), "vehicle.damping");
    sc.vehicle.gravity = number(v.at("gravity"), "vehicle.gravity");

    const auto& lim = doc.at("limits");
    sc.limits.p_min = fixed<3>(lim.at("p_min"), "limits.p_min");
    sc.limits.p_max = fixed<3>(lim.at("p_max"), "limits.p_max");
    sc.limits.v_max = number(lim.at("v_max"), "limits.v_max");
    sc.limits.u_min = fixed<4>(lim.at("u_min"), "limits.u_min");
    sc.limits.u_max = fixed<4>(lim.at("u_max"), "limits.u_max");

    const auto& w = doc.at("weights");
    sc.weights.q_state = fixed<9>(w.at("q_state"), "weights.q_state");
    sc.weights.q_input = fixed<4>(w.at("q_input"), "weights.q_input");

    const auto& s = doc.at("safety");
    sc.safety.collision.semi_axes = fixed<3>(s.at("ellipsoid"), "safety.ellipsoid");
    sc.safety.t_max = number(s.at("t_max"), "safety.t_max");
    sc.safety.m_r = integer(s.at("m_r"), "safety.m_r");
    sc.safety.perception_radius = number(s.at("perception_radius"), "safety.perception_radius");
    sc.safety.beta_rule = parse_beta_rule(s.at("beta_rule"));

    const auto& m = doc.at("nmpc");
    sc.solver.max_iterations = integer(m.at("max_iterations"), "nmpc.max_iterations");
    sc.solver.eps_c = number(m.at("eps_c"), "nmpc.eps_c");
    sc.solver.penalty_initial = number(m.at("penalty_initial"), "nmpc.penalty_initial");
    sc.solver.penalty_factor = number(m.at("penalty_factor"), "nmpc.penalty_factor");
    sc.solver.penalty_cap = number(m.at("penalty_cap"), "nmpc.penalty_cap");
    sc.solver.obstacle_margin = number(m.at("obstacle_margin"), "nmpc.obstacle_margin");
    sc.solver.reciprocal_margin = number(m.at("reciprocal_margin"), "nmpc.reciprocal_margin");
    sc.solver.optimality_tol = number(m.at("optimality_tol"), "nmpc.optimality_tol");
    sc.solver.activity_band = number(m.at("activity_band"), "nmpc.activity_band");

    const auto& g = doc.at("graph");
    auto offsets = vec3_list(g.at("offsets"), "graph.offsets");
    const int n = static_cast<int>(offsets.size());
    std::vector<std::tuple<int, int, double>> edges;
    for (const auto& e : g.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw ScenarioParseError("graph.edges: entries are [from, to, weight]");
      // 1-based vehicle ids in files.
      edges.emplace_back(integer(e[0], "graph.edges from") - 1, integer(e[1], "graph.edges to") - 1,
                         number(e[2], "graph.edges weight"));
    }
    try {
      sc.graph = FormationGraph::from_edges(n, edges, std::move(offsets), fixed<3>(g.at("v_star"), "graph.v_star"));
    } catch (const ConfigError& e) {
      throw ScenarioParseError(std::string("graph: ") + e.what());
    }

    for (const auto& is : doc.at("initial_states")) {
      VehicleState st;
      if (!is.is_object()) throw ScenarioParseError("initial_states: entries must be objects");
      for (auto it = is.begin(); it != is.end(); ++it) {
        if (it.key() != "p" && it.key() != "v" && it.key() != "attitude") {
          throw ScenarioParseError("unknown scenario key 'initial_states." + it.key() + "'");
        }
      }
      st.p = fixed<3>(is.at("p"), "initial_states.p");
      if (is.contains("v")) st.v = fixed<3>(is["v"], "initial_states.v");
      if (is.contains("attitude")) {
        const Vec3 att = fixed<3>(is["attitude"], "initial_states.attitude");
        st.phi = att.x();
        st.theta = att.y();
        st.psi = att.z();
      }
      sc.initial.push_back(st);
    }

    for (const auto& o : doc.at("obstacles")) {
      for (auto it = o.begin(); it != o.end(); ++it) {
        if (it.key() != "x" && it.key() != "y" && it.key() != "radius") {
          throw ScenarioParseError("unknown scenario key 'obstacles." + it.key() + "'");
        }
      }
      sc.obstacles.push_back({Vec2{number(o.at("x"), "obstacles.x"), number(o.at("y"), "obstacles.y")},
                              number(o.at("radius"), "obstacles.radius")});
    }

    for (const auto& sw : doc.at("schedule")) {
      sc.schedule.push_back({integer(sw.at("step"), "schedule.step"), vec3_list(sw.at("offsets"), "schedule.offsets")});
    }
    std::stable_sort(sc.schedule.begin(), sc.schedule.end(),
                     [](const FormationSwitch& a, const FormationSwitch& b) { return a.step < b.step; });
    return sc;
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("scenario: ") + e.what());
  }
}

struct LoadedScenario {
  json document;  // resolved, overrides applied
  Scenario scenario;
};

inline LoadedScenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open scenario file '" + path + "'");
  json user = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (user.is_discarded()) throw ScenarioParseError("scenario file '" + path + "' is not valid JSON");
  LoadedScenario out;
  out.document = resolve_document(user);
  for (const auto& o : overrides) apply_override(out.document, o);
  out.scenario = scenario_from_document(out.document);
  return out;
}

}  // namespace formation
