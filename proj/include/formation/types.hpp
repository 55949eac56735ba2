#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace formation {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kStateDim = 9;
inline constexpr int kInputDim = 4;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;

// Thrown for malformed inputs (bad graphs, inconsistent horizons, invalid scenarios).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Position, velocity and Euler attitude of one vehicle.
struct VehicleState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;

  StateVec pack() const {
    StateVec x;
    x << p, v, phi, theta, psi;
    return x;
  }

  static VehicleState unpack(const StateVec& x) {
    VehicleState s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.phi = x(6);
    s.theta = x(7);
    s.psi = x(8);
    return s;
  }

  bool finite() const { return pack().allFinite(); }
};

/// Mass-normalized thrust, commanded roll/pitch and yaw rate.
struct ControlInput {
  double thrust = 0.0;
  double phi_ref = 0.0;
  double theta_ref = 0.0;
  double psi_rate = 0.0;

  InputVec pack() const {
    InputVec u;
    u << thrust, phi_ref, theta_ref, psi_rate;
    return u;
  }

  static ControlInput unpack(const InputVec& u) { return {u(0), u(1), u(2), u(3)}; }
};

inline bool operator==(const ControlInput& a, const ControlInput& b) {
  return a.thrust == b.thrust && a.phi_ref == b.phi_ref && a.theta_ref == b.theta_ref &&
         a.psi_rate == b.psi_rate;
}

inline bool operator==(const VehicleState& a, const VehicleState& b) {
  return a.pack() == b.pack();
}

}  // namespace formation
