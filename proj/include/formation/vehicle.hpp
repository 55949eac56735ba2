#pragma once

// Nine-state multirotor model with first-order roll/pitch response, its explicit
// Euler discretization, and the flat-output inversion to reference attitudes.

#include "formation/types.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace formation {

struct VehicleParams {
  double tau_phi = 0.116;
  double tau_theta = 0.116;
  double k_phi = 1.0;
  double k_theta = 1.0;
  Vec3 damping{0.1, 0.1, 0.2};
  double gravity = 9.81;

  void validate() const {
    if (!(tau_phi > 0.0) || !(tau_theta > 0.0)) throw ConfigError("vehicle time constants must be > 0");
    if (!(damping.array() > 0.0).all()) throw ConfigError("vehicle damping entries must be > 0");
    if (!(gravity > 0.0)) throw ConfigError("gravity must be > 0");
  }
};

/// World-from-body rotation, Z-Y-X intrinsic (yaw, then pitch, then roll).
inline Mat3 rotation_matrix(double phi, double theta, double psi) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(psi), sp = std::sin(psi);
  Mat3 r;
  r << cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf,
       sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf,
       -st,     ct * sf,                ct * cf;
  return r;
}

/// Body z-axis expressed in the world frame, i.e. rotation_matrix(...) * (0,0,1).
inline Vec3 thrust_axis(double phi, double theta, double psi) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(psi), sp = std::sin(psi);
  return {cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf};
}

inline StateVec continuous_dynamics(const StateVec& x, const InputVec& u, const VehicleParams& prm) {
  StateVec dx;
  const Vec3 v = x.segment<3>(3);
  dx.segment<3>(0) = v;
  dx.segment<3>(3) = thrust_axis(x(6), x(7), x(8)) * u(0) - Vec3::UnitZ() * prm.gravity -
                     prm.damping.cwiseProduct(v);
  dx(6) = (prm.k_phi * u(1) - x(6)) / prm.tau_phi;
  dx(7) = (prm.k_theta * u(2) - x(7)) / prm.tau_theta;
  dx(8) = u(3);
  return dx;
}

inline VehicleState continuous_dynamics(const VehicleState& x, const ControlInput& u,
                                        const VehicleParams& prm) {
  return VehicleState::unpack(continuous_dynamics(x.pack(), u.pack(), prm));
}

inline StateVec euler_step(const StateVec& x, const InputVec& u, double h, const VehicleParams& prm) {
  return x + continuous_dynamics(x, u, prm) * h;
}

inline VehicleState euler_step(const VehicleState& x, const ControlInput& u, double h,
                               const VehicleParams& prm) {
  return VehicleState::unpack(euler_step(x.pack(), u.pack(), h, prm));
}

struct DynamicsJacobians {
  Eigen::Matrix<double, kStateDim, kStateDim> a;  // d f / d x
  Eigen::Matrix<double, kStateDim, kInputDim> b;  // d f / d u
};

inline DynamicsJacobians dynamics_jacobians(const StateVec& x, const InputVec& u, const VehicleParams& prm) {
  const double cf = std::cos(x(6)), sf = std::sin(x(6));
  const double ct = std::cos(x(7)), st = std::sin(x(7));
  const double cp = std::cos(x(8)), sp = std::sin(x(8));
  const double thrust = u(0);

  DynamicsJacobians j;
  j.a.setZero();
  j.b.setZero();
  j.a.block<3, 3>(0, 3).setIdentity();
  j.a.block<3, 3>(3, 3) = (-prm.damping).asDiagonal();

  const Vec3 d_phi{-cp * st * sf + sp * cf, -sp * st * sf - cp * cf, -ct * sf};
  const Vec3 d_theta{cp * ct * cf, sp * ct * cf, -st * cf};
  const Vec3 d_psi{-sp * st * cf + cp * sf, cp * st * cf + sp * sf, 0.0};
  j.a.block<3, 1>(3, 6) = d_phi * thrust;
  j.a.block<3, 1>(3, 7) = d_theta * thrust;
  j.a.block<3, 1>(3, 8) = d_psi * thrust;
  j.a(6, 6) = -1.0 / prm.tau_phi;
  j.a(7, 7) = -1.0 / prm.tau_theta;

  j.b.block<3, 1>(3, 0) = Vec3{cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf};
  j.b(6, 1) = prm.k_phi / prm.tau_phi;
  j.b(7, 2) = prm.k_theta / prm.tau_theta;
  j.b(8, 3) = 1.0;
  return j;
}

struct FlatAttitude {
  double phi = 0.0;
  double theta = 0.0;
  double thrust = 0.0;  // magnitude of the demanded specific force
};

/// Roll and pitch that align the thrust axis with accel + g*e_z + D*velocity at the given yaw.
/// Throws when the demanded specific force does not point upward.
inline FlatAttitude flat_reference_attitude(const Vec3& accel, const Vec3& velocity, double psi,
                                            const VehicleParams& prm) {
  const Vec3 t = accel + Vec3::UnitZ() * prm.gravity + prm.damping.cwiseProduct(velocity);
  if (!(t.z() > 0.0)) {
    throw std::domain_error("flat_reference_attitude: demanded specific force has t_z <= 0");
  }
  const double norm = t.norm();
  const Vec3 b = t / norm;
  const double cp = std::cos(psi), sp = std::sin(psi);
  // Undo the yaw so that b = Ry(theta) Rx(phi) e_z = (s_theta c_phi, -s_phi, c_theta c_phi).
  const double bx = cp * b.x() + sp * b.y();
  const double by = -sp * b.x() + cp * b.y();
  const double bz = b.z();
  FlatAttitude out;
  out.theta = std::atan2(bx, bz);
  out.phi = std::atan2(-by, std::hypot(bx, bz));
  out.thrust = norm;
  return out;
}

}  // namespace formation
