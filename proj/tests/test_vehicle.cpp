#include "formation/vehicle.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace formation;
using Catch::Approx;

namespace {

const VehicleParams kParams{};

VehicleState hover_at(const Vec3& p) {
  VehicleState s;
  s.p = p;
  return s;
}

}  // namespace

TEST_CASE("rotation matrix", "[vehicle]") {
  CHECK(rotation_matrix(0, 0, 0).isApprox(Mat3::Identity()));

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Mat3 r = rotation_matrix(ang(rng), ang(rng), ang(rng));
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == Approx(1.0).margin(1e-12));
  }

  const Vec3 z = rotation_matrix(0.1, -0.2, 0.3) * Vec3::UnitZ();
  CHECK(z.z() > 0.0);
  CHECK((z - thrust_axis(0.1, -0.2, 0.3)).norm() < 1e-15);

  // Z-Y-X composition from elementary rotations.
  const double phi = 0.3, theta = -0.4, psi = 1.1;
  const Mat3 zyx = (Eigen::AngleAxisd(psi, Vec3::UnitZ()) * Eigen::AngleAxisd(theta, Vec3::UnitY()) *
                    Eigen::AngleAxisd(phi, Vec3::UnitX()))
                       .toRotationMatrix();
  CHECK((rotation_matrix(phi, theta, psi) - zyx).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("continuous dynamics", "[vehicle]") {
  const auto hover = hover_at(Vec3{1, 2, 3});
  const auto d = continuous_dynamics(hover, ControlInput{kParams.gravity, 0, 0, 0}, kParams);
  CHECK(d.pack().cwiseAbs().maxCoeff() == 0.0);

  const auto up = continuous_dynamics(hover, ControlInput{kParams.gravity + 1.0, 0, 0, 0}, kParams);
  CHECK((up.v - Vec3{0, 0, 1}).norm() < 1e-14);

  const auto roll = continuous_dynamics(hover, ControlInput{kParams.gravity, 0.4, 0, 0}, kParams);
  CHECK(roll.phi == Approx(3.448).margin(5e-4));
  CHECK(roll.phi == Approx(0.4 / 0.116));

  VehicleState moving = hover;
  moving.v = Vec3{1, -2, 0.5};
  const auto drag = continuous_dynamics(moving, ControlInput{kParams.gravity, 0, 0, 0}, kParams);
  CHECK((drag.v + Vec3{0.1, -0.2, 0.1}).norm() < 1e-14);
  CHECK(drag.p == moving.v);
}

TEST_CASE("euler step", "[vehicle]") {
  const auto hover = hover_at(Vec3{-4, 0.5, 1.5});
  CHECK(euler_step(hover, ControlInput{kParams.gravity, 0, 0, 0}, 0.05, kParams) == hover);

  const auto climb = euler_step(hover, ControlInput{kParams.gravity + 1.0, 0, 0, 0}, 0.05, kParams);
  CHECK(climb.v.z() == Approx(0.05).margin(1e-14));

  auto yawed = hover;
  yawed.psi = 0.2;
  const auto next = euler_step(yawed, ControlInput{kParams.gravity, 0, 0, 0.1}, 0.05, kParams);
  CHECK(next.psi == Approx(0.205).margin(1e-15));
}

TEST_CASE("analytic Jacobians match finite differences", "[vehicle][property]") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    StateVec x;
    for (int i = 0; i < kStateDim; ++i) x(i) = u01(rng);
    InputVec u;
    u << 10 + 3 * u01(rng), 0.4 * u01(rng), 0.4 * u01(rng), 0.1 * u01(rng);
    const auto j = dynamics_jacobians(x, u, kParams);
    const double eps = 1e-6;
    for (int c = 0; c < kStateDim; ++c) {
      StateVec dp = x, dm = x;
      dp(c) += eps;
      dm(c) -= eps;
      const StateVec fd = (continuous_dynamics(dp, u, kParams) - continuous_dynamics(dm, u, kParams)) / (2 * eps);
      CHECK((fd - j.a.col(c)).norm() < 1e-6);
    }
    for (int c = 0; c < kInputDim; ++c) {
      InputVec dp = u, dm = u;
      dp(c) += eps;
      dm(c) -= eps;
      const StateVec fd = (continuous_dynamics(x, dp, kParams) - continuous_dynamics(x, dm, kParams)) / (2 * eps);
      CHECK((fd - j.b.col(c)).norm() < 1e-6);
    }
  }
}

TEST_CASE("flat reference attitude", "[vehicle]") {
  auto a = flat_reference_attitude(Vec3::Zero(), Vec3::Zero(), 0.0, kParams);
  CHECK(a.phi == 0.0);
  CHECK(a.theta == 0.0);
  CHECK(a.thrust == Approx(kParams.gravity));

  a = flat_reference_attitude(Vec3{0, 0, 1}, Vec3::Zero(), 0.0, kParams);
  CHECK(a.phi == 0.0);
  CHECK(a.theta == 0.0);
  CHECK(a.thrust == Approx(kParams.gravity + 1.0));

  a = flat_reference_attitude(Vec3{1, 0, 0}, Vec3::Zero(), 0.0, kParams);
  CHECK(a.theta == Approx(std::atan(1.0 / kParams.gravity)));
  CHECK(a.theta == Approx(0.1016).margin(1e-4));
  CHECK(a.phi == Approx(0.0).margin(1e-15));

  CHECK_THROWS_AS(flat_reference_attitude(Vec3{0, 0, -kParams.gravity}, Vec3::Zero(), 0.0, kParams),
                  std::domain_error);
}

TEST_CASE("flatness round trip reproduces the demanded force", "[vehicle][property]") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0;
  while (tested < 500) {
    const Vec3 accel{4 * u(rng), 4 * u(rng), 4 * u(rng)};
    const Vec3 vel{2 * u(rng), 2 * u(rng), 2 * u(rng)};
    const double psi = 3 * u(rng);
    const Vec3 t = accel + Vec3::UnitZ() * kParams.gravity + kParams.damping.cwiseProduct(vel);
    if (t.z() <= 0.5 * kParams.gravity) continue;
    ++tested;
    const auto att = flat_reference_attitude(accel, vel, psi, kParams);
    // Plant acceleration at the commanded attitude and thrust.
    const Vec3 realized =
        thrust_axis(att.phi, att.theta, psi) * att.thrust - Vec3::UnitZ() * kParams.gravity - kParams.damping.cwiseProduct(vel);
    CHECK((realized - accel).norm() < 1e-9);
  }
}

TEST_CASE("invalid vehicle parameters", "[vehicle]") {
  VehicleParams p;
  p.tau_phi = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = VehicleParams{};
  p.damping.y() = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
