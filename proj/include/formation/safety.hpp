#pragma once

// Collision-avoidance geometry: cylindrical obstacles, constant-velocity
// neighbor prediction with a growing error ball, the outer ellipsoid of the
// ball (+) collision-ellipsoid Minkowski sum, and the first-collision scan.

#include "formation/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace formation {

struct Cylinder {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;  // minimum safety distance, inflation included
};

/// Axis-aligned ellipsoid centered at the origin, given by its semi-axes.
struct Ellipsoid {
  Vec3 semi_axes{1.0, 1.0, 1.0};

  /// ||diag(semi_axes)^-1 s||
  double scaled_norm(const Vec3& s) const { return s.cwiseQuotient(semi_axes).norm(); }

  void validate() const {
    if (!(semi_axes.array() > 0.0).all()) throw ConfigError("ellipsoid semi-axes must be > 0");
    if (semi_axes.x() != semi_axes.y() || !(semi_axes.x() < semi_axes.z())) {
      throw ConfigError("collision ellipsoid must satisfy theta_a == theta_b < theta_c");
    }
  }
};

/// How the Minkowski-sum weight beta is chosen.
enum class BetaRule {
  kTraceOptimal,  // beta = sqrt(tr C / tr B): minimizes the trace of the bound
  kAsPrinted,     // beta = sqrt(tr B / tr C)
};

struct NeighborPrediction {
  int neighbor_id = -1;
  std::vector<Vec3> positions;
  std::vector<double> radii;
  std::vector<Ellipsoid> outer;
};

inline std::vector<Vec3> predict_neighbor(const Vec3& p, const Vec3& v, double h, int horizon) {
  if (horizon < 1) throw ConfigError("predict_neighbor: horizon must be >= 1");
  std::vector<Vec3> out;
  out.reserve(horizon + 1);
  for (int l = 0; l <= horizon; ++l) out.push_back(p + v * (l * h));
  return out;
}

/// 0.5 * t_max * min(l h, m_r h)^2
inline double error_radius(double t_max, int l, double h, int m_r) {
  const double t = std::min(l, m_r) * h;
  return 0.5 * t_max * t * t;
}

/// Outer ellipsoid of (ball of radius r) (+) collision, using shape matrices of squared semi-axes.
inline Ellipsoid outer_ellipsoid(double radius, const Ellipsoid& collision,
                                 BetaRule rule = BetaRule::kTraceOptimal) {
  if (radius <= 0.0) return collision;
  const double tr_ball = 3.0 * radius * radius;
  const double tr_coll = collision.semi_axes.squaredNorm();
  const double beta = rule == BetaRule::kTraceOptimal ? std::sqrt(tr_coll / tr_ball)
                                                      : std::sqrt(tr_ball / tr_coll);
  Ellipsoid out;
  out.semi_axes = ((1.0 + beta) * radius * radius +
                   (1.0 + 1.0 / beta) * collision.semi_axes.array().square())
                      .sqrt()
                      .matrix();
  return out;
}

inline NeighborPrediction predict_neighbor_region(int neighbor_id, const Vec3& p, const Vec3& v, double h,
                                                  int horizon, double t_max, int m_r,
                                                  const Ellipsoid& collision, BetaRule rule) {
  NeighborPrediction np;
  np.neighbor_id = neighbor_id;
  np.positions = predict_neighbor(p, v, h, horizon);
  np.radii.reserve(horizon + 1);
  np.outer.reserve(horizon + 1);
  for (int l = 0; l <= horizon; ++l) {
    np.radii.push_back(error_radius(t_max, l, h, m_r));
    np.outer.push_back(outer_ellipsoid(np.radii.back(), collision, rule));
  }
  return np;
}

/// Smallest l whose own planned position lies strictly inside the neighbor's outer ellipsoid.
inline std::optional<int> first_collision(std::span<const Vec3> own_plan, const NeighborPrediction& neighbor) {
  const auto len = std::min({own_plan.size(), neighbor.positions.size(), neighbor.outer.size()});
  for (std::size_t l = 0; l < len; ++l) {
    if (neighbor.outer[l].scaled_norm(own_plan[l] - neighbor.positions[l]) < 1.0) {
      return static_cast<int>(l);
    }
  }
  return std::nullopt;
}

/// Horizontal distance to the cylinder surface; negative inside.
inline double obstacle_clearance(const Vec3& p, const Cylinder& cyl) {
  return (p.head<2>() - cyl.center).norm() - cyl.radius;
}

/// Obstacles whose surface lies within the perception radius of p.
inline std::vector<Cylinder> perceived_obstacles(const Vec3& p, std::span<const Cylinder> all,
                                                 double perception_radius) {
  std::vector<Cylinder> out;
  for (const auto& c : all) {
    if (obstacle_clearance(p, c) <= perception_radius) out.push_back(c);
  }
  return out;
}

}  // namespace formation
