#include "formation/reference_model.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace formation;
using Catch::Approx;

namespace {

GraphAnalysis analysis_of(int n, const std::vector<std::tuple<int, int, double>>& edges) {
  return analyze(FormationGraph::from_edges(n, edges, std::vector<Vec3>(n, Vec3::Zero()), Vec3::Zero()));
}

}  // namespace

TEST_CASE("formation input", "[reference]") {
  const Vec3 v_star{0.5, 0.0, 0.0};
  CHECK(formation_input(v_star, Vec3::Zero(), {}, v_star, 2.0).norm() == 0.0);

  // p_j - p_i - (delta_j - delta_i) = (1,0,0)
  const Vec3 d_i{0.0, 1.0, 0.0}, d_j{2.0, 0.0, 0.0};
  std::vector<NeighborMeasurement> nb{{1, Vec3{3.0, -1.0, 0.0}, 1.0, d_j}};
  CHECK((formation_input(v_star, d_i, nb, v_star, 2.0) - Vec3{1.0, 0.0, 0.0}).norm() < 1e-15);

  nb[0].relative_position = d_j - d_i;
  CHECK((formation_input(v_star + Vec3{0.5, 0, 0}, d_i, nb, v_star, 2.0) - Vec3{-2.0, 0.0, 0.0}).norm() < 1e-15);
}

TEST_CASE("reference step", "[reference]") {
  auto r = step({Vec3::Zero(), Vec3{1, 0, 0}}, Vec3::Zero(), 0.05);
  CHECK(r.z.isApprox(Vec3{0.05, 0, 0}));
  CHECK(r.z_v == Vec3{1, 0, 0});

  r = step({Vec3::Zero(), Vec3::Zero()}, Vec3{0, 0, 2}, 0.05);
  CHECK(r.z_v.isApprox(Vec3{0, 0, 0.1}));

  ReferenceOutput s{Vec3::Zero(), Vec3{1, 0, 0}};
  for (int k = 0; k < 20; ++k) s = step(s, Vec3::Zero(), 0.05);
  CHECK((s.z - Vec3{1, 0, 0}).norm() < 1e-12);
}

TEST_CASE("horizon prediction", "[reference]") {
  const auto zero_input = predict_horizon({Vec3{1, 2, 3}, Vec3{0.5, 0, -0.1}}, Vec3::Zero(), 0.05, 10);
  REQUIRE(zero_input.size() == 11);
  for (int l = 0; l <= 10; ++l) {
    CHECK((zero_input[l].z - (Vec3{1, 2, 3} + l * 0.05 * Vec3{0.5, 0, -0.1})).norm() < 1e-12);
  }

  const auto two = predict_horizon({}, Vec3{1, 0, 0}, 0.05, 2);
  REQUIRE(two.size() == 3);
  CHECK((two[2].z - Vec3{0.0025, 0, 0}).norm() < 1e-15);
  CHECK((two[2].z_v - Vec3{0.1, 0, 0}).norm() < 1e-15);

  const ReferenceOutput start{Vec3{4, 5, 6}, Vec3{7, 8, 9}};
  const auto seq = predict_horizon(start, Vec3{1, 1, 1}, 0.05, 7);
  CHECK(seq.size() == 8);
  CHECK(seq[0].z == start.z);
  CHECK(seq[0].z_v == start.z_v);
  CHECK_THROWS_AS(predict_horizon(start, Vec3::Zero(), 0.05, 0), ConfigError);
}

TEST_CASE("iteration matrix for a single vehicle", "[reference][xi]") {
  GraphAnalysis a;
  a.laplacian = Eigen::MatrixXd::Zero(1, 1);
  a.degree = Eigen::VectorXd::Zero(1);
  const auto xi = build_xi(a, 2.0, 0.05);
  Eigen::Matrix2d expected;
  expected << 0.9, 0.1, 0.1, 0.9;
  CHECK((xi.entries - expected).norm() < 1e-15);

  const auto rep = spectral_report(xi);
  CHECK(rep.eigenvalue_one_multiplicity == 1);
  CHECK(rep.max_other_modulus == Approx(0.8).margin(1e-12));
}

TEST_CASE("two disconnected groups have a repeated unit eigenvalue", "[reference][xi]") {
  const auto a = analysis_of(4, {{0, 1, 1}, {1, 0, 1}, {2, 3, 1}, {3, 2, 1}});
  CHECK_FALSE(a.has_spanning_tree);
  const auto rep = spectral_report(build_xi(a, 2.0, 0.05));
  CHECK(rep.eigenvalue_one_multiplicity >= 2);
}

TEST_CASE("iteration matrix is stochastic for admissible gamma", "[reference][xi][property]") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> w(0.1, 1.0);
  std::bernoulli_distribution keep(0.3);
  int tested = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 6;
    std::vector<std::tuple<int, int, double>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1, w(rng));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && j != i + 1 && keep(rng)) edges.emplace_back(i, j, w(rng));
    const auto a = analysis_of(n, edges);
    const double gamma = std::max(std::sqrt(a.max_degree), 0.5) * 1.1;
    if (!validate_gamma(a, gamma, 0.05).valid) continue;
    const auto xi = build_xi(a, gamma, 0.05);
    CHECK(xi.max_row_sum_residual() <= 1e-10);
    CHECK(xi.entries.minCoeff() >= 0.0);
    const auto rep = spectral_report(xi);
    CHECK(rep.eigenvalue_one_multiplicity == 1);
    CHECK(rep.max_other_modulus < 1.0);
    ++tested;
  }
  CHECK(tested > 90);
}

TEST_CASE("reference network converges to the formation", "[reference][property]") {
  // Chain plus back edge; offsets on a line.
  const int n = 4;
  const auto g = FormationGraph::from_edges(n, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 0, 1}},
                                            {Vec3{0, 0, 1}, Vec3{1, 0, 1}, Vec3{2, 0, 1}, Vec3{3, 0, 1}},
                                            Vec3{0.5, 0, 0});
  std::vector<ReferenceOutput> refs{{Vec3{0, 3, 0}, Vec3::Zero()},
                                    {Vec3{-1, 0, 2}, Vec3{0, 1, 0}},
                                    {Vec3{4, 1, 0}, Vec3::Zero()},
                                    {Vec3{0, -2, 5}, Vec3{0, 0, -1}}};
  for (int k = 0; k < 5000; ++k) {
    std::vector<ReferenceOutput> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<NeighborMeasurement> nb;
      for (int j : g.neighbors(i)) nb.push_back({j, refs[j].z - refs[i].z, g.adjacency(i, j), g.offsets[j]});
      next[i] = step(refs[i], formation_input(refs[i].z_v, g.offsets[i], nb, g.maneuver_velocity, 2.0), 0.05);
    }
    refs = next;
  }
  for (int i = 0; i < n; ++i) {
    CHECK((refs[i].z_v - g.maneuver_velocity).norm() < 1e-6);
    for (int j = 0; j < n; ++j) CHECK(((refs[i].z - refs[j].z) - (g.offsets[i] - g.offsets[j])).norm() < 1e-6);
  }
}
