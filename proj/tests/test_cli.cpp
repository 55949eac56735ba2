#include "formation/scenario_io.hpp"
#include "formation/trace_io.hpp"

#include "catch_amalgamated.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace formation;

namespace {

const std::string kCli = FORMATION_CLI;
const std::string kScenarios = FORMATION_SCENARIO_DIR;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

fs::path scratch(const std::string& tag) {
  std::random_device rd;
  auto dir = fs::temp_directory_path() / ("formation_cli_" + tag + "_" + std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Hexagon shortened so the end-to-end cases stay quick.
std::string short_hexagon(const fs::path& dir, int steps, const std::string& extra = "") {
  auto doc = json::parse(slurp(kScenarios + "/hexagon.json"));
  doc["control"]["duration_steps"] = steps;
  if (!extra.empty()) doc.merge_patch(json::parse(extra));
  const auto path = dir / "scenario.json";
  std::ofstream(path) << doc.dump(2);
  return path.string();
}

}  // namespace

TEST_CASE("check exit codes", "[cli]") {
  const auto dir = scratch("check");
  CHECK(run_cli("check --scenario " + kScenarios + "/hexagon.json") == 0);
  CHECK(run_cli("check --scenario " + kScenarios + "/mas.json") == 0);
  CHECK(run_cli("check --scenario " + kScenarios + "/hexagon.json --override control.gamma=25") == 1);

  std::ofstream(dir / "broken.json") << "{ \"schema_version\": 1, ";
  CHECK(run_cli("check --scenario " + (dir / "broken.json").string()) == 2);
  CHECK(run_cli("check --scenario " + kScenarios + "/hexagon.json --override control.nope=1") == 2);
  CHECK(run_cli("frobnicate") == 2);
  fs::remove_all(dir);
}

TEST_CASE("run writes outputs and echoes overrides", "[cli]") {
  const auto dir = scratch("run");
  const auto sc = short_hexagon(dir, 40);
  const auto out = dir / "out";
  REQUIRE(run_cli("run --quiet --scenario " + sc + " --out " + out.string() + " --override control.N=5") == 0);
  for (const char* f : {"trace.csv", "metrics.csv", "constraints.csv", "header.json"}) CHECK(fs::exists(out / f));

  const auto header = json::parse(slurp(out / "header.json"));
  CHECK(header["overrides"] == json::array({"control.N=5"}));
  CHECK(header["scenario"]["control"]["N"] == 5);

  const auto trace = read_csv(out / "trace.csv");
  CHECK(trace.header == trace_columns());
  CHECK(trace.rows.size() == 40u * 7u);
  fs::remove_all(dir);
}

TEST_CASE("overlapping starts are reported", "[cli]") {
  const auto dir = scratch("overlap");
  const auto sc = short_hexagon(dir, 5);
  auto doc = json::parse(slurp(sc));
  doc["initial_states"][1]["p"] = doc["initial_states"][0]["p"];
  std::ofstream(dir / "overlap.json") << doc.dump();
  CHECK(run_cli("run --quiet --scenario " + (dir / "overlap.json").string() + " --out " + (dir / "o").string()) == 1);
  const std::string cmd = kCli + " run --quiet --force --scenario " + (dir / "overlap.json").string() + " --out " +
                          (dir / "o").string() + " > " + (dir / "log.txt").string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(raw) == 1);
  CHECK(slurp(dir / "log.txt").find("SAFETY VIOLATION") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("export projections", "[cli]") {
  const auto dir = scratch("export");
  const auto sc = short_hexagon(dir, 10);
  const auto out = dir / "run";
  REQUIRE(run_cli("run --quiet --scenario " + sc + " --out " + out.string()) == 0);

  REQUIRE(run_cli("export --quiet --trace " + out.string() + " --kind metrics --out " + (dir / "e").string()) == 0);
  auto t = read_csv(dir / "e" / "metrics.csv");
  std::vector<std::string> expected{"k", "eps_f"};
  for (int i = 1; i <= 7; ++i) expected.push_back("eps_v_" + std::to_string(i));
  CHECK(t.header == expected);
  CHECK(t.rows.size() == 10);

  REQUIRE(run_cli("export --quiet --trace " + out.string() + " --kind clearances --out " + (dir / "e").string()) == 0);
  t = read_csv(dir / "e" / "clearances.csv");
  CHECK(t.header == std::vector<std::string>{"k", "min_d_ij", "min_d_im"});

  REQUIRE(run_cli("export --quiet --trace " + (out / "trace.csv").string() + " --kind trajectory3d --out " +
                  (dir / "e").string()) == 0);
  t = read_csv(dir / "e" / "trajectory3d.csv");
  CHECK(t.header == std::vector<std::string>{"k", "vehicle_id", "x", "y", "z"});
  CHECK(t.rows.size() == 70);

  CHECK(run_cli("export --trace " + out.string() + " --kind movie --out " + (dir / "e").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("repeated runs give byte-identical CSVs", "[cli]") {
  const auto dir = scratch("repeat");
  const auto sc = short_hexagon(dir, 30);
  REQUIRE(run_cli("run --quiet --scenario " + sc + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("run --quiet --scenario " + sc + " --out " + (dir / "b").string()) == 0);
  for (const char* f : {"trace.csv", "metrics.csv", "constraints.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  fs::remove_all(dir);
}
