#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "vtf/harness.hpp"

using namespace vtf;
using namespace vtf::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.components = {2};
  c.dims = {2};
  c.separations = {gmm::SeparationLevel::Mid};
  c.runs = 3;
  c.base_seed = 99;
  return c;
}

RunRecord record(std::size_t iters, double cost, std::string termination = "Converged") {
  RunRecord r;
  r.cell = {2, 2, 40, gmm::SeparationLevel::High, StepRule::ExpMap};
  r.iterations = iters;
  r.conv_time_s = 0.1 * double(iters);
  r.iter_time_s = 0.1;
  r.last_cost = cost;
  r.termination = std::move(termination);
  r.cost_trace = std::vector<double>(iters + 1, cost);
  return r;
}

std::vector<std::vector<std::string>> parse(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vtf_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("one cell, one run, one mode gives one record") {
  auto c = small_config();
  c.runs = 1;
  c.modes = {MappingMode::InverseSqrt};
  const auto records = run_experiment(c);
  REQUIRE(records.size() == 1);
  CHECK(records[0].cell.N == 40);
  CHECK(records[0].cost_trace.size() == records[0].iterations + 1);
  CHECK(records[0].iter_time_s == doctest::Approx(records[0].conv_time_s / double(records[0].iterations)));
}

TEST_CASE("records are deterministic and ordered by cell, run, mode") {
  auto c = small_config();
  c.step_rules = {StepRule::ExpMap, StepRule::TaylorRetraction};
  const auto a = run_experiment(c);
  c.jobs = 3;
  const auto b = run_experiment(c);
  REQUIRE(a.size() == 2 * 3 * 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].cell.key() == b[i].cell.key());
    CHECK(a[i].mode == b[i].mode);
    CHECK(a[i].run == b[i].run);
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].iterations == b[i].iterations);
    CHECK(a[i].cost_trace == b[i].cost_trace);
    CHECK(a[i].termination == b[i].termination);
  }
  CHECK(a[0].mode == MappingMode::InverseSqrt);
  CHECK(a[1].mode == MappingMode::Cholesky);
  CHECK(a[2].mode == MappingMode::Classical);
  CHECK(a[3].run == 1);
  CHECK(strip_timing_columns(emit_summary(a)) == strip_timing_columns(emit_summary(b)));
}

TEST_CASE("modes and step rules of a run share data and start point") {
  auto c = small_config();
  c.step_rules = {StepRule::ExpMap, StepRule::TaylorRetraction};
  const auto records = run_experiment(c);
  for (const auto& r : records) {
    for (const auto& o : records) {
      if (r.run != o.run) continue;
      CHECK(r.seed == o.seed);
      CHECK(r.cost_trace.front() == o.cost_trace.front());
    }
  }
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) seeds.insert(r.seed);
  CHECK(seeds.size() == c.runs);
}

TEST_CASE("run seeds depend on cell and run index") {
  const Cell a{2, 2, 40, gmm::SeparationLevel::High, StepRule::ExpMap};
  Cell b = a;
  b.step_rule = StepRule::TaylorRetraction;
  CHECK(run_seed(5, a, 0) == run_seed(5, b, 0));
  CHECK(run_seed(5, a, 0) != run_seed(5, a, 1));
  CHECK(run_seed(5, a, 0) != run_seed(6, a, 0));
  Cell c = a;
  c.separation = gmm::SeparationLevel::Low;
  CHECK(run_seed(5, a, 0) != run_seed(5, c, 0));
}

TEST_CASE("summary schema and statistics") {
  const auto one = parse(emit_summary({record(12, 3.5)}));
  REQUIRE(one.size() == 2);
  CHECK(one[0] == summary_columns());
  CHECK(one[1][4] == "isr/exp");
  CHECK(one[1][5] == "12");
  CHECK(one[1][6] == "0");
  CHECK(one[1][12] == "0");
  CHECK(one[1][13] == "0");

  const auto two = parse(emit_summary({record(10, 1.0), record(20, 3.0)}));
  REQUIRE(two.size() == 2);
  CHECK(two[1][5] == "15");
  CHECK(std::stod(two[1][6]) == doctest::Approx(7.0710678).epsilon(1e-7));
  CHECK(two[1][11] == "2");

  const auto failed = parse(emit_summary({record(10, 1.0), record(20, 3.0), record(3, -50.0, "LineSearchFailed")}));
  CHECK(failed[1][5] == "15");
  CHECK(failed[1][13] == "1");

  const std::string stripped = strip_timing_columns(emit_summary({record(10, 1.0)}));
  CHECK(stripped.find("conv_time") == std::string::npos);
  CHECK(stripped.find("iter_time") == std::string::npos);
  CHECK(parse(stripped)[0].size() == summary_columns().size() - 4);
}

TEST_CASE("summary recomputes from the records document") {
  const auto c = small_config();
  const auto records = run_experiment(c);
  const fs::path dir = scratch("records");
  write_outputs(c, records, dir);
  const auto loaded = load_records(dir / "records.json");
  REQUIRE(loaded.size() == records.size());
  CHECK(emit_summary(loaded) == emit_summary(records));
  std::ifstream in(dir / "summary.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == emit_summary(records));
  fs::remove_all(dir);
}

TEST_CASE("traces") {
  auto c = small_config();
  c.separations = {gmm::SeparationLevel::Low};
  const auto records = run_experiment(c);
  const fs::path dir = scratch("traces");
  const auto paths = emit_traces(records, dir);
  REQUIRE(paths.size() == records.size());
  double best = INFINITY;
  for (const auto& r : records) best = std::min(best, r.last_cost);
  bool saw_zero = false;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::ifstream in(paths[i]);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,cost_diff");
    std::vector<double> diffs;
    while (std::getline(in, line)) diffs.push_back(std::stod(line.substr(line.find(',') + 1)));
    CHECK(diffs.size() == records[i].iterations + 1);
    for (std::size_t t = 1; t < diffs.size(); ++t) CHECK(diffs[t] <= diffs[t - 1] + 1e-9);
    CHECK(diffs.back() >= 0.0);
    if (records[i].last_cost == best) {
      CHECK(diffs.back() == 0.0);
      saw_zero = true;
    }
  }
  CHECK(saw_zero);
  fs::remove_all(dir);
}

TEST_CASE("config parsing") {
  const auto j = nlohmann::json::parse(R"({
    "grid": {"K": [2, 5], "n": [2, 10], "N_rule": {"coefficient": 10, "power": 2},
             "separations": ["low", "mid", "high"], "modes": ["isr", "cholesky", "classical"],
             "step_rules": ["exp", "taylor"]},
    "runs": 10, "seed": 3, "solver": {"memory_window": 5, "classical_transport": "cholesky_factor"}
  })");
  const auto c = ExperimentConfig::from_json(j);
  CHECK(expand_cells(c).size() == 2 * 2 * 3 * 2);
  CHECK(expand_cells(c)[0].N == 40);
  CHECK(c.sample_size(10) == 1000);
  CHECK(c.solver.memory_window == 5);
  CHECK(c.solver.classical_transport == ClassicalTransport::CholeskyFactor);
  CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"grid": {"k": [2]}})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"grid": {"modes": ["newton"]}})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"runs": 0})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"solver": {"c1": 0.95}})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"runs": "ten"})")), ConfigError);
}

TEST_CASE("shipped configs load") {
  const fs::path root = fs::path(__FILE__).parent_path().parent_path() / "configs";
  const auto grid = ExperimentConfig::load(root / "full_grid.json");
  CHECK(expand_cells(grid).size() == 24);
  const auto desk = ExperimentConfig::load(root / "desk_cell.json");
  CHECK(expand_cells(desk).size() == 1);
  const auto big = ExperimentConfig::load(root / "large_n100.json");
  for (const auto& cell : expand_cells(big)) {
    CHECK(cell.long_running());
    CHECK(cell.N == 1000000);
  }
  CHECK_THROWS_AS(ExperimentConfig::load(root / "missing.json"), ConfigError);
}
