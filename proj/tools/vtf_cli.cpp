// vtf-rlbfgs: run GMM fitting experiments, summarize records, run invariant checks.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vtf/checks.hpp"
#include "vtf/harness.hpp"

namespace fs = std::filesystem;
using namespace vtf;

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

int cmd_run(const std::string& config_path, std::optional<std::string> out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> jobs, bool quiet) {
  auto config = harness::ExperimentConfig::load(config_path);
  if (!out) out = env("VTF_OUT");
  if (!jobs) {
    if (auto j = env("VTF_JOBS")) {
      try {
        jobs = std::stoul(*j);
      } catch (const std::exception&) {
        throw ConfigError("VTF_JOBS must be a positive integer, got '" + *j + "'");
      }
    }
  }
  if (out) config.out_dir = *out;
  if (seed) config.base_seed = *seed;
  if (jobs) config.jobs = *jobs;
  config.validate();

  for (const auto& cell : harness::expand_cells(config)) {
    if (cell.long_running()) {
      std::fprintf(stderr, "note: cell K=%zu n=%zu N=%zu is long-running\n", cell.K, cell.n, cell.N);
    }
  }

  const auto records = harness::run_experiment(config, [&](const harness::RunRecord& r) {
    if (quiet) return;
    std::fprintf(stderr, "K=%zu n=%zu %s %s run %zu: %zu iters, %s, cost %.10g\n", r.cell.K, r.cell.n,
                 std::string(gmm::to_string(r.cell.separation)).c_str(),
                 harness::algorithm_label(r.mode, r.cell.step_rule).c_str(), r.run, r.iterations,
                 r.termination.c_str(), r.last_cost);
  });
  harness::write_outputs(config, records, config.out_dir);
  std::cout << harness::emit_summary(records);
  std::fprintf(stderr, "wrote %s\n", fs::path(config.out_dir).string().c_str());
  return 0;
}

int cmd_summarize(const std::string& records_dir) {
  const fs::path dir(records_dir);
  const fs::path file = fs::is_directory(dir) ? dir / "records.json" : dir;
  const auto records = harness::load_records(file);
  if (records.empty()) throw ConfigError("no records in " + file.string());
  const std::string summary = harness::emit_summary(records);
  const fs::path target = file.parent_path() / "summary.csv";
  std::ofstream(target) << summary;
  std::cout << summary;
  return 0;
}

int cmd_check(std::uint64_t seed, int trials) {
  const auto results = checks::run_checks({seed, trials});
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s  %-44s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failed += r.passed ? 0 : 1;
  }
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemannian LBFGS on SPD manifolds with mapped tangent vectors: GMM experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment grid from a JSON config");
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool quiet = false;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (env VTF_OUT)");
  run->add_option("--seed", seed, "Base RNG seed, overrides the config");
  run->add_option("--jobs", jobs, "Worker threads (env VTF_JOBS)")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "No per-run progress on stderr");

  auto* summarize = app.add_subcommand("summarize", "Rebuild summary.csv from records.json");
  std::string records_dir;
  summarize->add_option("--records", records_dir, "Directory holding records.json")->required();

  auto* check = app.add_subcommand("check", "Run the invariant and property suite");
  std::uint64_t check_seed = 1;
  int trials = 50;
  check->add_option("--seed", check_seed, "RNG seed");
  check->add_option("--trials", trials, "Random trials per check")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out, seed, jobs, quiet);
    if (*summarize) return cmd_summarize(records_dir);
    if (*check) return cmd_check(check_seed, trials);
  } catch (const vtf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
