#pragma once

// Experiment runner: grid of GMM cells x runs x modes, summary/trace/record output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtf/gmm.hpp"
#include "vtf/rlbfgs.hpp"

namespace vtf::harness {

/// Sample size rule N = round(coefficient * n^power).
struct SampleSizeRule {
  double coefficient = 10.0;
  double power = 2.0;

  std::size_t operator()(std::size_t n) const;
};

/// Cells with n at or above this are flagged long-running.
inline constexpr std::size_t kLongRunningDim = 100;

struct ExperimentConfig {
  std::vector<std::size_t> components{2};
  std::vector<std::size_t> dims{2};
  SampleSizeRule sample_size;
  std::vector<gmm::SeparationLevel> separations{gmm::SeparationLevel::High};
  std::vector<MappingMode> modes{MappingMode::InverseSqrt, MappingMode::Cholesky, MappingMode::Classical};
  std::vector<StepRule> step_rules{StepRule::ExpMap};
  std::size_t runs = 10;
  std::uint64_t base_seed = 0;
  SolverConfig solver;
  gmm::KMeansOptions kmeans;
  gmm::SampleOptions sampling;
  std::string out_dir = "results";
  std::size_t jobs = 1;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// One (K, n, N, separation, step rule) grid point.
struct Cell {
  std::size_t K = 0;
  std::size_t n = 0;
  std::size_t N = 0;
  gmm::SeparationLevel separation = gmm::SeparationLevel::High;
  StepRule step_rule = StepRule::ExpMap;

  bool long_running() const { return n >= kLongRunningDim; }
  auto key() const { return std::tuple(K, n, N, separation, step_rule); }
};

std::vector<Cell> expand_cells(const ExperimentConfig& config);

struct RunRecord {
  Cell cell;
  MappingMode mode = MappingMode::InverseSqrt;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double conv_time_s = 0.0;
  double iter_time_s = 0.0;
  double last_cost = 0.0;
  double final_grad_norm = 0.0;
  std::string termination;  // Converged | MaxIters | LineSearchFailed | Error
  std::string error;        // message when termination == Error
  std::vector<double> cost_trace;

  /// Failed runs are excluded from summary averages and counted in `failures`.
  bool failed() const { return termination != "Converged" && termination != "MaxIters"; }
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

/// Per-run seed shared by every mode and step rule of a (K, n, N, separation, run).
std::uint64_t run_seed(std::uint64_t base_seed, const Cell& cell, std::size_t run);

using RecordCallback = std::function<void(const RunRecord&)>;

/// Run every cell and run. Data and the K-means++ start are generated once per
/// (cell, run) and shared by all modes. Records are ordered by (cell, run, mode)
/// regardless of the number of worker threads.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const RecordCallback& on_record = {});

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{
      "K", "n", "N", "separation", "algorithm", "iters_mean", "iters_std", "conv_time_mean",
      "conv_time_std", "iter_time_mean", "iter_time_std", "last_cost_mean", "last_cost_std", "failures"};
  return cols;
}

/// Algorithm label used in the summary, e.g. "isr/exp".
std::string algorithm_label(MappingMode mode, StepRule rule);

/// One row per (cell, mode) in first-appearance order; sample standard deviations.
std::string emit_summary(const std::vector<RunRecord>& records);

/// Drop the conv_time/iter_time columns from a summary CSV.
std::string strip_timing_columns(const std::string& summary_csv);

/// Write one iteration,cost_diff file per run into `dir`. The difference is
/// taken against the lowest finite final cost across all modes and runs of
/// the cell. Returns the written paths in record order.
std::vector<std::filesystem::path> emit_traces(const std::vector<RunRecord>& records,
                                               const std::filesystem::path& dir);

nlohmann::json records_document(const ExperimentConfig& config, const std::vector<RunRecord>& records);
std::vector<RunRecord> load_records(const std::filesystem::path& records_json);

/// summary.csv, traces/ and records.json under `dir`.
void write_outputs(const ExperimentConfig& config, const std::vector<RunRecord>& records,
                   const std::filesystem::path& dir);

}  // namespace vtf::harness
