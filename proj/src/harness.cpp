#include "vtf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace vtf::harness {

using nlohmann::json;

std::size_t SampleSizeRule::operator()(std::size_t n) const {
  return static_cast<std::size_t>(std::llround(coefficient * std::pow(double(n), power)));
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
std::vector<T> one_or_many(const json& v) {
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

MappingMode mode_from(const std::string& s) {
  if (auto m = parse_mode(s)) return *m;
  throw ConfigError("unknown mode '" + s + "' (expected isr, cholesky or classical)");
}

StepRule rule_from(const std::string& s) {
  if (auto r = parse_step_rule(s)) return *r;
  throw ConfigError("unknown step rule '" + s + "' (expected exp or taylor)");
}

gmm::SeparationLevel separation_from(const std::string& s) {
  if (auto sep = gmm::parse_separation(s)) return *sep;
  throw ConfigError("unknown separation '" + s + "' (expected low, mid or high)");
}

ClassicalTransport transport_from(const std::string& s) {
  if (s == "eigen_root") return ClassicalTransport::EigenRoot;
  if (s == "cholesky_factor") return ClassicalTransport::CholeskyFactor;
  throw ConfigError("unknown classical_transport '" + s + "'");
}

std::string transport_name(ClassicalTransport t) {
  return t == ClassicalTransport::EigenRoot ? "eigen_root" : "cholesky_factor";
}

void read_solver(const json& j, SolverConfig& s) {
  reject_unknown_keys(j,
                      {"memory_window", "max_iters", "grad_tol", "c1", "c2", "max_linesearch_evals",
                       "min_step", "curvature_guard", "strong_wolfe", "classical_transport",
                       "armijo_slack"},
                      "solver");
  read_if(j, "memory_window", s.memory_window);
  read_if(j, "max_iters", s.max_iters);
  read_if(j, "grad_tol", s.grad_tol);
  read_if(j, "c1", s.c1);
  read_if(j, "c2", s.c2);
  read_if(j, "max_linesearch_evals", s.max_linesearch_evals);
  read_if(j, "min_step", s.min_step);
  read_if(j, "curvature_guard", s.curvature_guard);
  read_if(j, "strong_wolfe", s.strong_wolfe);
  read_if(j, "armijo_slack", s.armijo_slack);
  if (j.contains("classical_transport")) s.classical_transport = transport_from(j.at("classical_transport"));
}

json solver_json(const SolverConfig& s) {
  return {{"memory_window", s.memory_window},
          {"max_iters", s.max_iters},
          {"grad_tol", s.grad_tol},
          {"c1", s.c1},
          {"c2", s.c2},
          {"max_linesearch_evals", s.max_linesearch_evals},
          {"min_step", s.min_step},
          {"curvature_guard", s.curvature_guard},
          {"strong_wolfe", s.strong_wolfe},
          {"classical_transport", transport_name(s.classical_transport)},
          {"armijo_slack", s.armijo_slack}};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct MeanStd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trace_file_name(const RunRecord& r) {
  std::ostringstream os;
  os << "K" << r.cell.K << "_n" << r.cell.n << "_N" << r.cell.N << '_' << gmm::to_string(r.cell.separation)
     << '_' << to_string(r.cell.step_rule) << '_' << to_string(r.mode) << "_run" << r.run << ".csv";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (components.empty() || dims.empty() || separations.empty() || modes.empty() || step_rules.empty()) {
    throw ConfigError("every grid axis needs at least one value");
  }
  if (runs == 0) throw ConfigError("runs must be positive");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (!(sample_size.coefficient > 0.0)) throw ConfigError("N rule coefficient must be positive");
  for (auto k : components)
    if (k == 0) throw ConfigError("K must be positive");
  for (auto n : dims) {
    if (n == 0) throw ConfigError("n must be positive");
    for (auto k : components) {
      if (sample_size(n) < k) throw ConfigError("N rule gives fewer points than components");
    }
  }
  if (kmeans.lloyd_iterations < 0) throw ConfigError("kmeans.lloyd_iterations must be non-negative");
  solver.validate();
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown_keys(j, {"grid", "runs", "seed", "solver", "kmeans", "sampling", "out", "jobs"}, "config");
  ExperimentConfig c;
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    reject_unknown_keys(g, {"K", "n", "N_rule", "separations", "modes", "step_rules"}, "grid");
    try {
      if (g.contains("K")) c.components = one_or_many<std::size_t>(g.at("K"));
      if (g.contains("n")) c.dims = one_or_many<std::size_t>(g.at("n"));
      if (g.contains("N_rule")) {
        reject_unknown_keys(g.at("N_rule"), {"coefficient", "power"}, "grid.N_rule");
        read_if(g.at("N_rule"), "coefficient", c.sample_size.coefficient);
        read_if(g.at("N_rule"), "power", c.sample_size.power);
      }
      if (g.contains("separations")) {
        c.separations.clear();
        for (const auto& s : one_or_many<std::string>(g.at("separations"))) c.separations.push_back(separation_from(s));
      }
      if (g.contains("modes")) {
        c.modes.clear();
        for (const auto& s : one_or_many<std::string>(g.at("modes"))) c.modes.push_back(mode_from(s));
      }
      if (g.contains("step_rules")) {
        c.step_rules.clear();
        for (const auto& s : one_or_many<std::string>(g.at("step_rules"))) c.step_rules.push_back(rule_from(s));
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad grid: ") + e.what());
    }
  }
  read_if(j, "runs", c.runs);
  read_if(j, "seed", c.base_seed);
  read_if(j, "out", c.out_dir);
  read_if(j, "jobs", c.jobs);
  if (j.contains("solver")) read_solver(j.at("solver"), c.solver);
  if (j.contains("kmeans")) {
    reject_unknown_keys(j.at("kmeans"), {"lloyd_iterations"}, "kmeans");
    read_if(j.at("kmeans"), "lloyd_iterations", c.kmeans.lloyd_iterations);
  }
  if (j.contains("sampling")) {
    reject_unknown_keys(j.at("sampling"), {"log_eig_halfwidth", "box_scale", "max_trials"}, "sampling");
    read_if(j.at("sampling"), "log_eig_halfwidth", c.sampling.log_eig_halfwidth);
    read_if(j.at("sampling"), "box_scale", c.sampling.box_scale);
    read_if(j.at("sampling"), "max_trials", c.sampling.max_trials);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json seps = json::array(), ms = json::array(), rules = json::array();
  for (auto s : separations) seps.push_back(gmm::to_string(s));
  for (auto m : modes) ms.push_back(to_string(m));
  for (auto r : step_rules) rules.push_back(to_string(r));
  return {{"grid",
           {{"K", components},
            {"n", dims},
            {"N_rule", {{"coefficient", sample_size.coefficient}, {"power", sample_size.power}}},
            {"separations", seps},
            {"modes", ms},
            {"step_rules", rules}}},
          {"runs", runs},
          {"seed", base_seed},
          {"solver", solver_json(solver)},
          {"kmeans", {{"lloyd_iterations", kmeans.lloyd_iterations}}},
          {"sampling",
           {{"log_eig_halfwidth", sampling.log_eig_halfwidth},
            {"box_scale", sampling.box_scale},
            {"max_trials", sampling.max_trials}}},
          {"out", out_dir},
          {"jobs", jobs}};
}

std::vector<Cell> expand_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  for (auto k : config.components)
    for (auto n : config.dims)
      for (auto sep : config.separations)
        for (auto rule : config.step_rules) cells.push_back({k, n, config.sample_size(n), sep, rule});
  return cells;
}

// ---------------------------------------------------------------------------
// Records

json to_json(const RunRecord& r) {
  return {{"K", r.cell.K},
          {"n", r.cell.n},
          {"N", r.cell.N},
          {"separation", gmm::to_string(r.cell.separation)},
          {"step_rule", to_string(r.cell.step_rule)},
          {"mode", to_string(r.mode)},
          {"run", r.run},
          {"seed", r.seed},
          {"long_running", r.cell.long_running()},
          {"iterations", r.iterations},
          {"conv_time_s", r.conv_time_s},
          {"iter_time_s", r.iter_time_s},
          {"last_cost", r.last_cost},
          {"final_grad_norm", r.final_grad_norm},
          {"termination", r.termination},
          {"error", r.error},
          {"cost_trace", r.cost_trace}};
}

RunRecord record_from_json(const json& j) {
  try {
    RunRecord r;
    r.cell.K = j.at("K");
    r.cell.n = j.at("n");
    r.cell.N = j.at("N");
    r.cell.separation = separation_from(j.at("separation"));
    r.cell.step_rule = rule_from(j.at("step_rule"));
    r.mode = mode_from(j.at("mode"));
    r.run = j.at("run");
    r.seed = j.at("seed");
    r.iterations = j.at("iterations");
    r.conv_time_s = j.at("conv_time_s");
    r.iter_time_s = j.at("iter_time_s");
    r.last_cost = j.at("last_cost").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                              : j.at("last_cost").get<double>();
    r.final_grad_norm = j.value("final_grad_norm", 0.0);
    r.termination = j.at("termination");
    r.error = j.value("error", "");
    r.cost_trace = j.at("cost_trace").get<std::vector<double>>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run record: ") + e.what());
  }
}

std::uint64_t run_seed(std::uint64_t base_seed, const Cell& cell, std::size_t run) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t v : {std::uint64_t(cell.K), std::uint64_t(cell.n), std::uint64_t(cell.N),
                          std::uint64_t(cell.separation), std::uint64_t(run)}) {
    h = splitmix64(h ^ v);
  }
  return base_seed ^ h;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct Task {
  Cell cell;
  std::size_t run;
  std::size_t first_record;
};

void execute(const ExperimentConfig& config, const Task& task, std::vector<RunRecord>& out) {
  const std::uint64_t seed = run_seed(config.base_seed, task.cell, task.run);
  auto fill_error = [&](const std::string& what) {
    for (std::size_t m = 0; m < config.modes.size(); ++m) {
      RunRecord& r = out[task.first_record + m];
      r.termination = "Error";
      r.error = what;
      r.last_cost = std::numeric_limits<double>::quiet_NaN();
    }
  };
  for (std::size_t m = 0; m < config.modes.size(); ++m) {
    RunRecord& r = out[task.first_record + m];
    r.cell = task.cell;
    r.mode = config.modes[m];
    r.run = task.run;
    r.seed = seed;
  }

  std::optional<gmm::GmmProblem<double>> problem;
  std::optional<ProductPoint<double>> x0;
  try {
    std::mt19937_64 rng(seed);
    auto sample = gmm::sample_gmm<double>(task.cell.K, task.cell.n, task.cell.N, task.cell.separation, rng,
                                          config.sampling);
    const auto params = gmm::kmeanspp_init(sample.data, task.cell.K, rng, config.kmeans);
    x0 = gmm::init_point(params);
    problem.emplace(std::move(sample.data));
  } catch (const Error& e) {
    fill_error(e.what());
    return;
  }

  for (std::size_t m = 0; m < config.modes.size(); ++m) {
    RunRecord& r = out[task.first_record + m];
    SolverConfig sc = config.solver;
    sc.mode = config.modes[m];
    sc.step_rule = task.cell.step_rule;
    try {
      auto [xf, stats] = solve<double>(*problem, *x0, sc);
      r.iterations = stats.iterations;
      r.conv_time_s = stats.wall_time;
      r.iter_time_s = stats.per_iter_time;
      r.last_cost = stats.final_cost;
      r.final_grad_norm = stats.final_grad_norm;
      r.termination = std::string(to_string(stats.termination));
      r.cost_trace = std::move(stats.cost_trace);
    } catch (const Error& e) {
      r.termination = "Error";
      r.error = e.what();
      r.last_cost = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const RecordCallback& on_record) {
  config.validate();
  std::vector<Task> tasks;
  std::size_t total = 0;
  for (const Cell& cell : expand_cells(config)) {
    for (std::size_t run = 0; run < config.runs; ++run) {
      tasks.push_back({cell, run, total});
      total += config.modes.size();
    }
  }
  std::vector<RunRecord> records(total);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      execute(config, tasks[t], records);
      if (on_record) {
        std::lock_guard lock(callback_mutex);
        for (std::size_t m = 0; m < config.modes.size(); ++m) on_record(records[tasks[t].first_record + m]);
      }
    }
  };
  const std::size_t threads = std::min(config.jobs, tasks.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Output

std::string algorithm_label(MappingMode mode, StepRule rule) {
  return std::string(to_string(mode)) + "/" + std::string(to_string(rule));
}

std::string emit_summary(const std::vector<RunRecord>& records) {
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, gmm::SeparationLevel, StepRule, MappingMode>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    Key k{r.cell.K, r.cell.n, r.cell.N, r.cell.separation, r.cell.step_rule, r.mode};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }

  std::ostringstream os;
  const auto& cols = summary_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const Key& k : order) {
    std::vector<double> iters, conv, per_iter, cost;
    std::size_t failures = 0;
    for (const RunRecord* r : groups[k]) {
      if (r->failed()) {
        ++failures;
        continue;
      }
      iters.push_back(double(r->iterations));
      conv.push_back(r->conv_time_s);
      per_iter.push_back(r->iter_time_s);
      cost.push_back(r->last_cost);
    }
    const auto [K, n, N, sep, rule, mode] = k;
    const MeanStd a = mean_std(iters), b = mean_std(conv), c = mean_std(per_iter), d = mean_std(cost);
    os << K << ',' << n << ',' << N << ',' << gmm::to_string(sep) << ',' << algorithm_label(mode, rule) << ','
       << fmt(a.mean) << ',' << fmt(a.std) << ',' << fmt(b.mean) << ',' << fmt(b.std) << ',' << fmt(c.mean)
       << ',' << fmt(c.std) << ',' << fmt(d.mean) << ',' << fmt(d.std) << ',' << failures << '\n';
  }
  return os.str();
}

std::string strip_timing_columns(const std::string& summary_csv) {
  std::istringstream in(summary_csv);
  std::ostringstream out;
  std::string line;
  std::vector<bool> keep;
  bool header = true;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (header) {
      for (const auto& c : cells) keep.push_back(c.rfind("conv_time", 0) != 0 && c.rfind("iter_time", 0) != 0);
      header = false;
    }
    bool first = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i < keep.size() && !keep[i]) continue;
      out << (first ? "" : ",") << cells[i];
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_traces(const std::vector<RunRecord>& records,
                                               const std::filesystem::path& dir) {
  std::map<decltype(Cell{}.key()), double> best;
  for (const auto& r : records) {
    if (!std::isfinite(r.last_cost) || r.cost_trace.empty()) continue;
    auto [it, inserted] = best.try_emplace(r.cell.key(), r.last_cost);
    if (!inserted) it->second = std::min(it->second, r.last_cost);
  }

  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& r : records) {
    if (r.cost_trace.empty()) continue;
    const auto it = best.find(r.cell.key());
    const double ref = it == best.end() ? r.cost_trace.back() : it->second;
    const auto path = dir / trace_file_name(r);
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << "iteration,cost_diff\n";
    for (std::size_t i = 0; i < r.cost_trace.size(); ++i) os << i << ',' << fmt(r.cost_trace[i] - ref) << '\n';
    paths.push_back(path);
  }
  return paths;
}

json records_document(const ExperimentConfig& config, const std::vector<RunRecord>& records) {
  json rs = json::array();
  for (const auto& r : records) rs.push_back(to_json(r));
  return {{"config", config.to_json()}, {"records", std::move(rs)}};
}

std::vector<RunRecord> load_records(const std::filesystem::path& records_json) {
  std::ifstream in(records_json);
  if (!in) throw ConfigError("cannot open " + records_json.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(records_json.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("records") || !doc.at("records").is_array()) {
    throw ConfigError(records_json.string() + " has no records array");
  }
  std::vector<RunRecord> out;
  for (const auto& j : doc.at("records")) out.push_back(record_from_json(j));
  return out;
}

void write_outputs(const ExperimentConfig& config, const std::vector<RunRecord>& records,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "summary.csv");
    if (!os) throw ConfigError("cannot write " + (dir / "summary.csv").string());
    os << emit_summary(records);
  }
  emit_traces(records, dir / "traces");
  std::ofstream os(dir / "records.json");
  if (!os) throw ConfigError("cannot write " + (dir / "records.json").string());
  os << records_document(config, records).dump(2) << '\n';
}

}  // namespace vtf::harness
