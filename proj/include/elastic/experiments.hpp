#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elastic/error.hpp"
#include "elastic/report_io.hpp"
#include "elastic/simulator.hpp"
#include "elastic/workload.hpp"

namespace elastic {

enum class Scenario { baseline, heterogeneous, disturbance, harsh, scaling_delay };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::baseline: return "baseline";
    case Scenario::heterogeneous: return "heterogeneous";
    case Scenario::disturbance: return "disturbance";
    case Scenario::harsh: return "harsh";
    case Scenario::scaling_delay: return "scaling_delay";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view name) {
  for (auto s : {Scenario::baseline, Scenario::heterogeneous, Scenario::disturbance, Scenario::harsh,
                 Scenario::scaling_delay})
    if (name == to_string(s)) return s;
  throw Error(ErrorKind::config, "unknown scenario '" + std::string(name) + "'");
}

inline AllocatorKind parse_allocator(std::string_view name) {
  if (name == "optimal") return AllocatorKind::optimal;
  if (name == "greedy") return AllocatorKind::greedy;
  throw Error(ErrorKind::config, "unknown allocator '" + std::string(name) + "'");
}

inline constexpr double kDefaultDisturbance = 0.10;
inline constexpr Seconds kDefaultScalingDelay = 15;

struct ExperimentSpec {
  std::optional<std::vector<JobSpec>> trace;  // otherwise synthesized from the scenario profile
  std::optional<std::size_t> job_count;       // overrides the profile's count
  std::uint64_t seed = 1;
  std::vector<int> node_counts{70, 90, 110, 130, 150, 170, 190};
  std::vector<AllocatorKind> allocators{AllocatorKind::greedy, AllocatorKind::optimal};
  Scenario scenario = Scenario::baseline;
  int replications = 1;
  ClusterConfig cluster;  // total_nodes is replaced by each node count
  SolverBudget budget = SimulationConfig{}.budget;
  GreedyOptions greedy;
  double disturbed_fraction = 1.0;
  int milestone = 100;

  void validate() const {
    if (node_counts.empty()) throw Error(ErrorKind::config, "node_counts must not be empty");
    for (std::size_t i = 0; i < node_counts.size(); ++i) {
      if (node_counts[i] < 1) throw Error(ErrorKind::config, "node counts must be positive");
      if (i > 0 && node_counts[i] <= node_counts[i - 1])
        throw Error(ErrorKind::config, "node_counts must be strictly ascending");
    }
    if (allocators.empty()) throw Error(ErrorKind::config, "at least one allocator is required");
    if (replications < 1) throw Error(ErrorKind::config, "replications must be at least 1");
    if (milestone < 1) throw Error(ErrorKind::config, "milestone must be at least 1");
    cluster.validate();
    budget.validate();
    if (!(disturbed_fraction >= 0.0 && disturbed_fraction <= 1.0))
      throw Error(ErrorKind::config, "disturbed fraction must lie in [0, 1]");
  }

  SyntheticProfile profile() const {
    SyntheticProfile p = scenario == Scenario::heterogeneous ? SyntheticProfile::heterogeneous()
                         : scenario == Scenario::harsh       ? SyntheticProfile::harsh()
                                                             : SyntheticProfile::baseline();
    if (job_count) {
      p.arrival_rate *= static_cast<double>(*job_count) / static_cast<double>(p.count);
      p.count = *job_count;
    }
    return p;
  }

  /// Cluster settings after scenario defaults: the disturbance and harsh
  /// scenarios switch on a 10% ETA error, the delay scenario a 15 s delay,
  /// unless set explicitly.
  ClusterConfig scenario_cluster() const {
    ClusterConfig c = cluster;
    if ((scenario == Scenario::disturbance || scenario == Scenario::harsh) && c.eta_disturbance == 0.0)
      c.eta_disturbance = kDefaultDisturbance;
    if (scenario == Scenario::scaling_delay && c.scaling_delay == 0) c.scaling_delay = kDefaultScalingDelay;
    return c;
  }

  /// Seed for replication r; replication 0 uses the spec seed itself.
  std::uint64_t replication_seed(int r) const {
    return r == 0 ? seed : Rng::substream(seed, 0x5EED0000ULL + static_cast<std::uint64_t>(r)).next_u64();
  }
};

using Timeline = std::vector<std::pair<Seconds, JobId>>;

struct MilestoneResult {
  std::vector<Seconds> times;      // greedy's wall time at each milestone
  std::vector<long> additional;    // optimal completions by then, minus the milestone count
  double mean = 0.0;
};

/// At the time greedy finishes its m*milestone-th job, how many more jobs has
/// the optimal allocator finished? Timelines must be sorted by time.
inline MilestoneResult additional_trained_jobs(const Timeline& greedy, const Timeline& optimal, int milestone = 100) {
  if (milestone < 1) throw Error(ErrorKind::milestone, "milestone must be at least 1");
  MilestoneResult out;
  for (std::size_t m = 1; m * static_cast<std::size_t>(milestone) <= greedy.size(); ++m) {
    const std::size_t target = m * static_cast<std::size_t>(milestone);
    const Seconds when = greedy[target - 1].first;
    const auto done = std::upper_bound(optimal.begin(), optimal.end(), when,
                                       [](Seconds t, const auto& entry) { return t < entry.first; }) -
                      optimal.begin();
    out.times.push_back(when);
    out.additional.push_back(static_cast<long>(done) - static_cast<long>(target));
  }
  if (out.additional.empty())
    throw Error(ErrorKind::milestone, "greedy completed " + std::to_string(greedy.size()) +
                                          " jobs, fewer than one milestone of " + std::to_string(milestone));
  double sum = 0.0;
  for (long a : out.additional) sum += static_cast<double>(a);
  out.mean = sum / static_cast<double>(out.additional.size());
  return out;
}

struct SampleStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

inline SampleStats describe(std::vector<double> samples) {
  SampleStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  const std::size_t n = samples.size();
  s.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
  s.max = samples.back();
  return s;
}

struct CellResult {
  int nodes = 0;
  AllocatorKind allocator = AllocatorKind::optimal;
  int replication = 0;
  RunTotals totals;
  Timeline timeline;
  std::vector<SolverSample> solver;
};

struct AllocatorSummary {
  double mean_queue_minutes = 0.0;
  double mean_total_minutes = 0.0;
  double completed = 0.0;
  double failed = 0.0;
  double unfinished = 0.0;
};

struct NodeRow {
  int nodes = 0;
  std::map<AllocatorKind, AllocatorSummary> allocators;
  std::optional<double> additional_mean;          // averaged over replications
  std::vector<std::vector<long>> additional;      // per replication, per milestone
};

struct ComparisonReport {
  std::vector<NodeRow> rows;
  std::vector<CellResult> cells;  // fixed order: node count, replication, allocator
  SampleStats latency;            // wall time per optimal epoch
  SampleStats time_to_5pct;       // wall time to an incumbent within 5% of the bound

  const NodeRow& row(int nodes) const {
    for (const auto& r : rows)
      if (r.nodes == nodes) return r;
    throw Error(ErrorKind::config, "no row for " + std::to_string(nodes) + " nodes");
  }
};

inline std::vector<JobSpec> experiment_trace(const ExperimentSpec& spec, int replication) {
  if (spec.trace) return *spec.trace;
  return generate(spec.profile(), spec.replication_seed(replication));
}

inline SimulationConfig cell_config(const ExperimentSpec& spec, int nodes, AllocatorKind allocator, int replication) {
  SimulationConfig c;
  c.cluster = spec.scenario_cluster();
  c.cluster.total_nodes = nodes;
  c.cluster.rng_seed = spec.replication_seed(replication);
  c.allocator = allocator;
  c.budget = spec.budget;
  c.greedy = spec.greedy;
  c.disturbed_fraction = spec.disturbed_fraction;
  // The harsh mix is disjoint: healthy jobs carry the ETA error, the rest fail.
  c.disturb_failing_jobs = spec.scenario != Scenario::harsh;
  return c;
}

/// Runs every (node count, replication, allocator) cell on paired traces and
/// folds them in that fixed order. `progress` is called after each cell.
inline ComparisonReport run_experiment(const ExperimentSpec& spec,
                                       const std::function<void(const CellResult&)>& progress = {}) {
  spec.validate();
  ComparisonReport report;
  std::vector<std::vector<JobSpec>> traces;
  for (int r = 0; r < spec.replications; ++r) traces.push_back(experiment_trace(spec, r));

  std::vector<double> latency, to_gap;
  for (int nodes : spec.node_counts) {
    NodeRow row;
    row.nodes = nodes;
    std::map<AllocatorKind, std::vector<const CellResult*>> by_allocator;
    const std::size_t first_cell = report.cells.size();
    for (int r = 0; r < spec.replications; ++r) {
      for (auto allocator : spec.allocators) {
        const auto sim = simulate(traces[r], cell_config(spec, nodes, allocator, r));
        CellResult cell{nodes, allocator, r, totals(sim), sim.timeline, sim.solver};
        for (const auto& s : sim.solver) {
          latency.push_back(s.wall_seconds);
          to_gap.push_back(s.first_within_5pct);
        }
        report.cells.push_back(std::move(cell));
        if (progress) progress(report.cells.back());
      }
    }
    for (std::size_t i = first_cell; i < report.cells.size(); ++i)
      by_allocator[report.cells[i].allocator].push_back(&report.cells[i]);

    for (const auto& [allocator, cells] : by_allocator) {
      AllocatorSummary s;
      for (const auto* c : cells) {
        s.mean_queue_minutes += c->totals.mean_queue_minutes;
        s.mean_total_minutes += c->totals.mean_total_minutes;
        s.completed += c->totals.completed;
        s.failed += c->totals.bug_hang + c->totals.killed;
        s.unfinished += c->totals.unfinished;
      }
      const double n = static_cast<double>(cells.size());
      s.mean_queue_minutes /= n;
      s.mean_total_minutes /= n;
      s.completed /= n;
      s.failed /= n;
      s.unfinished /= n;
      row.allocators[allocator] = s;
    }

    if (by_allocator.count(AllocatorKind::greedy) && by_allocator.count(AllocatorKind::optimal)) {
      double sum = 0.0;
      for (int r = 0; r < spec.replications; ++r) {
        const auto m = additional_trained_jobs(by_allocator[AllocatorKind::greedy][r]->timeline,
                                               by_allocator[AllocatorKind::optimal][r]->timeline, spec.milestone);
        row.additional.push_back(m.additional);
        sum += m.mean;
      }
      row.additional_mean = sum / spec.replications;
    }
    report.rows.push_back(std::move(row));
  }
  report.latency = describe(latency);
  report.time_to_5pct = describe(to_gap);
  return report;
}

/// Flat `key = value` experiment config; `#` starts a comment line.
inline ExperimentSpec parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  ExperimentSpec spec;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::parse, "config line " + std::to_string(line_no) + ": " + what);
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto number = [&](const std::string& key, const std::string& text, auto& out) {
    if (!detail::parse_number(text, out)) fail("bad value '" + text + "' for " + key);
  };
  auto list = [&](const std::string& text) {
    std::vector<std::string> items;
    for (auto item : detail::split_commas(text)) items.push_back(trim(std::string(item)));
    return items;
  };

  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "scenario") {
        spec.scenario = parse_scenario(value);
      } else if (key == "seed") {
        number(key, value, spec.seed);
      } else if (key == "node_counts") {
        spec.node_counts.clear();
        for (const auto& item : list(value)) number(key, item, spec.node_counts.emplace_back());
      } else if (key == "allocators") {
        spec.allocators.clear();
        for (const auto& item : list(value)) spec.allocators.push_back(parse_allocator(item));
      } else if (key == "replications") {
        number(key, value, spec.replications);
      } else if (key == "jobs") {
        std::size_t n = 0;
        number(key, value, n);
        spec.job_count = n;
      } else if (key == "trace") {
        std::filesystem::path p(value);
        if (p.is_relative()) p = base_dir / p;
        spec.trace = load_trace_text(read_file(p.string()));
      } else if (key == "epoch_period") {
        number(key, value, spec.cluster.epoch_period);
      } else if (key == "horizon_steps") {
        number(key, value, spec.cluster.horizon_steps);
      } else if (key == "scaling_delay") {
        number(key, value, spec.cluster.scaling_delay);
      } else if (key == "eta_disturbance") {
        number(key, value, spec.cluster.eta_disturbance);
      } else if (key == "disturbed_fraction") {
        number(key, value, spec.disturbed_fraction);
      } else if (key == "milestone") {
        number(key, value, spec.milestone);
      } else if (key == "solver_node_limit") {
        std::uint64_t n = 0;
        number(key, value, n);
        spec.budget.node_limit = n;
      } else if (key == "solver_time_limit") {
        number(key, value, spec.budget.time_limit);
      } else if (key == "solver_gap_target") {
        number(key, value, spec.budget.gap_target);
      } else if (key == "greedy_metric") {
        if (value == "elapsed") spec.greedy.metric = TrainingTimeMetric::elapsed;
        else if (value == "remaining_eta") spec.greedy.metric = TrainingTimeMetric::remaining_eta;
        else fail("unknown greedy_metric '" + value + "'");
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::parse) throw;
      fail(e.what());
    }
  }
  spec.validate();
  return spec;
}

inline nlohmann::ordered_json manifest_json(const ExperimentSpec& spec) {
  const auto c = spec.scenario_cluster();
  nlohmann::ordered_json j;
  j["schema"] = kSummarySchema;
  j["scenario"] = to_string(spec.scenario);
  j["seed"] = spec.seed;
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < spec.replications; ++r) seeds.push_back(spec.replication_seed(r));
  j["replication_seeds"] = seeds;
  j["trace"] = spec.trace ? "explicit" : "synthetic";
  if (!spec.trace) {
    const auto p = spec.profile();
    j["profile"] = {{"count", p.count},
                    {"arrival_rate_per_hour", p.arrival_rate},
                    {"large_mean_minutes", p.large_mean_minutes},
                    {"large_sigma", p.large_sigma},
                    {"small_fraction", p.small_fraction},
                    {"small_cutoff_minutes", p.small_cutoff_minutes},
                    {"bug_fraction", p.bug_fraction},
                    {"terminate_fraction", p.terminate_fraction}};
  } else {
    j["trace_jobs"] = spec.trace->size();
  }
  j["node_counts"] = spec.node_counts;
  std::vector<std::string> allocs;
  for (auto a : spec.allocators) allocs.emplace_back(to_string(a));
  j["allocators"] = allocs;
  j["replications"] = spec.replications;
  j["epoch_period_s"] = c.epoch_period;
  j["horizon_steps"] = c.horizon_steps;
  j["scaling_delay_s"] = c.scaling_delay;
  j["eta_disturbance"] = c.eta_disturbance;
  j["disturbed_fraction"] = spec.disturbed_fraction;
  j["legal_set"] = c.legal_set;
  j["attenuation"] = std::to_string(c.attenuation.numerator) + "/" + std::to_string(c.attenuation.denominator);
  j["milestone"] = spec.milestone;
  j["solver"] = {{"time_limit_s", spec.budget.time_limit}, {"gap_target", spec.budget.gap_target}};
  if (spec.budget.node_limit) j["solver"]["node_limit"] = *spec.budget.node_limit;
  j["greedy_metric"] = spec.greedy.metric == TrainingTimeMetric::elapsed ? "elapsed" : "remaining_eta";
  return j;
}

inline constexpr double kLatencyBucketEdges[] = {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};

/// Writes the figure-analog CSVs and the manifest into `dir`. Everything but
/// latency_*.csv is a pure function of the spec.
inline void write_experiment_outputs(const ComparisonReport& report, const ExperimentSpec& spec,
                                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto fmt = detail::format_double;

  std::string queue = "# experiment-v1\nnodes,allocator,mean_queue_minutes,completed,failed,unfinished\n";
  std::string total = "# experiment-v1\nnodes,allocator,mean_total_minutes,completed\n";
  std::string extra = "# experiment-v1\nnodes,mean_additional_jobs,per_milestone\n";
  for (const auto& row : report.rows) {
    for (const auto& [allocator, s] : row.allocators) {
      queue += std::to_string(row.nodes) + ',' + to_string(allocator) + ',' + fmt(s.mean_queue_minutes) + ',' +
               fmt(s.completed) + ',' + fmt(s.failed) + ',' + fmt(s.unfinished) + '\n';
      total += std::to_string(row.nodes) + ',' + to_string(allocator) + ',' + fmt(s.mean_total_minutes) + ',' +
               fmt(s.completed) + '\n';
    }
    if (row.additional_mean) {
      std::string per;
      for (std::size_t r = 0; r < row.additional.size(); ++r) {
        if (r) per += '|';
        for (std::size_t m = 0; m < row.additional[r].size(); ++m) {
          if (m) per += ';';
          per += std::to_string(row.additional[r][m]);
        }
      }
      extra += std::to_string(row.nodes) + ',' + fmt(*row.additional_mean) + ',' + per + '\n';
    }
  }
  write_file((dir / "queueing_vs_nodes.csv").string(), queue);
  write_file((dir / "total_time_vs_nodes.csv").string(), total);
  write_file((dir / "additional_jobs_vs_nodes.csv").string(), extra);

  std::vector<double> samples;
  for (const auto& cell : report.cells)
    for (const auto& s : cell.solver) samples.push_back(s.wall_seconds);
  std::string hist = "# experiment-latency-v1\nbucket_lo_s,bucket_hi_s,count\n";
  constexpr std::size_t edges = std::size(kLatencyBucketEdges);
  for (std::size_t b = 0; b < edges; ++b) {
    const double lo = kLatencyBucketEdges[b];
    const double hi = b + 1 < edges ? kLatencyBucketEdges[b + 1] : std::numeric_limits<double>::infinity();
    const auto n = std::count_if(samples.begin(), samples.end(), [&](double v) { return v >= lo && v < hi; });
    hist += fmt(lo) + ',' + (std::isinf(hi) ? std::string("inf") : fmt(hi)) + ',' + std::to_string(n) + '\n';
  }
  write_file((dir / "latency_histogram.csv").string(), hist);

  std::string stats = "# experiment-latency-v1\nmetric,count,mean_s,median_s,p95_s,max_s\n";
  for (const auto& [name, s] : {std::pair{"epoch_solve", report.latency}, std::pair{"time_to_5pct_gap", report.time_to_5pct}})
    stats += std::string(name) + ',' + std::to_string(s.count) + ',' + fmt(s.mean) + ',' + fmt(s.median) + ',' +
             fmt(s.p95) + ',' + fmt(s.max) + '\n';
  write_file((dir / "latency_summary.csv").string(), stats);

  write_file((dir / "manifest.json").string(), manifest_json(spec).dump(2) + "\n");
}

}  // namespace elastic
