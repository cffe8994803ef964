#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "elastic/error.hpp"
#include "elastic/simulator.hpp"
#include "elastic/workload.hpp"

namespace elastic {

inline constexpr std::string_view kJobsVersionLine = "# sim-jobs-v1";
inline constexpr std::string_view kJobsHeader = "job_id,submit_s,start_s,end_s,queue_s,train_s,total_s,outcome";
inline constexpr std::string_view kLatencyHeader = "epoch_s,jobs,explored_nodes,wall_s,first_within_5pct_s";
inline constexpr int kSummarySchema = 1;

namespace detail {
inline std::string opt_field(const std::optional<Seconds>& v) { return v ? std::to_string(*v) : std::string(); }
}  // namespace detail

/// Per-job rows; empty fields mean "never happened".
inline std::string write_jobs_csv(const SimulationReport& report) {
  std::string out;
  out += kJobsVersionLine;
  out += '\n';
  out += kJobsHeader;
  out += '\n';
  for (const auto& j : report.jobs) {
    out += j.id + ',' + std::to_string(j.submit) + ',' + detail::opt_field(j.start) + ',' +
           detail::opt_field(j.end) + ',' + detail::opt_field(j.queue_seconds()) + ',' +
           detail::opt_field(j.train_seconds()) + ',' + detail::opt_field(j.total_seconds()) + ',' +
           to_string(j.outcome) + '\n';
  }
  return out;
}

/// Wall-clock solver timings. Kept out of the summary so that the summary
/// and job rows are byte-identical across repeated runs.
inline std::string write_latency_csv(const SimulationReport& report) {
  std::string out = "# sim-latency-v1\n";
  out += kLatencyHeader;
  out += '\n';
  for (const auto& s : report.solver) {
    out += std::to_string(s.time) + ',' + std::to_string(s.jobs) + ',' + std::to_string(s.explored_nodes) + ',' +
           detail::format_double(s.wall_seconds) + ',' + detail::format_double(s.first_within_5pct) + '\n';
  }
  return out;
}

struct RunTotals {
  int completed = 0;
  int bug_hang = 0;
  int killed = 0;
  int unfinished = 0;
  double mean_queue_minutes = 0.0;  // completed jobs only
  double mean_total_minutes = 0.0;  // completed jobs only
};

inline RunTotals totals(const SimulationReport& report) {
  RunTotals t;
  double queue = 0.0, total = 0.0;
  for (const auto& j : report.jobs) {
    switch (j.outcome) {
      case JobOutcome::completed:
        ++t.completed;
        queue += static_cast<double>(*j.queue_seconds());
        total += static_cast<double>(*j.total_seconds());
        break;
      case JobOutcome::bug_hang: ++t.bug_hang; break;
      case JobOutcome::killed: ++t.killed; break;
      case JobOutcome::unfinished: ++t.unfinished; break;
    }
  }
  if (t.completed > 0) {
    t.mean_queue_minutes = queue / t.completed / 60.0;
    t.mean_total_minutes = total / t.completed / 60.0;
  }
  return t;
}

inline nlohmann::ordered_json summary_json(const SimulationReport& report, const SimulationConfig& config) {
  const auto t = totals(report);
  nlohmann::ordered_json j;
  j["schema"] = kSummarySchema;
  j["allocator"] = to_string(config.allocator);
  j["total_nodes"] = config.cluster.total_nodes;
  j["epoch_period_s"] = config.cluster.epoch_period;
  j["horizon_steps"] = config.cluster.horizon_steps;
  j["scaling_delay_s"] = config.cluster.scaling_delay;
  j["eta_disturbance"] = config.cluster.eta_disturbance;
  j["disturbed_fraction"] = config.disturbed_fraction;
  j["disturb_failing_jobs"] = config.disturb_failing_jobs;
  j["seed"] = config.cluster.rng_seed;
  if (config.budget.node_limit) j["solver_node_limit"] = *config.budget.node_limit;
  j["solver_gap_target"] = config.budget.gap_target;
  j["jobs"] = report.jobs.size();
  j["completed"] = t.completed;
  j["bug_hang"] = t.bug_hang;
  j["killed"] = t.killed;
  j["unfinished"] = t.unfinished;
  j["mean_queue_minutes"] = t.mean_queue_minutes;
  j["mean_total_minutes"] = t.mean_total_minutes;
  j["end_time_s"] = report.end_time;
  j["epochs"] = report.epochs;
  j["rejected_plans"] = report.rejected_plans;
  std::uint64_t explored = 0;
  for (const auto& s : report.solver) explored += s.explored_nodes;
  j["solver_explored_nodes"] = explored;
  return j;
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error(ErrorKind::io, "failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace elastic
