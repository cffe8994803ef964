#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "elastic/error.hpp"
#include "elastic/random.hpp"
#include "elastic/speed_model.hpp"

namespace elastic {

using JobId = std::string;
using Seconds = std::int64_t;

/// Lower clamp for remaining demand seen by the allocator (node-hours).
inline constexpr double kRemainingDemandFloor = 1e-9;

/// Longest hang of a buggy job after it starts training.
inline constexpr Seconds kMaxBugHang = 300;

struct NoFailure {
  friend bool operator==(const NoFailure&, const NoFailure&) = default;
};

/// Job hangs `hang_time` seconds after it starts training.
struct BugFailure {
  Seconds hang_time = 0;
  friend bool operator==(const BugFailure&, const BugFailure&) = default;
};

/// User kills the job `kill_time` seconds after submission.
struct UserKill {
  Seconds kill_time = 0;
  friend bool operator==(const UserKill&, const UserKill&) = default;
};

using FailureKind = std::variant<NoFailure, BugFailure, UserKill>;

struct JobSpec {
  JobId id;
  Seconds submit_time = 0;
  double demand = 0.0;  // node-hours of work at 1-node speed
  int n_min = 1;
  int n_max = 16;
  FailureKind failure = NoFailure{};

  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

/// Throws ErrorKind::validation naming the violated invariant.
inline void validate_job(const JobSpec& job) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::validation, "job '" + job.id + "': " + what);
  };
  if (job.id.empty()) throw Error(ErrorKind::validation, "job id is empty");
  if (job.submit_time < 0) fail("submit time is negative");
  if (!(job.demand > 0.0) || !std::isfinite(job.demand)) fail("demand must be positive and finite");
  if (job.n_min < 1) fail("n_min must be at least 1");
  if (job.n_max < job.n_min) fail("n_max is below n_min");
  if (!is_power_of_two(job.n_min)) fail("n_min is not a power of two");
  if (!is_power_of_two(job.n_max)) fail("n_max is not a power of two");
  if (const auto* bug = std::get_if<BugFailure>(&job.failure)) {
    if (bug->hang_time <= 0 || bug->hang_time > kMaxBugHang) fail("bug hang time must lie in (0, 300] seconds");
  } else if (const auto* kill = std::get_if<UserKill>(&job.failure)) {
    if (kill->kill_time <= 0) fail("kill time must be positive");
  }
}

enum class JobPhase { queued, training, scaling_hold, done, failed };

inline const char* to_string(JobPhase phase) {
  switch (phase) {
    case JobPhase::queued: return "queued";
    case JobPhase::training: return "training";
    case JobPhase::scaling_hold: return "scaling_hold";
    case JobPhase::done: return "done";
    case JobPhase::failed: return "failed";
  }
  return "?";
}

struct JobRuntimeState {
  JobSpec spec;
  JobPhase phase = JobPhase::queued;
  int nodes_assigned = 0;        // nodes doing work right now
  double served = 0.0;           // node-hours accumulated
  double observed_demand = 0.0;  // ETA the allocator sees; fixed at submission
  std::optional<Seconds> training_start;
  std::optional<Seconds> completion_time;
  std::optional<Seconds> hold_until;  // present iff phase == scaling_hold
  int hold_target = 0;                // node count taking effect at hold_until

  explicit JobRuntimeState(JobSpec s) : spec(std::move(s)), observed_demand(spec.demand) {}

  bool active() const {
    return phase == JobPhase::queued || phase == JobPhase::training || phase == JobPhase::scaling_hold;
  }
  bool holds_nodes() const { return phase == JobPhase::training || phase == JobPhase::scaling_hold; }

  /// Nodes unavailable to anyone else: a held job reserves its target count.
  int occupied_nodes() const {
    if (phase == JobPhase::scaling_hold) return std::max(nodes_assigned, hold_target);
    return phase == JobPhase::training ? nodes_assigned : 0;
  }
};

struct ClusterConfig {
  int total_nodes = 70;
  Seconds epoch_period = 300;
  int horizon_steps = 5;
  LegalSet legal_set = default_legal_set();
  Seconds scaling_delay = 0;
  double eta_disturbance = 0.0;  // relative half-width
  std::uint64_t rng_seed = 0;
  Attenuation attenuation{};

  double step_hours() const { return static_cast<double>(epoch_period) / 3600.0; }

  SpeedCurve speed_curve() const { return SpeedCurve(legal_set, attenuation); }

  void validate() const {
    if (total_nodes < 1) throw Error(ErrorKind::config, "total_nodes must be positive");
    if (epoch_period < 1) throw Error(ErrorKind::config, "epoch period must be positive");
    if (horizon_steps < 1) throw Error(ErrorKind::config, "horizon must have at least one step");
    if (scaling_delay < 0) throw Error(ErrorKind::config, "scaling delay must be non-negative");
    if (!(eta_disturbance >= 0.0 && eta_disturbance < 1.0))
      throw Error(ErrorKind::config, "ETA disturbance must lie in [0, 1)");
    validate_legal_set(legal_set);
    attenuation.validate();
  }
};

/// K_i = {k in K : n_min <= k <= min(n_max, N)}.
inline LegalSet legal_set_for(int n_min, int n_max, const ClusterConfig& cfg) {
  const int cap = std::min(n_max, cfg.total_nodes);
  LegalSet out;
  for (int k : cfg.legal_set)
    if (k >= n_min && k <= cap) out.push_back(k);
  if (out.empty())
    throw Error(ErrorKind::config, "no legal node count in [" + std::to_string(n_min) + ", " +
                                       std::to_string(cap) + "]");
  return out;
}

inline LegalSet legal_set_for(const JobSpec& job, const ClusterConfig& cfg) {
  return legal_set_for(job.n_min, job.n_max, cfg);
}

/// Largest k in `legal` with k <= limit, or 0 when none fits.
inline int largest_fitting(const LegalSet& legal, int limit) {
  auto it = std::upper_bound(legal.begin(), legal.end(), limit);
  return it == legal.begin() ? 0 : *std::prev(it);
}

/// ETA seen by the allocator, drawn once at submission from
/// [1 - half_width, 1 + half_width] * demand.
inline double sample_observed_demand(double demand, double half_width, Rng& rng) {
  if (half_width <= 0.0) return demand;
  return demand * rng.uniform(1.0 - half_width, 1.0 + half_width);
}

struct SnapshotJob {
  JobId id;
  Seconds submit_time = 0;
  double remaining = 0.0;  // observed remaining demand, node-hours, > 0
  int n_min = 1;
  int n_max = 16;
  bool training = false;
  int current_nodes = 0;
};

struct ClusterSnapshot {
  Seconds epoch_time = 0;
  std::vector<SnapshotJob> jobs;  // FIFO: submit time, then job id
  int total_nodes = 0;
};

inline bool fifo_less(Seconds submit_a, const JobId& a, Seconds submit_b, const JobId& b) {
  return std::tie(submit_a, a) < std::tie(submit_b, b);
}

/// What the allocator sees: queued and node-holding jobs in FIFO order with
/// remaining = max(observed_demand - served, floor).
inline ClusterSnapshot make_snapshot(const std::vector<JobRuntimeState>& states, const ClusterConfig& cfg,
                                     Seconds now = 0) {
  ClusterSnapshot snap;
  snap.epoch_time = now;
  snap.total_nodes = cfg.total_nodes;
  for (const auto& st : states) {
    if (!st.active()) continue;
    SnapshotJob j;
    j.id = st.spec.id;
    j.submit_time = st.spec.submit_time;
    j.remaining = std::max(st.observed_demand - st.served, kRemainingDemandFloor);
    j.n_min = st.spec.n_min;
    j.n_max = st.spec.n_max;
    j.training = st.holds_nodes();
    j.current_nodes = st.occupied_nodes();
    snap.jobs.push_back(std::move(j));
  }
  std::stable_sort(snap.jobs.begin(), snap.jobs.end(), [](const SnapshotJob& a, const SnapshotJob& b) {
    return fifo_less(a.submit_time, a.id, b.submit_time, b.id);
  });
  return snap;
}

/// Per-job node counts n_i^t for every look-ahead step; only step 1 is acted on.
struct EpochPlan {
  std::map<JobId, std::vector<int>> assignments;
  std::map<JobId, std::vector<double>> served_profile;
  double objective = 0.0;
  double gap = 0.0;
  double solve_time = 0.0;

  int implemented(const JobId& id) const {
    auto it = assignments.find(id);
    return it == assignments.end() || it->second.empty() ? 0 : it->second.front();
  }
};

}  // namespace elastic
