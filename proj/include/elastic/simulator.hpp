#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "elastic/domain_model.hpp"
#include "elastic/error.hpp"
#include "elastic/greedy_allocator.hpp"
#include "elastic/random.hpp"
#include "elastic/solver.hpp"

namespace elastic {

enum class AllocatorKind { optimal, greedy };

inline const char* to_string(AllocatorKind a) { return a == AllocatorKind::optimal ? "optimal" : "greedy"; }

struct SimulationConfig {
  ClusterConfig cluster;
  AllocatorKind allocator = AllocatorKind::optimal;
  // Node-limited so that runs are reproducible; the time limit is a backstop.
  SolverBudget budget{2.0, 0.0, std::uint64_t{4000}};
  GreedyOptions greedy;
  double disturbed_fraction = 1.0;  // share of jobs whose ETA gets the disturbance
  bool disturb_failing_jobs = true;  // false: only jobs without a failure annotation
  std::optional<Seconds> horizon_end;

  void validate() const {
    cluster.validate();
    budget.validate();
    if (!(disturbed_fraction >= 0.0 && disturbed_fraction <= 1.0))
      throw Error(ErrorKind::config, "disturbed fraction must lie in [0, 1]");
    if (horizon_end && *horizon_end < 0) throw Error(ErrorKind::config, "horizon end must be non-negative");
  }
};

enum class JobOutcome { completed, bug_hang, killed, unfinished };

inline const char* to_string(JobOutcome o) {
  switch (o) {
    case JobOutcome::completed: return "completed";
    case JobOutcome::bug_hang: return "bug_hang";
    case JobOutcome::killed: return "killed";
    case JobOutcome::unfinished: return "unfinished";
  }
  return "?";
}

struct JobRecord {
  JobId id;
  Seconds submit = 0;
  std::optional<Seconds> start;
  std::optional<Seconds> end;
  JobOutcome outcome = JobOutcome::unfinished;

  std::optional<Seconds> queue_seconds() const {
    return start ? std::optional<Seconds>(*start - submit) : std::nullopt;
  }
  std::optional<Seconds> train_seconds() const {
    return start && end ? std::optional<Seconds>(*end - *start) : std::nullopt;
  }
  std::optional<Seconds> total_seconds() const {
    return end ? std::optional<Seconds>(*end - submit) : std::nullopt;
  }
};

struct UtilizationSample {
  Seconds time = 0;
  int busy_nodes = 0;
  int training_jobs = 0;
  int queued_jobs = 0;
};

/// Per-epoch solver outcome; everything except wall time is reproducible.
struct SolverSample {
  Seconds time = 0;
  int jobs = 0;
  std::uint64_t explored_nodes = 0;
  double objective = 0.0;
  double gap = 0.0;
  double wall_seconds = 0.0;
  double first_within_5pct = 0.0;  // seconds to the first incumbent with gap <= 5%
};

struct SimulationReport {
  std::vector<JobRecord> jobs;                          // trace order
  std::vector<std::pair<Seconds, JobId>> timeline;      // completions, ordered
  std::vector<SolverSample> solver;                     // one per optimal epoch
  std::vector<UtilizationSample> utilization;           // one per epoch
  Seconds end_time = 0;
  std::uint64_t epochs = 0;
  std::uint64_t rejected_plans = 0;

  std::vector<double> solver_latency() const {
    std::vector<double> out;
    for (const auto& s : solver) out.push_back(s.wall_seconds);
    return out;
  }
};

/// Mutable cluster state: job states plus the transition rules for starts,
/// scale-ups (delayed) and scale-downs (immediate).
class ClusterState {
 public:
  ClusterState(int total_nodes, Seconds scaling_delay) : total_nodes_(total_nodes), delay_(scaling_delay) {}

  std::vector<JobRuntimeState>& jobs() { return jobs_; }
  const std::vector<JobRuntimeState>& jobs() const { return jobs_; }
  int total_nodes() const { return total_nodes_; }

  int occupied() const {
    int n = 0;
    for (const auto& j : jobs_) n += j.occupied_nodes();
    return n;
  }
  int idle() const { return total_nodes_ - occupied(); }

  std::optional<std::size_t> find(const JobId& id) const {
    for (std::size_t i = 0; i < jobs_.size(); ++i)
      if (jobs_[i].spec.id == id) return i;
    return std::nullopt;
  }

  struct Transition {
    std::size_t job = 0;
    int target = 0;
  };

  /// Applies one epoch's node changes. Shrinks go first so released nodes
  /// can fund growth. Returns false (and changes nothing) if the result would
  /// exceed capacity; the reason is kept in audit().
  bool apply(std::vector<Transition> changes, Seconds now) {
    int after = occupied();
    std::vector<Transition> shrink, grow;
    for (const auto& c : changes) {
      const auto& j = jobs_.at(c.job);
      if (!j.active()) continue;
      if (c.target == j.occupied_nodes()) continue;
      if (c.target <= 0) {
        audit_.push_back("t=" + std::to_string(now) + " job '" + j.spec.id + "' cannot be sent to 0 nodes");
        return false;
      }
      after += c.target - j.occupied_nodes();
      (c.target < j.occupied_nodes() ? shrink : grow).push_back(c);
    }
    if (after > total_nodes_) {
      audit_.push_back("t=" + std::to_string(now) + " plan needs " + std::to_string(after) + " of " +
                       std::to_string(total_nodes_) + " nodes");
      return false;
    }
    for (const auto& c : shrink) resize(c.job, c.target, now);
    for (const auto& c : grow) resize(c.job, c.target, now);
    return true;
  }

  void apply_or_throw(std::vector<Transition> changes, Seconds now) {
    if (!apply(std::move(changes), now)) throw Error(ErrorKind::simulation, "plan rejected: " + audit_.back());
  }

  /// Hold expiry at the start of second `now`.
  void release_holds(Seconds now) {
    for (auto& j : jobs_) {
      if (j.phase != JobPhase::scaling_hold || *j.hold_until > now) continue;
      j.phase = JobPhase::training;
      j.nodes_assigned = j.hold_target;
      j.hold_target = 0;
      j.hold_until.reset();
      if (!j.training_start) j.training_start = now;
    }
  }

  const std::vector<std::string>& audit() const { return audit_; }

 private:
  void resize(std::size_t index, int target, Seconds now) {
    auto& j = jobs_[index];
    const int current = j.nodes_assigned;
    if (j.phase == JobPhase::scaling_hold && target <= current) {
      // Shrinking below the pre-hold count cancels the pending growth.
      j.phase = JobPhase::training;
      j.hold_until.reset();
      j.hold_target = 0;
      j.nodes_assigned = target;
      return;
    }
    if (target < current || delay_ == 0) {
      j.phase = JobPhase::training;
      j.nodes_assigned = target;
      j.hold_until.reset();
      j.hold_target = 0;
      if (!j.training_start) j.training_start = now;
      return;
    }
    if (j.phase != JobPhase::scaling_hold) j.hold_until = now + delay_;
    j.phase = JobPhase::scaling_hold;
    j.hold_target = target;
  }

  int total_nodes_;
  Seconds delay_;
  std::vector<JobRuntimeState> jobs_;
  std::vector<std::string> audit_;
};

/// Second-stepped simulation. Within each second: arrivals, hold expiry,
/// allocator (epoch seconds) or opportunistic starts (other seconds),
/// progress, completions, failures. Nodes freed in a second are reusable
/// from the next second on.
class Simulator {
 public:
  Simulator(std::vector<JobSpec> trace, SimulationConfig config)
      : trace_(std::move(trace)),
        config_(std::move(config)),
        state_(config_.cluster.total_nodes, config_.cluster.scaling_delay),
        speed_(config_.cluster.speed_curve()) {
    config_.validate();
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      validate_job(trace_[i]);
      if (i > 0 && trace_[i].submit_time < trace_[i - 1].submit_time)
        throw Error(ErrorKind::validation, "trace is not sorted by submit time at job '" + trace_[i].id + "'");
      legal_.push_back(legal_set_for(trace_[i], config_.cluster));
    }
  }

  SimulationReport run() {
    SimulationReport report;
    auto& jobs = state_.jobs();
    jobs.reserve(trace_.size());
    std::size_t next_arrival = 0;
    std::size_t finished = 0;
    const Seconds f = config_.cluster.epoch_period;

    Seconds t = 0;
    for (;; ++t) {
      if (config_.horizon_end && t >= *config_.horizon_end) break;
      if (next_arrival == trace_.size() && finished == jobs.size()) break;

      // (a) arrivals
      while (next_arrival < trace_.size() && trace_[next_arrival].submit_time <= t) {
        const auto& spec = trace_[next_arrival];
        JobRuntimeState st(spec);
        Rng noise = Rng::substream(config_.cluster.rng_seed, 0x1000 + next_arrival);
        const bool eligible = config_.disturb_failing_jobs || std::holds_alternative<NoFailure>(spec.failure);
        if (config_.cluster.eta_disturbance > 0.0 && eligible && noise.bernoulli(config_.disturbed_fraction))
          st.observed_demand = sample_observed_demand(spec.demand, config_.cluster.eta_disturbance, noise);
        jobs.push_back(std::move(st));
        ++next_arrival;
      }
      state_.release_holds(t);

      // (b) epoch decision or (c) opportunistic starts
      if (t % f == 0) {
        ++report.epochs;
        decide(t, report);
        report.utilization.push_back(sample_utilization(t));
      } else {
        start_from_queue(t);
      }

      // (d) progress, (e) completions, (f) failures
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& j = jobs[i];
        if (!j.active()) continue;
        if (j.nodes_assigned > 0) {
          j.served = std::min(j.spec.demand, j.served + speed_.per_second_progress(j.nodes_assigned));
          if (j.served >= j.spec.demand) {
            finish(j, JobPhase::done, t);
            report.timeline.emplace_back(t, j.spec.id);
            ++finished;
            continue;
          }
        }
        if (const auto* bug = std::get_if<BugFailure>(&j.spec.failure)) {
          if (j.training_start && t >= *j.training_start + bug->hang_time) {
            finish(j, JobPhase::failed, t);
            ++finished;
            continue;
          }
        } else if (const auto* kill = std::get_if<UserKill>(&j.spec.failure)) {
          if (t >= j.spec.submit_time + kill->kill_time) {
            finish(j, JobPhase::failed, t);
            ++finished;
            continue;
          }
        }
      }
      check_invariants(t);
    }

    report.end_time = t;
    report.rejected_plans = state_.audit().size();
    std::sort(report.timeline.begin(), report.timeline.end());
    for (const auto& j : jobs) {
      JobRecord r{j.spec.id, j.spec.submit_time, j.training_start, j.completion_time, JobOutcome::unfinished};
      if (j.phase == JobPhase::done) {
        r.outcome = JobOutcome::completed;
      } else if (j.phase == JobPhase::failed) {
        r.outcome = std::holds_alternative<BugFailure>(j.spec.failure) ? JobOutcome::bug_hang : JobOutcome::killed;
      }
      report.jobs.push_back(std::move(r));
    }
    for (std::size_t i = jobs.size(); i < trace_.size(); ++i)
      report.jobs.push_back({trace_[i].id, trace_[i].submit_time, std::nullopt, std::nullopt, JobOutcome::unfinished});
    return report;
  }

  const ClusterState& state() const { return state_; }

 private:
  void finish(JobRuntimeState& j, JobPhase phase, Seconds t) {
    j.phase = phase;
    j.completion_time = t;
    j.nodes_assigned = 0;
    j.hold_target = 0;
    j.hold_until.reset();
  }

  std::size_t index_of(const JobId& id) const {
    auto it = index_.find(id);
    return it->second;
  }

  void refresh_index() {
    const auto& jobs = state_.jobs();
    for (std::size_t i = index_.size(); i < jobs.size(); ++i) index_.emplace(jobs[i].spec.id, i);
  }

  void decide(Seconds t, SimulationReport& report) {
    refresh_index();
    const auto snapshot = make_snapshot(state_.jobs(), config_.cluster, t);
    if (snapshot.jobs.empty()) return;
    std::vector<ClusterState::Transition> changes;

    if (config_.allocator == AllocatorKind::optimal) {
      const auto result = plan_epoch_detailed(snapshot, config_.cluster, config_.budget);
      SolverSample sample{t,
                          static_cast<int>(snapshot.jobs.size()),
                          result.explored_nodes,
                          result.plan.objective,
                          result.plan.gap,
                          result.plan.solve_time,
                          result.plan.solve_time};
      for (const auto& ev : result.incumbents) {
        if (ev.gap() <= 0.05) {
          sample.first_within_5pct = ev.elapsed;
          break;
        }
      }
      report.solver.push_back(sample);
      for (const auto& job : snapshot.jobs) {
        const int target = result.plan.implemented(job.id);
        if (target == 0 && !job.training) continue;
        changes.push_back({index_of(job.id), target});
      }
    } else {
      std::map<JobId, Seconds> elapsed;
      for (const auto& job : snapshot.jobs) {
        if (!job.training) continue;
        const auto& st = state_.jobs()[index_of(job.id)];
        elapsed[job.id] = st.training_start ? t - *st.training_start : 0;
      }
      const auto decision = greedy_plan(snapshot, elapsed, config_.cluster, config_.greedy);
      for (const auto& [id, k] : decision.scale_downs) changes.push_back({index_of(id), k});
      for (const auto& [id, k] : decision.scale_ups) changes.push_back({index_of(id), k});
      for (const auto& [id, k] : decision.starts) changes.push_back({index_of(id), k});
    }
    state_.apply_or_throw(std::move(changes), t);
  }

  // Front of the FIFO queue gets the largest legal count that fits, repeated
  // while nodes and queued jobs remain.
  void start_from_queue(Seconds t) {
    int idle = state_.idle();
    if (idle <= 0) return;
    refresh_index();
    const auto& jobs = state_.jobs();
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (jobs[i].phase == JobPhase::queued) queue.push_back(i);
    if (queue.empty()) return;
    std::stable_sort(queue.begin(), queue.end(), [&](std::size_t a, std::size_t b) {
      return fifo_less(jobs[a].spec.submit_time, jobs[a].spec.id, jobs[b].spec.submit_time, jobs[b].spec.id);
    });
    std::vector<ClusterState::Transition> starts;
    for (std::size_t i : queue) {
      const int k = largest_fitting(legal_[i], idle);
      if (k == 0) break;
      starts.push_back({i, k});
      idle -= k;
      if (idle == 0) break;
    }
    state_.apply_or_throw(std::move(starts), t);
  }

  UtilizationSample sample_utilization(Seconds t) const {
    UtilizationSample u{t, 0, 0, 0};
    for (const auto& j : state_.jobs()) {
      u.busy_nodes += j.occupied_nodes();
      if (j.holds_nodes()) ++u.training_jobs;
      if (j.phase == JobPhase::queued) ++u.queued_jobs;
    }
    return u;
  }

  void check_invariants(Seconds t) const {
    int occupied = 0;
    for (std::size_t i = 0; i < state_.jobs().size(); ++i) {
      const auto& j = state_.jobs()[i];
      occupied += j.occupied_nodes();
      const bool held = j.phase == JobPhase::scaling_hold;
      bool ok = held == j.hold_until.has_value();
      if (j.phase == JobPhase::training)
        ok = ok && j.nodes_assigned >= j.spec.n_min && j.nodes_assigned <= j.spec.n_max &&
             std::binary_search(legal_[i].begin(), legal_[i].end(), j.nodes_assigned);
      if (held)
        ok = ok && std::binary_search(legal_[i].begin(), legal_[i].end(), j.hold_target) &&
             (j.nodes_assigned == 0 || std::binary_search(legal_[i].begin(), legal_[i].end(), j.nodes_assigned));
      if (!j.holds_nodes()) ok = ok && j.nodes_assigned == 0;
      ok = ok && j.served >= 0.0 && j.served <= j.spec.demand;
      if (!ok) throw Error(ErrorKind::simulation, dump(t, "job invariant broken for '" + j.spec.id + "'"));
    }
    if (occupied > state_.total_nodes())
      throw Error(ErrorKind::simulation, dump(t, "node conservation broken: " + std::to_string(occupied) +
                                                     " occupied of " + std::to_string(state_.total_nodes())));
  }

  std::string dump(Seconds t, const std::string& what) const {
    std::ostringstream os;
    os << what << " at t=" << t << "\n";
    for (const auto& j : state_.jobs()) {
      if (!j.active()) continue;
      os << "  " << j.spec.id << " phase=" << to_string(j.phase) << " nodes=" << j.nodes_assigned
         << " target=" << j.hold_target << " served=" << j.served << "/" << j.spec.demand << "\n";
    }
    return os.str();
  }

  std::vector<JobSpec> trace_;
  SimulationConfig config_;
  ClusterState state_;
  SpeedCurve speed_;
  std::vector<LegalSet> legal_;
  std::map<JobId, std::size_t> index_;
};

inline SimulationReport simulate(const std::vector<JobSpec>& trace, const SimulationConfig& config) {
  return Simulator(trace, config).run();
}

}  // namespace elastic
