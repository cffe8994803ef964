#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "elastic/domain_model.hpp"

namespace elastic {

/// What "training time" means when picking the shortest / longest job.
enum class TrainingTimeMetric { elapsed, remaining_eta };

struct GreedyOptions {
  TrainingTimeMetric metric = TrainingTimeMetric::elapsed;
};

struct GreedyDecision {
  std::map<JobId, int> scale_ups;
  std::map<JobId, int> scale_downs;
  std::map<JobId, int> starts;
  std::set<JobId> unchanged;
  int scenario = 0;  // 1..4, 0 for an empty snapshot
};

/// Rule-based allocator:
///   1. idle nodes, non-empty queue: start queued jobs front first with as
///      many nodes as fit, until nodes or queue run out;
///   2. idle nodes, empty queue: repeatedly grow the shortest-running job as
///      far as the idle nodes allow;
///   3. no idle nodes, non-empty queue: halve the longest-running job and
///      start the front queued job on the released nodes;
///   4. no idle nodes, empty queue: no change.
/// `training_time` maps each training job to its elapsed training seconds.
inline GreedyDecision greedy_plan(const ClusterSnapshot& snapshot, const std::map<JobId, Seconds>& training_time,
                                  const ClusterConfig& cfg, GreedyOptions options = {}) {
  GreedyDecision out;
  std::vector<const SnapshotJob*> queue;
  std::vector<const SnapshotJob*> running;
  int occupied = 0;
  for (const auto& job : snapshot.jobs) {
    if (job.training) {
      running.push_back(&job);
      occupied += job.current_nodes;
    } else {
      queue.push_back(&job);
    }
  }
  int idle = snapshot.total_nodes - occupied;
  if (snapshot.jobs.empty()) return out;

  auto metric = [&](const SnapshotJob& job) -> double {
    if (options.metric == TrainingTimeMetric::remaining_eta) return job.remaining;
    auto it = training_time.find(job.id);
    return it == training_time.end() ? 0.0 : static_cast<double>(it->second);
  };
  auto by_metric = [&](const SnapshotJob* a, const SnapshotJob* b) {
    const double ma = metric(*a), mb = metric(*b);
    return ma != mb ? ma < mb : a->id < b->id;
  };

  if (idle > 0 && !queue.empty()) {
    out.scenario = 1;
    for (const auto* job : queue) {
      const int k = largest_fitting(legal_set_for(job->n_min, job->n_max, cfg), idle);
      if (k == 0) break;
      out.starts[job->id] = k;
      idle -= k;
      if (idle == 0) break;
    }
  } else if (idle > 0) {
    out.scenario = 2;
    std::vector<const SnapshotJob*> candidates = running;
    std::sort(candidates.begin(), candidates.end(), by_metric);
    for (const auto* job : candidates) {
      if (idle == 0) break;
      const int k = largest_fitting(legal_set_for(job->n_min, job->n_max, cfg), job->current_nodes + idle);
      if (k <= job->current_nodes) continue;
      out.scale_ups[job->id] = k;
      idle -= k - job->current_nodes;
    }
  } else if (!queue.empty()) {
    out.scenario = 3;
    const auto& front = *queue.front();
    const LegalSet front_legal = legal_set_for(front.n_min, front.n_max, cfg);
    const SnapshotJob* victim = nullptr;
    for (const auto* job : running) {
      const int half = job->current_nodes / 2;
      if (job->current_nodes <= job->n_min || half < front_legal.front()) continue;
      if (!std::binary_search(cfg.legal_set.begin(), cfg.legal_set.end(), job->current_nodes - half)) continue;
      if (!victim || by_metric(victim, job)) victim = job;
    }
    if (victim) {
      const int released = victim->current_nodes / 2;
      out.scale_downs[victim->id] = victim->current_nodes - released;
      out.starts[front.id] = largest_fitting(front_legal, released);
    }
  } else {
    out.scenario = 4;
  }

  for (const auto* job : running)
    if (!out.scale_ups.count(job->id) && !out.scale_downs.count(job->id)) out.unchanged.insert(job->id);
  return out;
}

}  // namespace elastic
