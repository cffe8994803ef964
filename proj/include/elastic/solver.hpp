#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "elastic/domain_model.hpp"
#include "elastic/error.hpp"
#include "elastic/milp_builder.hpp"

namespace elastic {

struct SolverBudget {
  double time_limit = 2.0;  // seconds
  double gap_target = 0.0;  // 0 proves optimality
  std::optional<std::uint64_t> node_limit;

  void validate() const {
    if (!(time_limit > 0.0)) throw Error(ErrorKind::config, "solver time limit must be positive");
    if (!(gap_target >= 0.0 && gap_target < 1.0)) throw Error(ErrorKind::config, "gap target must lie in [0, 1)");
  }

  static SolverBudget unlimited() { return {std::numeric_limits<double>::infinity(), 0.0, std::nullopt}; }
};

enum class SolveStatus { optimal, feasible_with_gap, infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible_with_gap: return "feasible_with_gap";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

/// One improvement of the incumbent during a search.
struct IncumbentEvent {
  double elapsed = 0.0;  // seconds since the solve started
  double objective = 0.0;
  double bound = 0.0;
  std::uint64_t node = 0;

  double gap() const { return (bound - objective) / std::max(objective, 1e-9); }
};

struct SolveResult {
  EpochPlan plan;
  SolveStatus status = SolveStatus::infeasible;
  double bound = 0.0;
  std::uint64_t explored_nodes = 0;
  bool budget_exhausted = false;
  NodeGrid nodes;  // nodes[i][t] per admitted job
  std::vector<IncumbentEvent> incumbents;
};

inline constexpr double kOracleEnumerationLimit = 1e7;
inline constexpr double kObjectiveTieTolerance = 1e-9;

namespace detail {

inline double relative_gap(double bound, double objective) {
  return std::max(0.0, bound - objective) / std::max(objective, 1e-9);
}

inline EpochPlan empty_plan(const AllocationProgram& prog) {
  EpochPlan plan;
  for (const auto& id : prog.deferred) {
    plan.assignments[id].assign(static_cast<std::size_t>(prog.horizon), 0);
    plan.served_profile[id].assign(static_cast<std::size_t>(prog.horizon), 0.0);
  }
  return plan;
}

// Materializes the grid in the program's own encoding, re-validates every
// row independently of how the grid was found, and decodes it.
inline EpochPlan certified_plan(const AllocationProgram& prog, const NodeGrid& nodes) {
  const auto raw = materialize(prog, nodes);
  if (auto violation = check_solution(prog, raw))
    throw Error(ErrorKind::infeasible, "solver produced an infeasible plan: " + *violation);
  return decode(prog, raw);
}

}  // namespace detail

/// Exhaustive search over every per-(job, step) choice from K_i. Candidates
/// are scored through the program itself: materialized in its encoding,
/// checked against every row, and valued by its objective coefficients.
/// Ties keep the lexicographically largest t-major node vector.
inline SolveResult solve_oracle(const AllocationProgram& prog) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = prog.jobs.size();
  const auto T = static_cast<std::size_t>(prog.horizon);

  SolveResult result;
  if (m == 0) {
    result.plan = detail::empty_plan(prog);
    result.status = SolveStatus::optimal;
    return result;
  }

  double combos = 1.0;
  for (const auto& job : prog.jobs) combos *= std::pow(static_cast<double>(job.legal.size()), static_cast<double>(T));
  if (combos > kOracleEnumerationLimit)
    throw Error(ErrorKind::size, "oracle would enumerate " + std::to_string(combos) + " assignments");

  std::vector<std::size_t> idx(m * T, 0);  // t-major: position t*m + i
  NodeGrid grid(m, std::vector<int>(T, 0));
  std::optional<NodeGrid> best;
  double best_obj = -std::numeric_limits<double>::infinity();

  while (true) {
    bool fits = true;
    for (std::size_t t = 0; t < T && fits; ++t) {
      long long used = 0;
      for (std::size_t i = 0; i < m; ++i) {
        grid[i][t] = prog.jobs[i].legal[idx[t * m + i]];
        used += grid[i][t];
      }
      fits = used <= prog.capacity;
    }
    if (fits) {
      const auto raw = materialize(prog, grid);
      if (!check_solution(prog, raw)) {
        const double obj = prog.objective_value(raw);
        // Later candidates are lexicographically larger, so ties replace.
        if (obj >= best_obj - kObjectiveTieTolerance) {
          best_obj = std::max(best_obj, obj);
          best = grid;
        }
      }
    }
    // Odometer, last position fastest: ascending lexicographic order.
    std::size_t pos = idx.size();
    while (pos > 0) {
      --pos;
      const std::size_t i = pos % m;
      if (++idx[pos] < prog.jobs[i].legal.size()) break;
      idx[pos] = 0;
      if (pos == 0) {
        pos = idx.size() + 1;
        break;
      }
    }
    if (pos == idx.size() + 1) break;
  }

  result.explored_nodes = static_cast<std::uint64_t>(combos);
  if (!best) {
    result.status = SolveStatus::infeasible;
    return result;
  }
  result.nodes = *best;
  result.plan = detail::certified_plan(prog, *best);
  result.status = SolveStatus::optimal;
  result.bound = result.plan.objective;
  result.plan.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace detail {

// Depth-first branch-and-bound over (step, job) -> k decisions, t-major, k
// descending. Upper bounds come from the Lagrangian dual of the continuous
// relaxation in which node counts move along the concave envelope of
// {(k, speed(k))} and the per-step capacity rows are priced by lambda_t.
// Any lambda >= 0 yields a valid bound; lambda is tuned by subgradient steps
// at the root and reused below it.
class BranchAndBound {
 public:
  BranchAndBound(const AllocationProgram& prog, const SolverBudget& budget)
      : prog_(prog), budget_(budget), m_(prog.jobs.size()), T_(static_cast<std::size_t>(prog.horizon)) {
    const double p = prog.step_hours;
    for (const auto& job : prog.jobs) {
      JobData d;
      d.demand = job.demand;
      d.inv_demand = 1.0 / job.demand;
      d.legal = job.legal;
      for (int k : job.legal) d.gain.push_back(prog.speed.step_progress(k, p));
      for (std::size_t j = 1; j < d.legal.size(); ++j) {
        Segment s;
        s.nodes = d.legal[j] - d.legal[j - 1];
        s.work = d.gain[j] - d.gain[j - 1];
        s.nodes_per_work = s.nodes / s.work;
        d.segments.push_back(s);
      }
      data_.push_back(std::move(d));
    }
    suffix_lo_.assign(m_ + 1, 0);
    for (std::size_t i = m_; i-- > 0;) suffix_lo_[i] = suffix_lo_[i + 1] + data_[i].legal.front();
    lambda_.assign(T_, 0.0);
    usage_.assign(T_, 0.0);
  }

  SolveResult run() {
    start_ = std::chrono::steady_clock::now();
    SolveResult result;
    if (m_ == 0) {
      result.plan = empty_plan(prog_);
      result.status = SolveStatus::optimal;
      return result;
    }
    if (suffix_lo_[0] > prog_.capacity) {
      result.plan = empty_plan(prog_);
      result.status = SolveStatus::infeasible;
      return result;
    }

    choice_.assign(m_ * T_, 0);
    served_.assign(m_, 0.0);
    used_.assign(T_, 0);
    partial_ = 0.0;

    optimize_root_multipliers();
    seed_incumbent();
    const bool complete = dfs(0);

    result.explored_nodes = nodes_;
    result.budget_exhausted = !complete;
    result.incumbents = events_;
    result.nodes = to_grid(best_choice_);
    result.plan = certified_plan(prog_, result.nodes);
    const double obj = result.plan.objective;
    if (complete) {
      result.bound = obj;
      result.status = SolveStatus::optimal;
    } else {
      result.bound = std::max(obj, root_bound_);
      result.status = relative_gap(result.bound, obj) <= 1e-6 ? SolveStatus::optimal : SolveStatus::feasible_with_gap;
    }
    result.plan.gap = result.status == SolveStatus::optimal && complete ? 0.0 : relative_gap(result.bound, obj);
    result.plan.solve_time = elapsed();
    return result;
  }

 private:
  struct Segment {
    int nodes = 0;
    double work = 0.0;
    double nodes_per_work = 0.0;
  };
  struct JobData {
    double demand = 0.0;
    double inv_demand = 0.0;
    LegalSet legal;
    std::vector<double> gain;  // p * speed(k) per legal k
    std::vector<Segment> segments;
  };
  struct Piece {
    double rate;
    double work;
    int nodes;
    std::size_t step;
  };

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  // Number of decided steps of job i once the first q t-major decisions are fixed.
  std::size_t decided_steps(std::size_t q, std::size_t i) const { return q > i ? (q - i + m_ - 1) / m_ : 0; }

  // Dual function at lambda for the subproblem below decision q. Fills
  // usage_ with the relaxed node usage per step (a subgradient ingredient)
  // when requested.
  double dual_value(std::size_t q, const std::vector<double>& lambda, bool want_usage) {
    const std::size_t front = q / m_;
    if (want_usage) std::fill(usage_.begin(), usage_.end(), 0.0);
    double value = 0.0;
    for (std::size_t t = front; t < T_; ++t) value += lambda[t] * (prog_.capacity - used_[t]);

    for (std::size_t i = 0; i < m_; ++i) {
      const auto& d = data_[i];
      const std::size_t t0 = decided_steps(q, i);
      const double base = served_[i];
      value += static_cast<double>(T_ - t0) * base * d.inv_demand;
      if (t0 == T_) continue;
      double remaining = d.demand - base;
      const int lo = d.legal.front();

      pieces_.clear();
      for (std::size_t t = t0; t < T_; ++t) {
        const double weight = static_cast<double>(T_ - t) * d.inv_demand;
        value -= lambda[t] * lo;
        if (want_usage) usage_[t] += lo;
        pieces_.push_back({weight, d.gain.front(), 0, t});
        for (const auto& s : d.segments) {
          const double rate = weight - lambda[t] * s.nodes_per_work;
          if (rate <= 0.0) break;  // rates fall along the concave envelope
          pieces_.push_back({rate, s.work, s.nodes, t});
        }
      }
      std::stable_sort(pieces_.begin(), pieces_.end(),
                       [](const Piece& a, const Piece& b) { return a.rate > b.rate; });
      for (const auto& pc : pieces_) {
        if (remaining <= 0.0) break;
        const double take = std::min(pc.work, remaining);
        remaining -= take;
        value += pc.rate * take;
        if (want_usage) usage_[pc.step] += pc.nodes * (take / pc.work);
      }
    }
    return value;
  }

  double node_bound(std::size_t q) { return partial_ + dual_value(q, lambda_, false); }

  // Water-level starting prices, then projected subgradient descent on the
  // dual; keeps the best multipliers seen.
  void optimize_root_multipliers() {
    std::vector<double> lam(T_, 0.0);
    for (std::size_t t = 0; t < T_; ++t) {
      double spare = prog_.capacity - static_cast<double>(suffix_lo_[0]);
      std::vector<std::pair<double, int>> rates;  // value per node, nodes
      for (std::size_t i = 0; i < m_; ++i) {
        const auto& d = data_[i];
        const double weight = static_cast<double>(T_ - t) * d.inv_demand;
        double left = d.demand - d.gain.front();
        for (const auto& s : d.segments) {
          if (left <= 0.0) break;
          rates.push_back({weight * s.work / s.nodes, s.nodes});
          left -= s.work;
        }
      }
      std::stable_sort(rates.begin(), rates.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (const auto& [rate, nodes] : rates) {
        lam[t] = rate;
        spare -= nodes;
        if (spare < 0.0) break;
      }
      if (spare >= 0.0) lam[t] = 0.0;
    }

    lambda_ = lam;
    double best = dual_value(0, lam, false);
    const double floor = greedy_objective_estimate();
    double theta = 1.0;
    int stall = 0;
    for (int iter = 0; iter < 60; ++iter) {
      const double value = dual_value(0, lam, true);
      if (value < best - 1e-12) {
        best = value;
        lambda_ = lam;
        stall = 0;
      } else if (++stall >= 5) {
        theta *= 0.5;
        stall = 0;
      }
      double norm = 0.0;
      std::vector<double> grad(T_);
      for (std::size_t t = 0; t < T_; ++t) {
        grad[t] = prog_.capacity - usage_[t];
        // Slack capacity with zero price cannot lower the dual further.
        if (lam[t] <= 0.0 && grad[t] > 0.0) grad[t] = 0.0;
        norm += grad[t] * grad[t];
      }
      if (norm <= 1e-18 || theta < 1e-4) break;
      const double step = theta * std::max(value - floor, 1e-9 * std::max(1.0, value)) / norm;
      for (std::size_t t = 0; t < T_; ++t) lam[t] = std::max(0.0, lam[t] - step * grad[t]);
    }
    root_bound_ = best;
  }

  // Objective of a quick FIFO fill at minimum counts; only used as the
  // Polyak target for the subgradient step size.
  double greedy_objective_estimate() const {
    double obj = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& d = data_[i];
      double s = 0.0;
      for (std::size_t t = 0; t < T_; ++t) {
        s = std::min(d.demand, s + d.gain.front());
        obj += s * d.inv_demand;
      }
    }
    return obj;
  }

  double job_objective(const std::vector<std::size_t>& choice, std::size_t i) const {
    const auto& d = data_[i];
    double obj = 0.0, s = 0.0;
    for (std::size_t t = 0; t < T_; ++t) {
      s = std::min(d.demand, s + d.gain[choice[t * m_ + i]]);
      obj += s * d.inv_demand;
    }
    return obj;
  }

  double grid_objective(const std::vector<std::size_t>& choice) const {
    double obj = 0.0;
    for (std::size_t i = 0; i < m_; ++i) obj += job_objective(choice, i);
    return obj;
  }

  // Rounds the relaxed usage at the root multipliers down onto K_i, repairs
  // capacity by stepping the largest allocations down, then spends leftover
  // capacity on the best single-step upgrades.
  void seed_incumbent() {
    std::vector<std::size_t> choice(m_ * T_, 0);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& d = data_[i];
      const int lo = d.legal.front();
      std::vector<double> x(T_, lo);
      double remaining = d.demand;
      pieces_.clear();
      for (std::size_t t = 0; t < T_; ++t) {
        const double weight = static_cast<double>(T_ - t) * d.inv_demand;
        pieces_.push_back({weight, d.gain.front(), 0, t});
        for (const auto& s : d.segments) {
          const double rate = weight - lambda_[t] * s.nodes_per_work;
          if (rate <= 0.0) break;
          pieces_.push_back({rate, s.work, s.nodes, t});
        }
      }
      std::stable_sort(pieces_.begin(), pieces_.end(),
                       [](const Piece& a, const Piece& b) { return a.rate > b.rate; });
      for (const auto& pc : pieces_) {
        if (remaining <= 0.0) break;
        const double take = std::min(pc.work, remaining);
        remaining -= take;
        x[pc.step] += pc.nodes * (take / pc.work);
      }
      for (std::size_t t = 0; t < T_; ++t) {
        std::size_t j = 0;
        while (j + 1 < d.legal.size() && d.legal[j + 1] <= x[t] + 1e-9) ++j;
        choice[t * m_ + i] = j;
      }
    }
    for (std::size_t t = 0; t < T_; ++t) {
      long long used = 0;
      for (std::size_t i = 0; i < m_; ++i) used += data_[i].legal[choice[t * m_ + i]];
      while (used > prog_.capacity) {
        std::size_t victim = m_;
        for (std::size_t i = 0; i < m_; ++i) {
          const auto c = choice[t * m_ + i];
          if (c == 0) continue;
          if (victim == m_ || data_[i].legal[c] >= data_[victim].legal[choice[t * m_ + victim]]) victim = i;
        }
        auto& c = choice[t * m_ + victim];
        used -= data_[victim].legal[c] - data_[victim].legal[c - 1];
        --c;
      }
    }
    for (std::size_t t = 0; t < T_; ++t) {
      while (true) {
        long long used = 0;
        for (std::size_t i = 0; i < m_; ++i) used += data_[i].legal[choice[t * m_ + i]];
        double best_rate = 0.0;
        std::size_t best_i = m_;
        for (std::size_t i = 0; i < m_; ++i) {
          auto& c = choice[t * m_ + i];
          if (c + 1 >= data_[i].legal.size()) continue;
          const int extra = data_[i].legal[c + 1] - data_[i].legal[c];
          if (used + extra > prog_.capacity) continue;
          const double before = job_objective(choice, i);
          ++c;
          const double rate = (job_objective(choice, i) - before) / extra;
          --c;
          if (rate > best_rate + 1e-15) {
            best_rate = rate;
            best_i = i;
          }
        }
        if (best_i == m_) break;
        ++choice[t * m_ + best_i];
      }
    }
    offer(choice, grid_objective(choice));
  }

  void offer(const std::vector<std::size_t>& choice, double obj) {
    bool better = obj > best_obj_ + kObjectiveTieTolerance;
    if (!better && std::abs(obj - best_obj_) <= kObjectiveTieTolerance && !best_choice_.empty())
      better = lexicographically_larger(choice, best_choice_);
    if (!better) return;
    const bool improved = obj > best_obj_;
    best_obj_ = std::max(best_obj_, obj);
    best_choice_ = choice;
    if (improved || events_.empty()) events_.push_back({elapsed(), best_obj_, root_bound_, nodes_});
  }

  // Compares node counts in t-major order.
  bool lexicographically_larger(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
    for (std::size_t q = 0; q < a.size(); ++q) {
      const int ka = data_[q % m_].legal[a[q]];
      const int kb = data_[q % m_].legal[b[q]];
      if (ka != kb) return ka > kb;
    }
    return false;
  }

  bool out_of_budget() {
    if (stopped_) return true;
    if (budget_.node_limit && nodes_ >= *budget_.node_limit) stopped_ = true;
    if ((nodes_ & 127) == 0 && std::isfinite(budget_.time_limit) && elapsed() >= budget_.time_limit)
      stopped_ = true;
    if (budget_.gap_target > 0.0 && relative_gap(root_bound_, best_obj_) <= budget_.gap_target) stopped_ = true;
    return stopped_;
  }

  // Returns false when the budget cut the subtree short.
  bool dfs(std::size_t q) {
    if (q == m_ * T_) {
      offer(choice_, partial_);
      return true;
    }
    const std::size_t t = q / m_;
    const std::size_t i = q % m_;
    const auto& d = data_[i];
    const double saved = served_[i];
    for (std::size_t j = d.legal.size(); j-- > 0;) {
      const int k = d.legal[j];
      if (used_[t] + k + suffix_lo_[i + 1] > prog_.capacity) continue;
      if (out_of_budget()) return false;
      ++nodes_;
      const double s = std::min(d.demand, saved + d.gain[j]);
      served_[i] = s;
      partial_ += s * d.inv_demand;
      used_[t] += k;
      choice_[q] = j;

      bool complete = true;
      if (node_bound(q + 1) >= best_obj_ - kObjectiveTieTolerance) complete = dfs(q + 1);

      used_[t] -= k;
      partial_ -= s * d.inv_demand;
      served_[i] = saved;
      if (!complete) return false;
    }
    return true;
  }

  NodeGrid to_grid(const std::vector<std::size_t>& choice) const {
    NodeGrid grid(m_, std::vector<int>(T_, 0));
    for (std::size_t t = 0; t < T_; ++t)
      for (std::size_t i = 0; i < m_; ++i) grid[i][t] = data_[i].legal[choice[t * m_ + i]];
    return grid;
  }

  const AllocationProgram& prog_;
  SolverBudget budget_;
  std::size_t m_;
  std::size_t T_;
  std::vector<JobData> data_;
  std::vector<long long> suffix_lo_;
  std::vector<double> lambda_;
  std::vector<double> usage_;
  std::vector<Piece> pieces_;

  std::vector<std::size_t> choice_;
  std::vector<double> served_;
  std::vector<long long> used_;
  double partial_ = 0.0;

  std::vector<std::size_t> best_choice_;
  double best_obj_ = -std::numeric_limits<double>::infinity();
  double root_bound_ = std::numeric_limits<double>::infinity();
  std::vector<IncumbentEvent> events_;
  std::uint64_t nodes_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Branch-and-bound search honoring the same model as the program. The
/// returned plan is re-validated against every program row.
inline SolveResult solve_bnb(const AllocationProgram& prog, const SolverBudget& budget) {
  budget.validate();
  return detail::BranchAndBound(prog, budget).run();
}

/// Relaxation bound at the root, exposed for property tests.
inline double relaxation_bound(const AllocationProgram& prog) {
  SolverBudget probe{1e9, 0.0, std::uint64_t{0}};
  return solve_bnb(prog, probe).bound;
}

/// admit -> build (assignment encoding) -> branch-and-bound -> decode.
inline SolveResult plan_epoch_detailed(const ClusterSnapshot& snapshot, const ClusterConfig& cfg,
                                       const SolverBudget& budget) {
  const auto start = std::chrono::steady_clock::now();
  const auto prog = build(admit(snapshot), cfg, Encoding::assignment);
  auto result = solve_bnb(prog, budget);
  if (result.status == SolveStatus::infeasible)
    throw Error(ErrorKind::infeasible, "no feasible allocation for the admitted jobs");
  result.plan.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline EpochPlan plan_epoch(const ClusterSnapshot& snapshot, const ClusterConfig& cfg, const SolverBudget& budget) {
  return plan_epoch_detailed(snapshot, cfg, budget).plan;
}

}  // namespace elastic
