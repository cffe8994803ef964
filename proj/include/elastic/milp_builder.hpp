#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elastic/domain_model.hpp"
#include "elastic/error.hpp"
#include "elastic/speed_model.hpp"

namespace elastic {

/// delta_big_m: paired indicators per legal k with big-M sandwich rows, the
/// cardinality row sum(dm) + sum(dp) = |K_i| + 1 and the speed coefficient
/// sum_k speed(k) * (dm_k + dp_k - 1).
/// assignment: one-hot x_k per legal k, n = sum_k k x_k, speed sum_k speed(k) x_k.
enum class Encoding { delta_big_m, assignment };

inline const char* to_string(Encoding e) { return e == Encoding::delta_big_m ? "delta_big_m" : "assignment"; }

enum class VarKind { continuous, integer, binary };

struct Variable {
  std::string name;
  VarKind kind = VarKind::continuous;
  double lower = 0.0;
  double upper = HUGE_VAL;
  double objective = 0.0;
};

enum class RowSense { less_equal, greater_equal, equal };

enum class RowFamily {
  demand_cap,   // s <= d
  max_nodes,    // n <= n_max
  min_nodes,    // n >= n_min
  capacity,     // sum_i n <= N, one per step
  sandwich,     // big-M bounds on n - k and k - n
  cardinality,  // sum dm + sum dp = |K_i| + 1
  one_hot,      // sum x = 1
  link,         // n - sum k x = 0
  progress,     // s^t <= s^{t-1} + p * speed coefficient
};

struct Term {
  int column = 0;
  double coef = 0.0;
};

struct Row {
  std::string name;
  RowFamily family = RowFamily::demand_cap;
  RowSense sense = RowSense::less_equal;
  double rhs = 0.0;
  std::vector<Term> terms;
};

struct ProgramJob {
  JobId id;
  double demand = 0.0;  // observed remaining demand d_i
  int n_min = 1;
  int n_max = 16;
  LegalSet legal;  // K_i
  bool training = false;
  int current_nodes = 0;
};

struct AdmissionResult {
  std::vector<SnapshotJob> admitted;
  std::vector<SnapshotJob> deferred;
};

/// Training jobs first, then queued jobs in FIFO order, each admitted while
/// the running sum of n_min stays within capacity.
inline AdmissionResult admit(const ClusterSnapshot& snapshot) {
  AdmissionResult out;
  long long used = 0;
  for (const auto& job : snapshot.jobs) {
    if (!job.training) continue;
    used += job.n_min;
    out.admitted.push_back(job);
  }
  if (used > snapshot.total_nodes)
    throw Error(ErrorKind::infeasible, "training jobs need " + std::to_string(used) +
                                           " nodes at their minimum but capacity is " +
                                           std::to_string(snapshot.total_nodes));
  for (const auto& job : snapshot.jobs) {
    if (job.training) continue;
    if (used + job.n_min <= snapshot.total_nodes) {
      used += job.n_min;
      out.admitted.push_back(job);
    } else {
      out.deferred.push_back(job);
    }
  }
  return out;
}

struct AllocationProgram {
  Encoding encoding = Encoding::assignment;
  std::vector<ProgramJob> jobs;
  std::vector<JobId> deferred;
  int horizon = 1;
  int capacity = 0;
  double step_hours = 0.0;
  double big_m = 0.0;  // delta encoding only
  SpeedCurve speed;
  std::vector<Variable> variables;
  std::vector<Row> rows;

  // Column layout: per job, per step a block [n, s, choice binaries...].
  std::vector<int> block_offset;
  std::vector<int> block_size;

  int n_column(std::size_t i, int t) const { return block_offset[i] + t * block_size[i]; }
  int s_column(std::size_t i, int t) const { return n_column(i, t) + 1; }
  int delta_minus_column(std::size_t i, int t, std::size_t k) const {
    return n_column(i, t) + 2 + 2 * static_cast<int>(k);
  }
  int delta_plus_column(std::size_t i, int t, std::size_t k) const { return delta_minus_column(i, t, k) + 1; }
  int x_column(std::size_t i, int t, std::size_t k) const { return n_column(i, t) + 2 + static_cast<int>(k); }

  std::size_t count_variables(VarKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(variables.begin(), variables.end(), [&](const Variable& v) { return v.kind == kind; }));
  }
  std::size_t count_rows(RowFamily family) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const Row& r) { return r.family == family; }));
  }

  double objective_value(std::span<const double> raw) const {
    double v = 0.0;
    for (std::size_t c = 0; c < variables.size(); ++c)
      if (variables[c].objective != 0.0) v += variables[c].objective * raw[c];
    return v;
  }
};

namespace detail {

inline std::string job_step(const ProgramJob& job, int t) { return job.id + "," + std::to_string(t + 1); }

}  // namespace detail

/// Assembles the epoch decision program for the admitted jobs.
inline AllocationProgram build(const AdmissionResult& admission, const ClusterConfig& cfg, Encoding encoding) {
  cfg.validate();
  if (cfg.horizon_steps < 1) throw Error(ErrorKind::build, "horizon must have at least one step");
  long long min_sum = 0;
  for (const auto& j : admission.admitted) min_sum += j.n_min;
  if (min_sum > cfg.total_nodes)
    throw Error(ErrorKind::build, "admitted jobs need " + std::to_string(min_sum) + " nodes but capacity is " +
                                      std::to_string(cfg.total_nodes));

  AllocationProgram prog;
  prog.encoding = encoding;
  prog.speed = cfg.speed_curve();
  prog.horizon = cfg.horizon_steps;
  prog.capacity = cfg.total_nodes;
  prog.step_hours = cfg.step_hours();
  prog.big_m = static_cast<double>(cfg.total_nodes + cfg.legal_set.back() + 1);
  for (const auto& j : admission.deferred) prog.deferred.push_back(j.id);
  for (const auto& j : admission.admitted) {
    if (!(j.remaining > 0.0)) throw Error(ErrorKind::build, "job '" + j.id + "' has no remaining demand");
    prog.jobs.push_back({j.id, j.remaining, j.n_min, j.n_max, legal_set_for(j.n_min, j.n_max, cfg), j.training,
                         j.current_nodes});
  }

  const int T = prog.horizon;
  const double p = prog.step_hours;
  const double M = prog.big_m;
  const bool delta = encoding == Encoding::delta_big_m;

  int offset = 0;
  for (const auto& job : prog.jobs) {
    const int kn = static_cast<int>(job.legal.size());
    const int size = 2 + (delta ? 2 * kn : kn);
    prog.block_offset.push_back(offset);
    prog.block_size.push_back(size);
    offset += size * T;
  }
  prog.variables.resize(static_cast<std::size_t>(offset));

  for (std::size_t i = 0; i < prog.jobs.size(); ++i) {
    const auto& job = prog.jobs[i];
    for (int t = 0; t < T; ++t) {
      const std::string js = detail::job_step(job, t);
      prog.variables[prog.n_column(i, t)] = {"n[" + js + "]", VarKind::integer, 0.0,
                                             static_cast<double>(prog.capacity), 0.0};
      prog.variables[prog.s_column(i, t)] = {"s[" + js + "]", VarKind::continuous, 0.0, HUGE_VAL, 1.0 / job.demand};
      for (std::size_t k = 0; k < job.legal.size(); ++k) {
        const std::string ks = js + "," + std::to_string(job.legal[k]);
        if (delta) {
          prog.variables[prog.delta_minus_column(i, t, k)] = {"dm[" + ks + "]", VarKind::binary, 0.0, 1.0, 0.0};
          prog.variables[prog.delta_plus_column(i, t, k)] = {"dp[" + ks + "]", VarKind::binary, 0.0, 1.0, 0.0};
        } else {
          prog.variables[prog.x_column(i, t, k)] = {"x[" + ks + "]", VarKind::binary, 0.0, 1.0, 0.0};
        }
      }
    }
  }

  auto add = [&](std::string name, RowFamily family, RowSense sense, double rhs, std::vector<Term> terms) {
    prog.rows.push_back({std::move(name), family, sense, rhs, std::move(terms)});
  };

  for (std::size_t i = 0; i < prog.jobs.size(); ++i) {
    const auto& job = prog.jobs[i];
    const auto kn = job.legal.size();
    double speed_sum = 0.0;
    for (int k : job.legal) speed_sum += prog.speed.speed(k);

    for (int t = 0; t < T; ++t) {
      const std::string js = detail::job_step(job, t);
      const int n = prog.n_column(i, t);
      const int s = prog.s_column(i, t);
      add("demand[" + js + "]", RowFamily::demand_cap, RowSense::less_equal, job.demand, {{s, 1.0}});
      add("nmax[" + js + "]", RowFamily::max_nodes, RowSense::less_equal, job.n_max, {{n, 1.0}});
      add("nmin[" + js + "]", RowFamily::min_nodes, RowSense::greater_equal, job.n_min, {{n, 1.0}});

      std::vector<Term> progress{{s, 1.0}};
      if (t > 0) progress.push_back({prog.s_column(i, t - 1), -1.0});
      double progress_rhs = 0.0;

      if (delta) {
        std::vector<Term> card;
        for (std::size_t k = 0; k < kn; ++k) {
          const double kv = job.legal[k];
          const std::string ks = js + "," + std::to_string(job.legal[k]);
          const int dm = prog.delta_minus_column(i, t, k);
          const int dp = prog.delta_plus_column(i, t, k);
          // (1 - dm)/M - M dm <= n - k <= M (1 - dm)
          add("dm_lo[" + ks + "]", RowFamily::sandwich, RowSense::greater_equal, kv + 1.0 / M,
              {{n, 1.0}, {dm, M + 1.0 / M}});
          add("dm_up[" + ks + "]", RowFamily::sandwich, RowSense::less_equal, kv + M, {{n, 1.0}, {dm, M}});
          // (1 - dp)/M - M dp <= k - n <= M (1 - dp)
          add("dp_lo[" + ks + "]", RowFamily::sandwich, RowSense::greater_equal, 1.0 / M - kv,
              {{n, -1.0}, {dp, M + 1.0 / M}});
          add("dp_up[" + ks + "]", RowFamily::sandwich, RowSense::less_equal, M - kv, {{n, -1.0}, {dp, M}});
          card.push_back({dm, 1.0});
          card.push_back({dp, 1.0});
          const double c = p * prog.speed.speed(job.legal[k]);
          progress.push_back({dm, -c});
          progress.push_back({dp, -c});
        }
        add("card[" + js + "]", RowFamily::cardinality, RowSense::equal, static_cast<double>(kn + 1),
            std::move(card));
        // p * sum_k speed(k) (dm + dp - 1): the constant moves to the right-hand side.
        progress_rhs = -p * speed_sum;
      } else {
        std::vector<Term> onehot;
        std::vector<Term> link{{n, 1.0}};
        for (std::size_t k = 0; k < kn; ++k) {
          const int x = prog.x_column(i, t, k);
          onehot.push_back({x, 1.0});
          link.push_back({x, -static_cast<double>(job.legal[k])});
          progress.push_back({x, -p * prog.speed.speed(job.legal[k])});
        }
        add("onehot[" + js + "]", RowFamily::one_hot, RowSense::equal, 1.0, std::move(onehot));
        add("link[" + js + "]", RowFamily::link, RowSense::equal, 0.0, std::move(link));
      }
      add("progress[" + js + "]", RowFamily::progress, RowSense::less_equal, progress_rhs, std::move(progress));
    }
  }

  for (int t = 0; t < T; ++t) {
    std::vector<Term> cap;
    for (std::size_t i = 0; i < prog.jobs.size(); ++i) cap.push_back({prog.n_column(i, t), 1.0});
    add("capacity[" + std::to_string(t + 1) + "]", RowFamily::capacity, RowSense::less_equal, prog.capacity,
        std::move(cap));
  }
  return prog;
}

inline AllocationProgram build(const ClusterSnapshot& snapshot, const ClusterConfig& cfg, Encoding encoding) {
  return build(admit(snapshot), cfg, encoding);
}

/// nodes[i][t] for every admitted job and step.
using NodeGrid = std::vector<std::vector<int>>;

/// Raw column values for a node grid, with served demand at its tight value
/// s^t = min(d, s^{t-1} + p * speed(n^t)).
inline std::vector<double> materialize(const AllocationProgram& prog, const NodeGrid& nodes) {
  std::vector<double> raw(prog.variables.size(), 0.0);
  for (std::size_t i = 0; i < prog.jobs.size(); ++i) {
    const auto& job = prog.jobs[i];
    double served = 0.0;
    for (int t = 0; t < prog.horizon; ++t) {
      const int n = nodes[i][static_cast<std::size_t>(t)];
      served = std::min(job.demand, served + prog.speed.step_progress(n, prog.step_hours));
      raw[prog.n_column(i, t)] = n;
      raw[prog.s_column(i, t)] = served;
      for (std::size_t k = 0; k < job.legal.size(); ++k) {
        const int kv = job.legal[k];
        if (prog.encoding == Encoding::delta_big_m) {
          raw[prog.delta_minus_column(i, t, k)] = n <= kv ? 1.0 : 0.0;
          raw[prog.delta_plus_column(i, t, k)] = n >= kv ? 1.0 : 0.0;
        } else {
          raw[prog.x_column(i, t, k)] = n == kv ? 1.0 : 0.0;
        }
      }
    }
  }
  return raw;
}

inline constexpr double kFeasibilityTolerance = 1e-6;
inline constexpr double kIntegralityTolerance = 1e-4;

/// First violated bound, integrality requirement or row, if any.
inline std::optional<std::string> check_solution(const AllocationProgram& prog, std::span<const double> raw,
                                                 double tol = kFeasibilityTolerance) {
  if (raw.size() != prog.variables.size()) return "raw solution has wrong length";
  for (std::size_t c = 0; c < raw.size(); ++c) {
    const auto& v = prog.variables[c];
    const double x = raw[c];
    if (!std::isfinite(x)) return "variable " + v.name + " is not finite";
    if (x < v.lower - tol || x > v.upper + tol) return "variable " + v.name + " out of bounds";
    if (v.kind != VarKind::continuous && std::abs(x - std::round(x)) > kIntegralityTolerance)
      return "variable " + v.name + " is not integral";
  }
  for (const auto& row : prog.rows) {
    double lhs = 0.0;
    for (const auto& term : row.terms) lhs += term.coef * raw[static_cast<std::size_t>(term.column)];
    const double slack = tol * std::max(1.0, std::abs(row.rhs));
    const bool ok = row.sense == RowSense::less_equal      ? lhs <= row.rhs + slack
                    : row.sense == RowSense::greater_equal ? lhs >= row.rhs - slack
                                                           : std::abs(lhs - row.rhs) <= slack;
    if (!ok) return "row " + row.name + " violated";
  }
  return std::nullopt;
}

/// Recovers per-job node counts and served profiles. Every (job, step) must
/// select exactly one legal k, and n must equal it.
inline EpochPlan decode(const AllocationProgram& prog, std::span<const double> raw) {
  if (raw.size() != prog.variables.size()) throw Error(ErrorKind::decode, "raw solution has wrong length");
  auto as_int = [&](int column) {
    const double x = raw[static_cast<std::size_t>(column)];
    const double r = std::round(x);
    if (std::abs(x - r) > kIntegralityTolerance)
      throw Error(ErrorKind::decode, prog.variables[static_cast<std::size_t>(column)].name + " is not integral");
    return static_cast<int>(r);
  };

  EpochPlan plan;
  for (std::size_t i = 0; i < prog.jobs.size(); ++i) {
    const auto& job = prog.jobs[i];
    auto& nodes = plan.assignments[job.id];
    auto& served = plan.served_profile[job.id];
    for (int t = 0; t < prog.horizon; ++t) {
      const int n = as_int(prog.n_column(i, t));
      int selected = 0, selected_count = 0, indicator_sum = 0;
      for (std::size_t k = 0; k < job.legal.size(); ++k) {
        if (prog.encoding == Encoding::delta_big_m) {
          const int dm = as_int(prog.delta_minus_column(i, t, k));
          const int dp = as_int(prog.delta_plus_column(i, t, k));
          indicator_sum += dm + dp;
          if (dm == 1 && dp == 1) {
            selected = job.legal[k];
            ++selected_count;
          }
        } else if (as_int(prog.x_column(i, t, k)) == 1) {
          selected = job.legal[k];
          ++selected_count;
        }
      }
      const std::string where = " for job '" + job.id + "' step " + std::to_string(t + 1);
      if (selected_count != 1)
        throw Error(ErrorKind::decode, std::to_string(selected_count) + " node counts selected" + where);
      if (prog.encoding == Encoding::delta_big_m && indicator_sum != static_cast<int>(job.legal.size()) + 1)
        throw Error(ErrorKind::decode, "indicator sum " + std::to_string(indicator_sum) + " != |K|+1" + where);
      if (n != selected)
        throw Error(ErrorKind::decode, "n=" + std::to_string(n) + " disagrees with selected k=" +
                                           std::to_string(selected) + where);
      const double s = raw[static_cast<std::size_t>(prog.s_column(i, t))];
      nodes.push_back(n);
      served.push_back(s);
      plan.objective += s / job.demand;
    }
  }
  for (const auto& id : prog.deferred) {
    plan.assignments[id].assign(static_cast<std::size_t>(prog.horizon), 0);
    plan.served_profile[id].assign(static_cast<std::size_t>(prog.horizon), 0.0);
  }
  return plan;
}

namespace detail {

// Shortest "%.*g" rendering that fits the 12-character fixed-MPS value field.
inline std::string mps_number(double v) {
  char buf[64];
  for (int precision = 12; precision >= 1; --precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::string_view(buf).size() <= 12) break;
  }
  return buf;
}

inline std::string mps_line(std::string_view f1, std::string_view f2, std::string_view f3, std::string_view f4,
                            std::string_view f5 = {}, std::string_view f6 = {}) {
  // Fixed MPS columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61.
  std::string line(61, ' ');
  auto put = [&](std::size_t col, std::string_view s) { line.replace(col - 1, s.size(), s); };
  put(2, f1);
  put(5, f2);
  put(15, f3);
  put(25, f4);
  put(40, f5);
  put(50, f6);
  while (!line.empty() && line.back() == ' ') line.pop_back();
  return line + "\n";
}

inline std::string mps_name(char prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%07zu", prefix, index + 1);
  return buf;
}

}  // namespace detail

/// Fixed-format MPS text. Columns are named C0000001.., rows R0000001.. in
/// build order (jobs in snapshot order, steps ascending, k ascending); a
/// comment block maps every short name to its descriptive name. The output is
/// a pure function of the program.
inline std::string export_mps(const AllocationProgram& prog) {
  using detail::mps_line;
  using detail::mps_name;
  using detail::mps_number;

  std::string out;
  out += "* elastic allocation program, encoding " + std::string(to_string(prog.encoding)) + "\n";
  out += "* jobs " + std::to_string(prog.jobs.size()) + " horizon " + std::to_string(prog.horizon) + " capacity " +
         std::to_string(prog.capacity) + "\n";
  for (std::size_t c = 0; c < prog.variables.size(); ++c)
    out += "* " + mps_name('C', c) + " " + prog.variables[c].name + "\n";
  for (std::size_t r = 0; r < prog.rows.size(); ++r) out += "* " + mps_name('R', r) + " " + prog.rows[r].name + "\n";

  out += "NAME          ELASTIC\n";
  out += "OBJSENSE\n    MAX\n";
  out += "ROWS\n";
  out += mps_line("N", "OBJ", "", "");
  for (std::size_t r = 0; r < prog.rows.size(); ++r) {
    const char* type = prog.rows[r].sense == RowSense::less_equal      ? "L"
                       : prog.rows[r].sense == RowSense::greater_equal ? "G"
                                                                       : "E";
    out += mps_line(type, mps_name('R', r), "", "");
  }

  // Column-major coefficient lists in row order.
  std::vector<std::vector<std::pair<std::size_t, double>>> by_column(prog.variables.size());
  for (std::size_t r = 0; r < prog.rows.size(); ++r)
    for (const auto& term : prog.rows[r].terms)
      by_column[static_cast<std::size_t>(term.column)].push_back({r, term.coef});

  out += "COLUMNS\n";
  bool in_integer_block = false;
  int marker = 0;
  auto marker_line = [&](const char* kind) {
    char name[16];
    std::snprintf(name, sizeof name, "MARK%04d", marker++);
    out += mps_line("", name, "'MARKER'", "", kind);
  };
  for (std::size_t c = 0; c < prog.variables.size(); ++c) {
    const auto& v = prog.variables[c];
    const bool integral = v.kind != VarKind::continuous;
    if (integral && !in_integer_block) {
      marker_line("'INTORG'");
      in_integer_block = true;
    } else if (!integral && in_integer_block) {
      marker_line("'INTEND'");
      in_integer_block = false;
    }
    const std::string cname = mps_name('C', c);
    if (v.objective != 0.0) out += mps_line("", cname, "OBJ", mps_number(v.objective));
    for (const auto& [r, coef] : by_column[c]) out += mps_line("", cname, mps_name('R', r), mps_number(coef));
    if (v.objective == 0.0 && by_column[c].empty()) out += mps_line("", cname, "OBJ", "0");
  }
  if (in_integer_block) marker_line("'INTEND'");

  out += "RHS\n";
  for (std::size_t r = 0; r < prog.rows.size(); ++r)
    if (prog.rows[r].rhs != 0.0) out += mps_line("", "RHS", mps_name('R', r), mps_number(prog.rows[r].rhs));

  out += "BOUNDS\n";
  for (std::size_t c = 0; c < prog.variables.size(); ++c) {
    const auto& v = prog.variables[c];
    const std::string cname = mps_name('C', c);
    if (v.kind == VarKind::binary) {
      out += mps_line("BV", "BND", cname, "");
      continue;
    }
    if (v.lower != 0.0) out += mps_line("LO", "BND", cname, mps_number(v.lower));
    if (std::isfinite(v.upper)) out += mps_line("UP", "BND", cname, mps_number(v.upper));
    else if (v.kind == VarKind::integer) out += mps_line("PL", "BND", cname, "");
  }
  out += "ENDATA\n";
  return out;
}

}  // namespace elastic
