#include <gtest/gtest.h>

#include <sstream>

#include "elastic/milp_builder.hpp"
#include "support/oracles.hpp"

using namespace elastic;

namespace {

SnapshotJob queued(const std::string& id, int n_min = 1, double remaining = 1.0, int n_max = 16) {
  SnapshotJob j;
  j.id = id;
  j.submit_time = 0;
  j.remaining = remaining;
  j.n_min = n_min;
  j.n_max = n_max;
  return j;
}

SnapshotJob training(const std::string& id, int n_min, int nodes) {
  auto j = queued(id, n_min);
  j.training = true;
  j.current_nodes = nodes;
  return j;
}

std::vector<std::string> ids(const std::vector<SnapshotJob>& jobs) {
  std::vector<std::string> out;
  for (const auto& j : jobs) out.push_back(j.id);
  return out;
}

ClusterConfig config(int nodes, int horizon = 5) {
  ClusterConfig c;
  c.total_nodes = nodes;
  c.horizon_steps = horizon;
  return c;
}

ClusterSnapshot one_job(double remaining, int nodes) {
  ClusterSnapshot snap;
  snap.total_nodes = nodes;
  snap.jobs.push_back(queued("a", 1, remaining));
  return snap;
}

}  // namespace

TEST(Admission, AllFit) {
  ClusterSnapshot snap{0, {queued("a"), queued("b"), queued("c"), queued("d")}, 4};
  const auto r = admit(snap);
  EXPECT_EQ(r.admitted.size(), 4u);
  EXPECT_TRUE(r.deferred.empty());
}

TEST(Admission, DefersTheFifoTail) {
  ClusterSnapshot snap{0, {queued("a"), queued("b"), queued("c"), queued("d"), queued("e"), queued("f")}, 4};
  const auto r = admit(snap);
  EXPECT_EQ(ids(r.admitted), (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(ids(r.deferred), (std::vector<std::string>{"e", "f"}));
}

TEST(Admission, SkipsAJobThatDoesNotFitAndContinues) {
  ClusterSnapshot snap{0, {training("t1", 4, 4), training("t2", 2, 2), queued("q1", 1), queued("q2", 2), queued("q3", 1)},
                       8};
  const auto r = admit(snap);
  EXPECT_EQ(ids(r.admitted), (std::vector<std::string>{"t1", "t2", "q1", "q3"}));
  EXPECT_EQ(ids(r.deferred), (std::vector<std::string>{"q2"}));
}

TEST(Admission, TrainingOverloadIsInfeasible) {
  ClusterSnapshot snap{0, {training("a", 4, 4), training("b", 4, 4)}, 6};
  try {
    admit(snap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
  }
}

TEST(Build, DeltaCountsForOneJob) {
  const auto prog = build(one_job(2.0, 70), config(70), Encoding::delta_big_m);
  EXPECT_EQ(prog.count_variables(VarKind::integer), 5u);
  EXPECT_EQ(prog.count_variables(VarKind::continuous), 5u);
  EXPECT_EQ(prog.count_variables(VarKind::binary), 50u);
  EXPECT_EQ(prog.count_rows(RowFamily::demand_cap), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::max_nodes), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::min_nodes), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::capacity), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::sandwich), 5u * 2u * 5u * 2u);  // 2 per indicator, 2 indicators per k
  EXPECT_EQ(prog.count_rows(RowFamily::cardinality), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::progress), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::one_hot), 0u);
  EXPECT_EQ(prog.count_rows(RowFamily::link), 0u);
  EXPECT_GE(prog.big_m, 16.0 + 70.0);
}

TEST(Build, AssignmentCountsForOneJob) {
  const auto prog = build(one_job(2.0, 70), config(70), Encoding::assignment);
  EXPECT_EQ(prog.count_variables(VarKind::binary), 25u);
  EXPECT_EQ(prog.count_rows(RowFamily::one_hot), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::link), 5u);
  EXPECT_EQ(prog.count_rows(RowFamily::sandwich), 0u);
  EXPECT_EQ(prog.count_rows(RowFamily::cardinality), 0u);
  EXPECT_EQ(prog.count_rows(RowFamily::progress), 5u);
}

TEST(Build, ObjectiveWeightsAreInverseDemand) {
  const auto prog = build(one_job(4.0, 70), config(70, 2), Encoding::assignment);
  EXPECT_EQ(prog.variables[prog.s_column(0, 0)].objective, 0.25);
  EXPECT_EQ(prog.variables[prog.n_column(0, 0)].objective, 0.0);
  EXPECT_EQ(prog.variables[prog.n_column(0, 1)].upper, 70.0);
}

TEST(Build, EmptyAdmissionGivesAnEmptyProgram) {
  const auto prog = build(ClusterSnapshot{0, {}, 10}, config(10), Encoding::delta_big_m);
  EXPECT_TRUE(prog.variables.empty());
  EXPECT_EQ(prog.count_rows(RowFamily::capacity), 5u);
  EXPECT_EQ(prog.objective_value(std::vector<double>{}), 0.0);
}

TEST(Build, Errors) {
  AdmissionResult over{{queued("a", 4), queued("b", 4)}, {}};
  EXPECT_THROW(build(over, config(6), Encoding::assignment), Error);
  EXPECT_THROW(build(one_job(0.0, 8), config(8), Encoding::assignment), Error);
  auto bad = config(8);
  bad.horizon_steps = 0;
  EXPECT_THROW(build(one_job(1.0, 8), bad, Encoding::assignment), Error);
}

TEST(Decode, IndicatorPatternForFourNodes) {
  const auto prog = build(one_job(50.0, 70), config(70, 1), Encoding::delta_big_m);
  const auto raw = materialize(prog, {{4}});
  ASSERT_FALSE(check_solution(prog, raw).has_value()) << *check_solution(prog, raw);
  const std::vector<int> K{1, 2, 4, 8, 16};
  int sum = 0;
  for (std::size_t k = 0; k < K.size(); ++k) {
    const double dm = raw[prog.delta_minus_column(0, 0, k)];
    const double dp = raw[prog.delta_plus_column(0, 0, k)];
    EXPECT_EQ(dp, K[k] <= 4 ? 1.0 : 0.0) << K[k];
    EXPECT_EQ(dm, K[k] >= 4 ? 1.0 : 0.0) << K[k];
    sum += static_cast<int>(dm + dp);
  }
  EXPECT_EQ(sum, 6);
  const auto plan = decode(prog, raw);
  EXPECT_EQ(plan.assignments.at("a"), std::vector<int>{4});
  EXPECT_DOUBLE_EQ(plan.served_profile.at("a")[0], (300.0 / 3600.0) * 2.56);
}

TEST(Decode, IndicatorPatternForOneNode) {
  const auto prog = build(one_job(50.0, 70), config(70, 1), Encoding::delta_big_m);
  const auto raw = materialize(prog, {{1}});
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(raw[prog.delta_minus_column(0, 0, k)], 1.0);
    EXPECT_EQ(raw[prog.delta_plus_column(0, 0, k)], k == 0 ? 1.0 : 0.0);
  }
}

// The speed coefficient sum_k speed(k) (dm + dp - 1) equals speed(k*) for
// every admissible indicator pattern; also no pattern other than the
// materialized one satisfies the sandwich and cardinality rows.
TEST(Decode, SpeedExpansionIsExactForEveryK) {
  const auto prog = build(one_job(50.0, 70), config(70, 1), Encoding::delta_big_m);
  const auto& K = prog.jobs[0].legal;
  for (int kstar : K) {
    const auto raw = materialize(prog, {{kstar}});
    double coef = 0.0;
    for (std::size_t k = 0; k < K.size(); ++k)
      coef += oracle::speed(K[k]) *
              (raw[prog.delta_minus_column(0, 0, k)] + raw[prog.delta_plus_column(0, 0, k)] - 1.0);
    EXPECT_EQ(coef, oracle::speed(kstar)) << kstar;

    int admissible = 0;
    for (unsigned mask = 0; mask < (1u << (2 * K.size())); ++mask) {
      auto trial = raw;
      for (std::size_t k = 0; k < K.size(); ++k) {
        trial[prog.delta_minus_column(0, 0, k)] = (mask >> (2 * k)) & 1u;
        trial[prog.delta_plus_column(0, 0, k)] = (mask >> (2 * k + 1)) & 1u;
      }
      bool ok = true;
      for (const auto& row : prog.rows) {
        if (row.family != RowFamily::sandwich && row.family != RowFamily::cardinality) continue;
        double lhs = 0.0;
        for (const auto& t : row.terms) lhs += t.coef * trial[t.column];
        ok = ok && (row.sense == RowSense::less_equal      ? lhs <= row.rhs + 1e-9
                    : row.sense == RowSense::greater_equal ? lhs >= row.rhs - 1e-9
                                                           : std::abs(lhs - row.rhs) <= 1e-9);
      }
      if (ok) {
        ++admissible;
        EXPECT_EQ(trial, raw);
      }
    }
    EXPECT_EQ(admissible, 1) << kstar;
  }
}

TEST(Decode, RejectsBrokenSolutions) {
  const auto prog = build(one_job(50.0, 70), config(70, 1), Encoding::delta_big_m);
  auto raw = materialize(prog, {{4}});
  auto two = raw;
  two[prog.delta_plus_column(0, 0, 3)] = 1.0;  // 8 now also looks selected
  EXPECT_THROW(decode(prog, two), Error);
  auto frac = raw;
  frac[prog.n_column(0, 0)] = 4.3;
  EXPECT_THROW(decode(prog, frac), Error);
  auto mismatch = raw;
  mismatch[prog.n_column(0, 0)] = 8.0;
  EXPECT_THROW(decode(prog, mismatch), Error);

  const auto assign = build(one_job(50.0, 70), config(70, 1), Encoding::assignment);
  auto none = materialize(assign, {{2}});
  none[assign.x_column(0, 0, 1)] = 0.0;
  EXPECT_THROW(decode(assign, none), Error);
}

TEST(Decode, DeferredJobsGetZeros) {
  ClusterSnapshot snap{0, {queued("a", 2), queued("b", 2)}, 3};
  const auto prog = build(snap, config(3, 2), Encoding::assignment);
  ASSERT_EQ(prog.jobs.size(), 1u);
  const auto plan = decode(prog, materialize(prog, {{2, 2}}));
  EXPECT_EQ(plan.assignments.at("b"), (std::vector<int>{0, 0}));
  EXPECT_EQ(plan.implemented("b"), 0);
  EXPECT_EQ(plan.implemented("a"), 2);
}

TEST(CheckSolution, FlagsCapacityAndDemandBreaches) {
  ClusterSnapshot snap{0, {queued("a", 1, 50.0), queued("b", 1, 50.0)}, 16};
  const auto prog = build(snap, config(16, 1), Encoding::assignment);
  EXPECT_FALSE(check_solution(prog, materialize(prog, {{8}, {8}})).has_value());
  const auto over = check_solution(prog, materialize(prog, {{16}, {8}}));
  ASSERT_TRUE(over.has_value());
  EXPECT_NE(over->find("capacity"), std::string::npos);

  auto raw = materialize(prog, {{8}, {8}});
  raw[prog.s_column(0, 0)] = 60.0;
  EXPECT_TRUE(check_solution(prog, raw).has_value());
}

TEST(Materialize, ServedDemandIsMonotoneAndCapped) {
  const auto prog = build(one_job(0.5, 16), config(16, 5), Encoding::assignment);
  const auto raw = materialize(prog, {{16, 1, 16, 2, 16}});
  double prev = 0.0;
  for (int t = 0; t < 5; ++t) {
    const double s = raw[prog.s_column(0, t)];
    EXPECT_GE(s, prev);
    EXPECT_LE(s, 0.5);
    prev = s;
  }
  EXPECT_EQ(prev, 0.5);
}

TEST(Mps, LayoutAndStability) {
  ClusterSnapshot snap{0, {queued("a", 1, 2.0, 4), queued("b", 2, 1.0, 8)}, 8};
  const auto prog = build(snap, config(8, 2), Encoding::delta_big_m);
  const auto text = export_mps(prog);
  EXPECT_EQ(text, export_mps(build(snap, config(8, 2), Encoding::delta_big_m)));

  std::vector<std::string> sections;
  std::istringstream in(text);
  std::string line;
  std::size_t markers = 0, bv = 0, up = 0;
  while (std::getline(in, line)) {
    ASSERT_LE(line.size(), 61u) << line;
    if (line.empty() || line[0] == '*') continue;
    if (line[0] != ' ') sections.push_back(line.substr(0, line.find(' ')));
    if (line.find("'MARKER'") != std::string::npos) ++markers;
    if (line.rfind(" BV ", 0) == 0) ++bv;
    if (line.rfind(" UP ", 0) == 0) ++up;
  }
  EXPECT_EQ(sections, (std::vector<std::string>{"NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"}));
  EXPECT_GT(markers, 0u);
  EXPECT_EQ(markers % 2, 0u);
  EXPECT_EQ(bv, prog.count_variables(VarKind::binary));
  EXPECT_EQ(up, prog.count_variables(VarKind::integer));
  EXPECT_NE(text.find("C0000001"), std::string::npos);
  EXPECT_NE(text.find("R0000001"), std::string::npos);
  EXPECT_NE(text.find("n[a,1]"), std::string::npos);  // name map in comments
}
