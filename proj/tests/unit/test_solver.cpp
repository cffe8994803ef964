#include <gtest/gtest.h>

#include "elastic/solver.hpp"
#include "support/oracles.hpp"

using namespace elastic;

namespace {

ClusterConfig config(int nodes, int horizon, LegalSet legal = default_legal_set()) {
  ClusterConfig c;
  c.total_nodes = nodes;
  c.horizon_steps = horizon;
  c.legal_set = std::move(legal);
  return c;
}

SnapshotJob job(const std::string& id, double remaining, int n_min = 1, int n_max = 16) {
  SnapshotJob j;
  j.id = id;
  j.remaining = remaining;
  j.n_min = n_min;
  j.n_max = n_max;
  return j;
}

constexpr double kStep = 300.0 / 3600.0;

}  // namespace

TEST(Oracle, JobThatFinishesInTheFirstStep) {
  const auto cfg = config(1, 5, {1});
  const auto prog = build(ClusterSnapshot{0, {job("a", 0.05, 1, 1)}, 1}, cfg, Encoding::assignment);
  const auto r = solve_oracle(prog);
  EXPECT_EQ(r.status, SolveStatus::optimal);
  EXPECT_DOUBLE_EQ(r.plan.objective, 5.0);
  for (double s : r.plan.served_profile.at("a")) EXPECT_DOUBLE_EQ(s, 0.05);
}

TEST(Oracle, UnboundedDemandUsesTheLargestCount) {
  const auto prog = build(ClusterSnapshot{0, {job("a", 1000.0)}, 16}, config(16, 5), Encoding::assignment);
  const auto r = solve_oracle(prog);
  double expected = 0.0;
  for (int t = 1; t <= 5; ++t) expected += t * kStep * 6.5536 / 1000.0;
  EXPECT_NEAR(r.plan.objective, expected, 1e-12);
  EXPECT_EQ(r.plan.assignments.at("a"), (std::vector<int>{16, 16, 16, 16, 16}));
}

TEST(Oracle, CapacityForcesTheSplit) {
  const double d = 0.5;
  const auto prog = build(ClusterSnapshot{0, {job("a", d), job("b", d)}, 2}, config(2, 1), Encoding::assignment);
  const auto r = solve_oracle(prog);
  EXPECT_EQ(r.plan.implemented("a"), 1);
  EXPECT_EQ(r.plan.implemented("b"), 1);
  EXPECT_DOUBLE_EQ(r.plan.objective, 2.0 * std::min(1.0, kStep / d));
}

TEST(Oracle, SizeLimit) {
  std::vector<SnapshotJob> jobs;
  for (int i = 0; i < 4; ++i) jobs.push_back(job("j" + std::to_string(i), 10.0));
  const auto prog = build(ClusterSnapshot{0, jobs, 70}, config(70, 5), Encoding::assignment);
  try {
    solve_oracle(prog);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(BranchAndBound, SingleJobRule) {
  for (double d : {0.01, 0.05, 0.2, 0.4, 0.6, 3.0}) {
    const auto prog = build(ClusterSnapshot{0, {job("a", d)}, 16}, config(16, 1), Encoding::assignment);
    const auto r = solve_bnb(prog, SolverBudget::unlimited());
    int expected = 16;
    if (d <= kStep * 6.5536)
      for (int k : {16, 8, 4, 2, 1})
        if (kStep * oracle::speed(k) >= d) expected = k;
    // With ties the largest count is kept; every k that completes the job scores 1.
    const double score = std::min(1.0, kStep * oracle::speed(r.plan.implemented("a")) / d);
    EXPECT_DOUBLE_EQ(score, std::min(1.0, kStep * oracle::speed(expected) / d)) << d;
    EXPECT_DOUBLE_EQ(r.plan.objective, solve_oracle(prog).plan.objective) << d;
  }
}

// Both exact searches and the independent recursion agree on random
// instances, and the reported bound never undercuts the optimum.
TEST(BranchAndBound, MatchesExhaustiveSearch) {
  Rng rng(20240601);
  int checked = 0;
  for (int n = 0; n < 600; ++n) {
    const auto inst = oracle::random_instance(rng, 3, 3, 8);
    if (inst.snapshot.jobs.empty()) continue;
    const auto prog = build(inst.snapshot, inst.config, Encoding::assignment);
    const auto exact = solve_oracle(prog);
    const auto bnb = solve_bnb(prog, SolverBudget::unlimited());
    const double reference = oracle::best_objective(inst.instance);
    ASSERT_EQ(bnb.status, SolveStatus::optimal) << n;
    EXPECT_NEAR(exact.plan.objective, reference, 1e-6) << n;
    EXPECT_NEAR(bnb.plan.objective, reference, 1e-6) << n;
    EXPECT_EQ(bnb.nodes, exact.nodes) << n;
    EXPECT_GE(relaxation_bound(prog), reference - 1e-9) << n;
    ++checked;
  }
  EXPECT_GE(checked, 500);
}

TEST(BranchAndBound, EncodingsAgree) {
  Rng rng(99);
  for (int n = 0; n < 100; ++n) {
    const auto inst = oracle::random_instance(rng, 3, 2, 8);
    if (inst.snapshot.jobs.empty()) continue;
    const auto a = solve_bnb(build(inst.snapshot, inst.config, Encoding::assignment), SolverBudget::unlimited());
    const auto prog = build(inst.snapshot, inst.config, Encoding::delta_big_m);
    const auto d = solve_bnb(prog, SolverBudget::unlimited());
    EXPECT_EQ(a.nodes, d.nodes);
    EXPECT_NEAR(a.plan.objective, d.plan.objective, 1e-12);
    EXPECT_FALSE(check_solution(prog, materialize(prog, d.nodes)).has_value());
  }
}

TEST(BranchAndBound, EmptyAndInfeasiblePrograms) {
  const auto empty = build(ClusterSnapshot{0, {}, 8}, config(8, 3), Encoding::assignment);
  const auto r = solve_bnb(empty, SolverBudget::unlimited());
  EXPECT_EQ(r.status, SolveStatus::optimal);
  EXPECT_EQ(r.plan.objective, 0.0);

  ClusterSnapshot overloaded{0, {job("a", 1.0, 4), job("b", 1.0, 4)}, 6};
  overloaded.jobs[0].training = true;
  overloaded.jobs[1].training = true;
  EXPECT_THROW(plan_epoch(overloaded, config(6, 2), SolverBudget{}), Error);
}

TEST(BranchAndBound, BudgetStopsWithAValidPlanAndHonestGap) {
  ClusterSnapshot snap;
  snap.total_nodes = 70;
  for (int i = 0; i < 40; ++i) snap.jobs.push_back(job("j" + std::to_string(i), 0.3 + 0.25 * i));
  const auto cfg = config(70, 5);
  const auto prog = build(snap, cfg, Encoding::assignment);
  const auto r = solve_bnb(prog, SolverBudget{60.0, 0.0, std::uint64_t{50}});
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_LE(r.explored_nodes, 51u);
  EXPECT_FALSE(check_solution(prog, materialize(prog, r.nodes)).has_value());
  EXPECT_GE(r.bound, r.plan.objective);
  EXPECT_NEAR(r.plan.gap, detail::relative_gap(r.bound, r.plan.objective), 1e-12);
  if (r.status == SolveStatus::optimal) {
    EXPECT_LE(r.plan.gap, 1e-6);
  }
  ASSERT_FALSE(r.incumbents.empty());
  for (std::size_t i = 1; i < r.incumbents.size(); ++i)
    EXPECT_GT(r.incumbents[i].objective, r.incumbents[i - 1].objective);
}

TEST(BranchAndBound, Deterministic) {
  Rng rng(5);
  for (int n = 0; n < 50; ++n) {
    const auto inst = oracle::random_instance(rng, 4, 3, 16);
    if (inst.snapshot.jobs.empty()) continue;
    const auto prog = build(inst.snapshot, inst.config, Encoding::assignment);
    const auto a = solve_bnb(prog, SolverBudget::unlimited());
    const auto b = solve_bnb(prog, SolverBudget::unlimited());
    EXPECT_EQ(a.nodes, b.nodes);
    EXPECT_EQ(a.plan.objective, b.plan.objective);
    EXPECT_EQ(a.explored_nodes, b.explored_nodes);
  }
}

TEST(PlanEpoch, DeferredJobsGetNothingAndCapacityHolds) {
  ClusterSnapshot snap;
  snap.total_nodes = 6;
  for (int i = 0; i < 8; ++i) snap.jobs.push_back(job("j" + std::to_string(i), 1.0 + i));
  const auto plan = plan_epoch(snap, config(6, 3), SolverBudget::unlimited());
  int used = 0;
  for (const auto& j : snap.jobs) used += plan.implemented(j.id);
  EXPECT_LE(used, 6);
  EXPECT_EQ(plan.implemented("j6"), 0);
  EXPECT_EQ(plan.implemented("j7"), 0);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(plan.implemented("j" + std::to_string(i)), 1);
}
