#include <gtest/gtest.h>

#include "elastic/report_io.hpp"
#include "elastic/simulator.hpp"
#include "elastic/workload.hpp"

using namespace elastic;

namespace {

JobSpec spec(const std::string& id, Seconds submit, double demand, int n_min = 1, int n_max = 16,
             FailureKind failure = NoFailure{}) {
  return JobSpec{id, submit, demand, n_min, n_max, failure};
}

SimulationConfig sim(int nodes, AllocatorKind allocator, Seconds delay = 0) {
  SimulationConfig c;
  c.cluster.total_nodes = nodes;
  c.cluster.scaling_delay = delay;
  c.allocator = allocator;
  c.budget = SolverBudget{60.0, 0.0, std::uint64_t{4000}};
  return c;
}

const JobRecord& record(const SimulationReport& r, const std::string& id) {
  for (const auto& j : r.jobs)
    if (j.id == id) return j;
  throw std::runtime_error("no job " + id);
}

// Demand that needs exactly `seconds` whole seconds at k nodes, half a second
// short so accumulated rounding cannot push completion either way.
double work(double seconds, double speed) { return (seconds - 0.5) * speed / 3600.0; }

}  // namespace

TEST(Simulator, ReleasedNodesAreReusedOneSecondLater) {
  // Clock origin 9:00:00. The first job finishes at 9:02:09, the second has
  // waited since 9:01:02.
  const std::vector<JobSpec> trace{spec("job1", 0, work(130, 4.096), 8, 8), spec("job2", 62, 5.0, 1, 8)};
  for (auto allocator : {AllocatorKind::greedy, AllocatorKind::optimal}) {
    const auto r = simulate(trace, sim(8, allocator));
    EXPECT_EQ(record(r, "job1").end, 129);
    EXPECT_EQ(record(r, "job2").start, 130);
    EXPECT_EQ(*record(r, "job2").queue_seconds(), 68);
  }
}

TEST(Simulator, SingleJobMatchesTheAnalyticDuration) {
  for (double d : {0.01, 0.5, 2.5, 7.77}) {
    const auto r = simulate({spec("a", 0, d)}, sim(16, AllocatorKind::optimal));
    const double analytic = d / 6.5536 * 3600.0;
    const auto& a = record(r, "a");
    ASSERT_EQ(a.outcome, JobOutcome::completed);
    EXPECT_EQ(*a.start, 0);
    EXPECT_NEAR(static_cast<double>(*a.train_seconds()) + 1.0, analytic, 1.0) << d;
  }
}

TEST(Simulator, ScaleUpTakesEffectAfterTheDelay) {
  // j1 and j2 both start on 2 nodes at t=0 and begin training at 15. j1 leaves
  // at 75; the epoch at 300 grows j2 to 4 nodes, effective at 315.
  const double before = 300 * 1.6 / 3600.0;
  const std::vector<JobSpec> trace{spec("j1", 0, work(61, 1.6), 2, 2),
                                   spec("j2", 0, before + work(101, 2.56), 1, 4)};
  const auto r = simulate(trace, sim(4, AllocatorKind::greedy, 15));
  EXPECT_EQ(record(r, "j1").start, 15);
  EXPECT_EQ(record(r, "j1").end, 75);
  EXPECT_EQ(record(r, "j2").start, 15);
  EXPECT_EQ(record(r, "j2").end, 415);
}

TEST(ClusterState, ShrinkFundsAStartInTheSameEpoch) {
  ClusterState state(8, 15);
  state.jobs().emplace_back(spec("train", 0, 9.0));
  state.jobs().emplace_back(spec("queued", 10, 9.0));
  state.apply_or_throw({{0, 8}}, 0);
  state.release_holds(15);
  ASSERT_EQ(state.jobs()[0].nodes_assigned, 8);

  state.apply_or_throw({{0, 4}, {1, 4}}, 300);
  EXPECT_EQ(state.idle(), 0);
  EXPECT_EQ(state.jobs()[0].phase, JobPhase::training);
  EXPECT_EQ(state.jobs()[0].nodes_assigned, 4);
  EXPECT_EQ(state.jobs()[1].phase, JobPhase::scaling_hold);
  EXPECT_EQ(state.jobs()[1].hold_until, 315);
  state.release_holds(314);
  EXPECT_EQ(state.jobs()[1].nodes_assigned, 0);
  state.release_holds(315);
  EXPECT_EQ(state.jobs()[1].nodes_assigned, 4);
  EXPECT_EQ(state.jobs()[1].training_start, 315);
}

TEST(ClusterState, UnchangedPlanMakesNoHolds) {
  ClusterState state(8, 15);
  state.jobs().emplace_back(spec("a", 0, 9.0));
  state.apply_or_throw({{0, 4}}, 0);
  state.release_holds(15);
  state.apply_or_throw({{0, 4}}, 300);
  EXPECT_EQ(state.jobs()[0].phase, JobPhase::training);
  EXPECT_FALSE(state.jobs()[0].hold_until.has_value());
}

TEST(ClusterState, HalvingForTheQueueFront) {
  ClusterState state(16, 0);
  for (auto [id, k] : std::vector<std::pair<std::string, int>>{{"job5", 4}, {"job6", 8}, {"job7", 4}}) {
    state.jobs().emplace_back(spec(id, 0, 9.0));
    state.apply_or_throw({{state.jobs().size() - 1, k}}, 0);
  }
  state.jobs().emplace_back(spec("job8", 100, 9.0));
  EXPECT_EQ(state.idle(), 0);
  state.apply_or_throw({{0, 2}, {3, 2}}, 300);
  EXPECT_EQ(state.jobs()[0].nodes_assigned, 2);
  EXPECT_EQ(state.jobs()[3].nodes_assigned, 2);
  EXPECT_EQ(state.idle(), 0);
}

TEST(ClusterState, OverCapacityPlansAreRejectedAndAudited) {
  ClusterState state(8, 0);
  state.jobs().emplace_back(spec("a", 0, 9.0));
  state.jobs().emplace_back(spec("b", 0, 9.0));
  state.apply_or_throw({{0, 4}}, 0);
  EXPECT_FALSE(state.apply({{0, 8}, {1, 4}}, 300));
  EXPECT_EQ(state.jobs()[0].nodes_assigned, 4);
  EXPECT_EQ(state.jobs()[1].phase, JobPhase::queued);
  ASSERT_EQ(state.audit().size(), 1u);
  EXPECT_THROW(state.apply_or_throw({{1, 16}}, 600), Error);
}

TEST(ClusterState, ShrinkDuringAHoldCancelsTheGrowth) {
  ClusterState state(16, 15);
  state.jobs().emplace_back(spec("a", 0, 9.0));
  state.apply_or_throw({{0, 4}}, 0);
  state.release_holds(15);
  state.apply_or_throw({{0, 16}}, 300);
  EXPECT_EQ(state.occupied(), 16);
  state.apply_or_throw({{0, 2}}, 305);
  EXPECT_EQ(state.jobs()[0].phase, JobPhase::training);
  EXPECT_EQ(state.occupied(), 2);
}

TEST(Simulator, FailureAccounting) {
  std::vector<JobSpec> trace{spec("bug", 0, 50.0, 1, 16, BugFailure{120}), spec("kill", 30, 50.0, 1, 16, UserKill{400}),
                             spec("ok", 40, 0.2)};
  for (auto allocator : {AllocatorKind::greedy, AllocatorKind::optimal}) {
    for (Seconds delay : {0, 15}) {
      const auto r = simulate(trace, sim(32, allocator, delay));
      const auto& bug = record(r, "bug");
      EXPECT_EQ(bug.outcome, JobOutcome::bug_hang);
      EXPECT_LE(*bug.train_seconds(), 121);
      const auto& kill = record(r, "kill");
      EXPECT_EQ(kill.outcome, JobOutcome::killed);
      EXPECT_EQ(*kill.end, 30 + 400);
      EXPECT_EQ(record(r, "ok").outcome, JobOutcome::completed);
      EXPECT_EQ(r.timeline.size(), 1u);
    }
  }
}

TEST(Simulator, RejectsUnsortedTraces) {
  try {
    Simulator({spec("a", 10, 1.0), spec("b", 5, 1.0)}, sim(8, AllocatorKind::greedy));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Simulator, HorizonEndLeavesJobsUnfinished) {
  auto cfg = sim(8, AllocatorKind::greedy);
  cfg.horizon_end = 100;
  const auto r = simulate({spec("a", 0, 50.0), spec("b", 200, 1.0)}, cfg);
  EXPECT_EQ(r.end_time, 100);
  EXPECT_EQ(record(r, "a").outcome, JobOutcome::unfinished);
  EXPECT_EQ(record(r, "b").outcome, JobOutcome::unfinished);
  EXPECT_FALSE(record(r, "b").start.has_value());
}

TEST(Simulator, DeterministicAndDrainsWithoutStarvation) {
  auto profile = SyntheticProfile::harsh();
  profile.count = 60;
  const auto trace = generate(profile, 3);
  for (auto allocator : {AllocatorKind::greedy, AllocatorKind::optimal}) {
    auto cfg = sim(24, allocator, 15);
    cfg.cluster.eta_disturbance = 0.1;
    const auto a = simulate(trace, cfg);
    const auto b = simulate(trace, cfg);
    EXPECT_EQ(write_jobs_csv(a), write_jobs_csv(b));
    EXPECT_EQ(summary_json(a, cfg).dump(), summary_json(b, cfg).dump());
    EXPECT_EQ(a.timeline, b.timeline);
    EXPECT_EQ(a.rejected_plans, 0u);
    for (const auto& j : a.jobs) {
      EXPECT_NE(j.outcome, JobOutcome::unfinished) << j.id;
      if (j.start) {
        EXPECT_GE(*j.start, j.submit);
      }
    }
    for (std::size_t i = 1; i < a.timeline.size(); ++i) EXPECT_LE(a.timeline[i - 1], a.timeline[i]);
  }
}

TEST(Simulator, HealthyOnlyDisturbance) {
  auto profile = SyntheticProfile::harsh();
  profile.count = 80;
  const auto trace = generate(profile, 4);
  auto cfg = sim(200, AllocatorKind::greedy);
  cfg.cluster.eta_disturbance = 0.1;
  cfg.disturb_failing_jobs = false;
  Simulator s(trace, cfg);
  s.run();
  int disturbed = 0;
  for (const auto& j : s.state().jobs()) {
    if (!std::holds_alternative<NoFailure>(j.spec.failure)) {
      EXPECT_EQ(j.observed_demand, j.spec.demand) << j.spec.id;
    } else {
      EXPECT_NEAR(j.observed_demand / j.spec.demand, 1.0, 0.1 + 1e-12);
      disturbed += j.observed_demand != j.spec.demand;
    }
  }
  EXPECT_GT(disturbed, 0);
}

TEST(Simulator, UtilizationNeverExceedsCapacity) {
  auto profile = SyntheticProfile::baseline();
  profile.count = 40;
  const auto r = simulate(generate(profile, 8), sim(16, AllocatorKind::optimal, 15));
  ASSERT_FALSE(r.utilization.empty());
  for (const auto& u : r.utilization) EXPECT_LE(u.busy_nodes, 16);
  EXPECT_EQ(r.solver.size(), r.utilization.size() - std::count_if(r.utilization.begin(), r.utilization.end(), [](const auto& u) {
                                return u.training_jobs + u.queued_jobs == 0;
                              }));
}
