// Command-line front end: trace generation, single simulations, sweeps,
// trace validation and MPS export of an epoch program.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "elastic/elastic.hpp"

namespace fs = std::filesystem;
using namespace elastic;

namespace {

struct ClusterFlags {
  int nodes = 70;
  std::uint64_t seed = 1;
  Seconds epoch = 300;
  int horizon = 5;
  Seconds delay = 0;
  double disturbance = 0.0;
  double disturbed_fraction = 1.0;
  std::uint64_t node_limit = 4000;

  void attach(CLI::App* app, bool with_nodes = true) {
    if (with_nodes) app->add_option("-n,--nodes", nodes, "total nodes in the pool")->capture_default_str();
    app->add_option("--seed", seed, "seed for every random draw")->capture_default_str();
    app->add_option("--epoch", epoch, "seconds between allocation epochs")->capture_default_str();
    app->add_option("--horizon", horizon, "look-ahead steps of the optimal allocator")->capture_default_str();
    app->add_option("--delay", delay, "scaling delay in seconds")->capture_default_str();
    app->add_option("--disturbance", disturbance, "relative ETA error half-width, e.g. 0.1")->capture_default_str();
    app->add_option("--disturbed-fraction", disturbed_fraction, "share of jobs with a disturbed ETA")
        ->capture_default_str();
    app->add_option("--node-limit", node_limit, "branch-and-bound nodes per epoch")->capture_default_str();
  }

  ClusterConfig cluster() const {
    ClusterConfig c;
    c.total_nodes = nodes;
    c.epoch_period = epoch;
    c.horizon_steps = horizon;
    c.scaling_delay = delay;
    c.eta_disturbance = disturbance;
    c.rng_seed = seed;
    return c;
  }
};

SyntheticProfile profile_named(const std::string& name) {
  if (name == "baseline") return SyntheticProfile::baseline();
  if (name == "heterogeneous") return SyntheticProfile::heterogeneous();
  if (name == "harsh") return SyntheticProfile::harsh();
  throw Error(ErrorKind::config, "unknown profile '" + name + "'");
}

std::vector<JobSpec> trace_or_profile(const std::string& trace_path, const std::string& profile, std::uint64_t seed) {
  if (!trace_path.empty()) return load_trace_text(read_file(trace_path));
  return generate(profile_named(profile), seed);
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file(path, content);
  }
}

int fail(ErrorKind kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = std::string(to_string(kind));
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elastic training cluster allocator and simulator"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic trace");
  std::string gen_profile = "baseline", gen_out;
  std::optional<std::size_t> gen_jobs;
  std::uint64_t gen_seed = 1;
  gen->add_option("--profile", gen_profile, "baseline | heterogeneous | harsh")->capture_default_str();
  gen->add_option("--jobs", gen_jobs, "job count (arrival rate scales with it)");
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "output file, stdout if omitted");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run one simulation");
  ClusterFlags sim_flags;
  sim_flags.attach(sim);
  std::string sim_trace, sim_profile = "baseline", sim_allocator = "optimal", sim_out;
  sim->add_option("-t,--trace", sim_trace, "trace CSV; a synthetic trace is used if omitted");
  sim->add_option("--profile", sim_profile, "synthetic profile when no trace is given")->capture_default_str();
  sim->add_option("-a,--allocator", sim_allocator, "optimal | greedy")->capture_default_str();
  sim->add_option("-o,--out-dir", sim_out, "directory for summary.json, jobs.csv and latency.csv");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run an experiment from a key = value config file");
  std::string sweep_config, sweep_out = "results";
  std::optional<std::uint64_t> sweep_seed;
  sweep->add_option("-c,--config", sweep_config, "experiment config file")->required();
  sweep->add_option("--seed", sweep_seed, "overrides the config seed");
  sweep->add_option("-o,--out-dir", sweep_out, "output directory")->capture_default_str();
  bool sweep_quiet = false;
  sweep->add_flag("-q,--quiet", sweep_quiet, "no per-cell progress on stderr");

  // validate
  auto* val = app.add_subcommand("validate", "check a trace and simulate it under both allocators");
  ClusterFlags val_flags;
  val_flags.attach(val);
  std::string val_trace;
  val->add_option("-t,--trace", val_trace, "trace CSV")->required();

  // mps
  auto* mps = app.add_subcommand("mps", "export the epoch program for jobs queued at a given time");
  ClusterFlags mps_flags;
  mps_flags.attach(mps);
  std::string mps_trace, mps_profile = "baseline", mps_encoding = "assignment", mps_out;
  Seconds mps_at = 0;
  mps->add_option("-t,--trace", mps_trace, "trace CSV; a synthetic trace is used if omitted");
  mps->add_option("--profile", mps_profile, "synthetic profile when no trace is given")->capture_default_str();
  mps->add_option("--at", mps_at, "snapshot time; jobs submitted by then are queued")->capture_default_str();
  mps->add_option("--encoding", mps_encoding, "assignment | delta")->capture_default_str();
  mps->add_option("-o,--out", mps_out, "output file, stdout if omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(ErrorKind::config, e.what());
  }

  try {
    if (*gen) {
      auto profile = profile_named(gen_profile);
      if (gen_jobs) {
        profile.arrival_rate *= static_cast<double>(*gen_jobs) / static_cast<double>(profile.count);
        profile.count = *gen_jobs;
      }
      emit(gen_out, write_trace(generate(profile, gen_seed)));
    } else if (*sim) {
      SimulationConfig config;
      config.cluster = sim_flags.cluster();
      config.allocator = parse_allocator(sim_allocator);
      config.budget.node_limit = sim_flags.node_limit;
      config.disturbed_fraction = sim_flags.disturbed_fraction;
      const auto trace = trace_or_profile(sim_trace, sim_profile, sim_flags.seed);
      const auto report = simulate(trace, config);
      const auto summary = summary_json(report, config).dump(2) + "\n";
      if (sim_out.empty()) {
        std::cout << summary;
      } else {
        fs::create_directories(sim_out);
        write_file((fs::path(sim_out) / "summary.json").string(), summary);
        write_file((fs::path(sim_out) / "jobs.csv").string(), write_jobs_csv(report));
        write_file((fs::path(sim_out) / "latency.csv").string(), write_latency_csv(report));
      }
    } else if (*sweep) {
      std::ifstream in(sweep_config);
      if (!in) throw Error(ErrorKind::io, "cannot open '" + sweep_config + "'");
      auto spec = parse_experiment_config(in, fs::path(sweep_config).parent_path());
      if (sweep_seed) spec.seed = *sweep_seed;
      const auto report = run_experiment(spec, [&](const CellResult& c) {
        if (sweep_quiet) return;
        std::fprintf(stderr, "nodes=%d allocator=%s replication=%d completed=%d mean_queue_min=%.3f\n", c.nodes,
                     to_string(c.allocator), c.replication, c.totals.completed, c.totals.mean_queue_minutes);
      });
      write_experiment_outputs(report, spec, sweep_out);
      std::cout << "wrote " << sweep_out << "\n";
    } else if (*val) {
      const auto trace = load_trace_text(read_file(val_trace));
      nlohmann::ordered_json out;
      out["trace"] = val_trace;
      out["jobs"] = trace.size();
      for (auto allocator : {AllocatorKind::greedy, AllocatorKind::optimal}) {
        SimulationConfig config;
        config.cluster = val_flags.cluster();
        config.allocator = allocator;
        config.budget.node_limit = val_flags.node_limit;
        config.disturbed_fraction = val_flags.disturbed_fraction;
        const auto report = simulate(trace, config);
        const auto t = totals(report);
        if (report.rejected_plans != 0)
          throw Error(ErrorKind::simulation, std::string(to_string(allocator)) + " produced a rejected plan");
        if (t.unfinished != 0)
          throw Error(ErrorKind::simulation, std::string(to_string(allocator)) + " left " +
                                                 std::to_string(t.unfinished) + " jobs unfinished");
        out[to_string(allocator)] = {{"completed", t.completed},
                                     {"failed", t.bug_hang + t.killed},
                                     {"mean_queue_minutes", t.mean_queue_minutes},
                                     {"mean_total_minutes", t.mean_total_minutes}};
      }
      out["status"] = "ok";
      std::cout << out.dump(2) << "\n";
    } else if (*mps) {
      const auto cfg = mps_flags.cluster();
      cfg.validate();
      const auto trace = trace_or_profile(mps_trace, mps_profile, mps_flags.seed);
      std::vector<JobRuntimeState> states;
      for (const auto& job : trace)
        if (job.submit_time <= mps_at) states.emplace_back(job);
      const auto snapshot = make_snapshot(states, cfg, mps_at);
      const Encoding enc = mps_encoding == "delta"        ? Encoding::delta_big_m
                           : mps_encoding == "assignment" ? Encoding::assignment
                                                          : throw Error(ErrorKind::config, "unknown encoding '" +
                                                                                               mps_encoding + "'");
      emit(mps_out, export_mps(build(snapshot, cfg, enc)));
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(ErrorKind::io, e.what());
  }
  return 0;
}
