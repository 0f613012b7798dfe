#pragma once

#include <string>
#include <vector>

#include "densctl/control.hpp"
#include "densctl/io.hpp"
#include "densctl/plant.hpp"
#include "densctl/scenario.hpp"
#include "densctl/sysid.hpp"

namespace densctl {

/// Identification stage: settle the truth plant, excite it with random
/// firing, fit the reduced model, extract the perturbation cloud, select
/// scenarios. Fully deterministic under `seed`.
struct PipelineConfig {
  TruthPlantConfig plant;
  int settle_steps = 3000;
  double firing_probability = 0.5;
  int sysid_duration_ms = 12000;
  std::uint64_t seed = 7;
  int n_x = 4;
  int n_p = 4;
  Timing timing;
};

struct PipelineResult {
  Vector initial_profile;
  SnapshotLog log;
  StateSpaceModel model;
  ParameterCloud cloud;
  ScenarioSet scenarios;
  ModelMetrics fit_metrics;
};

PipelineResult run_pipeline(const PipelineConfig& cfg);

/// model.json, cloud.json, scenarios.json, sysid_log.csv, initial_profile.json
void write_pipeline_artifacts(const PipelineResult& r, const std::string& dir);

/// Two-step core-density reference over a 10 s run, paired seeds across
/// controllers, LPV benchmark plant drawing from the full cloud.
struct BenchmarkSpec {
  int duration_ms = 10000;
  double ref_before = 1.0;
  double ref_after = 1.2;
  int ref_step_ms = 5000;  // must sit on a tau_c boundary
  int n_seeds = 20;
  std::uint64_t seed_base = 1000;
  double perturbation_scale = 1.0;  // > 1 is the stress mode
  double cpu_budget_ms = 100.0;     // t_cpu_lim = tau_c
  std::vector<ControllerKind> controllers = {
      ControllerKind::Mi, ControllerKind::MsMi, ControllerKind::MsPth};
  ControllerConfig controller;  // template; kind is overridden per run

  ReferenceSchedule schedule() const;
  void validate() const;
};

struct MetricsReport {
  double mean_rrmse = 0.0;  // percent, averaged over every tau_s step
  int violation_count = 0;
  std::vector<int> violation_times;
  double max_edge_density = 0.0;
  double mean_solve_ms = 0.0;  // over control instants
  double max_solve_ms = 0.0;
  int cpu_budget_exceedances = 0;
  int pellets_fired = 0;
  int pellets_entered = 0;
  int solver_fallbacks = 0;  // instants that did not end "optimal"/"converged"

  Json to_json(bool deterministic = false) const;
};

/// RRMSE(t) = 100 sqrt(mean over the core window of ((y - r)/r)^2); the
/// reference is the scheduled core target at every core grid point.
MetricsReport compute_metrics(const ClosedLoopTrace& trace,
                              const ReferenceSchedule& reference,
                              int core_points, double cpu_budget_ms);

struct BenchmarkRun {
  ControllerKind kind = ControllerKind::Mi;
  std::uint64_t seed = 0;
  ClosedLoopTrace trace;
  MetricsReport metrics;
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;  // sorted by (controller, seed)
};

/// One closed loop: fresh LPV plant seeded for paired draws, fresh
/// controller of the given kind. Solver exceptions at a control instant are
/// logged in the trace status and yield u = 0 for that instant.
ClosedLoopTrace run_closed_loop(const PipelineResult& pipeline,
                                ControllerKind kind, const BenchmarkSpec& spec,
                                std::uint64_t seed);

BenchmarkResult run_benchmark(const PipelineResult& pipeline,
                              const BenchmarkSpec& spec);

/// Per-run trace CSVs, summary.json, and five plot-data files per
/// controller (core average vs reference, RRMSE, edge density vs limit,
/// decisions, solve time) built from each controller's first run.
void emit_report(const BenchmarkResult& result, const BenchmarkSpec& spec,
                 const std::string& dir, bool deterministic = false);

/// Head-to-head solver timing on identical closed-loop instances: the loop
/// is driven by branch-and-bound decisions, and at every control instant the
/// same condensed QP is also solved by the homotopy. Both solves are cold.
struct PairedSolveSample {
  int t = 0;
  int bnb_u0 = 0;
  int pth_u0 = 0;
  bool bnb_feasible = true;
  double bnb_ms = 0.0;
  double pth_ms = 0.0;
  int bnb_nodes = 0;
  std::string bnb_status;
  std::string pth_status;
};

struct PairedAudit {
  std::vector<PairedSolveSample> samples;
  double agreement_fraction = 0.0;  // first-input agreement
  double bnb_mean_ms = 0.0;
  double pth_mean_ms = 0.0;
  bool pth_fired_on_bnb_infeasible = false;
};

PairedAudit paired_solver_audit(const PipelineResult& pipeline,
                                const BenchmarkSpec& spec, std::uint64_t seed);

}  // namespace densctl
