#include "densctl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "densctl/errors.hpp"

namespace densctl {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

/// Turns any solver exception at a control instant into u = 0 with the
/// error recorded in the trace status; the loop keeps running.
class FailSafeController : public Controller {
 public:
  explicit FailSafeController(Controller& inner) : inner_(inner) {}

  StepDecision decide(int t, const Vector& y,
                      const std::vector<PendingEntry>& pending) override {
    try {
      return inner_.decide(t, y, pending);
    } catch (const std::exception& e) {
      StepDecision d;
      d.u0 = 0;
      d.status = std::string("error:") + e.what();
      return d;
    }
  }

 private:
  Controller& inner_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  TruthPlantConfig plant = cfg.plant;
  plant.seed = cfg.seed;

  PipelineResult r;
  r.initial_profile = settle_truth_plant(plant, cfg.settle_steps);
  r.log = generate_sysid_data(plant, r.initial_profile, cfg.firing_probability,
                              cfg.sysid_duration_ms, cfg.seed + 1, cfg.timing);
  r.model = dmdc_fit(r.log, cfg.n_x);
  r.model.delay_steps = cfg.timing.delay;
  r.cloud = extract_parameter_cloud(r.log, r.model);
  r.scenarios = select_scenarios_pca(r.cloud, cfg.n_p);
  r.fit_metrics = model_metrics(r.model, r.log);
  return r;
}

void write_pipeline_artifacts(const PipelineResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  r.model.to_json_file(dir + "/model.json");
  r.cloud.to_json_file(dir + "/cloud.json");
  r.scenarios.to_json_file(dir + "/scenarios.json");
  r.log.to_csv(dir + "/sysid_log.csv");
  Json j;
  j["schema"] = "densctl.profile.v1";
  j["profile"] = vector_to_json(r.initial_profile);
  write_json_file(dir + "/initial_profile.json", j);
}

ReferenceSchedule BenchmarkSpec::schedule() const {
  const int step = ref_step_ms;
  const double lo = ref_before, hi = ref_after;
  return [step, lo, hi](int t) { return t < step ? lo : hi; };
}

void BenchmarkSpec::validate() const {
  if (duration_ms <= 0 || n_seeds < 1 || controllers.empty()) {
    throw std::invalid_argument("BenchmarkSpec: empty benchmark");
  }
  if (ref_step_ms % controller.control_interval != 0) {
    throw std::invalid_argument(
        "BenchmarkSpec: reference step must sit on a control-interval boundary");
  }
  if (ref_before <= 0.0 || ref_after <= 0.0 || perturbation_scale < 0.0) {
    throw std::invalid_argument("BenchmarkSpec: bad reference or scale");
  }
}

Json MetricsReport::to_json(bool deterministic) const {
  Json j;
  j["mean_rrmse_percent"] = mean_rrmse;
  j["violation_count"] = violation_count;
  j["violation_times"] = violation_times;
  j["max_edge_density"] = max_edge_density;
  j["mean_solve_ms"] = deterministic ? 0.0 : mean_solve_ms;
  j["max_solve_ms"] = deterministic ? 0.0 : max_solve_ms;
  j["cpu_budget_exceedances"] = deterministic ? 0 : cpu_budget_exceedances;
  j["pellets_fired"] = pellets_fired;
  j["pellets_entered"] = pellets_entered;
  j["solver_fallbacks"] = solver_fallbacks;
  return j;
}

MetricsReport compute_metrics(const ClosedLoopTrace& trace,
                              const ReferenceSchedule& reference,
                              int core_points, double cpu_budget_ms) {
  if (trace.length() == 0) throw DataError("compute_metrics: empty trace");
  MetricsReport m;
  double rrmse_sum = 0.0;
  double solve_sum = 0.0;
  int instants = 0;
  for (Eigen::Index i = 0; i < trace.length(); ++i) {
    const size_t s = static_cast<size_t>(i);
    const double r = reference(trace.t[s]);
    if (!(std::abs(r) > 1e-12)) {
      throw DataError("compute_metrics: reference is zero in the core window");
    }
    double sq = 0.0;
    for (int k = 0; k < core_points; ++k) {
      const double e = (trace.outputs(i, k) - r) / r;
      sq += e * e;
    }
    rrmse_sum += 100.0 * std::sqrt(sq / core_points);

    if (trace.violation_flag[s]) {
      ++m.violation_count;
      m.violation_times.push_back(trace.t[s]);
    }
    m.max_edge_density = std::max(m.max_edge_density, trace.edge_density(i));
    m.pellets_fired += trace.u_fired[s];
    m.pellets_entered += trace.pellet_entered[s];

    if (trace.status[s] != "-") {
      ++instants;
      const double ms = trace.solve_time_ms[s];
      solve_sum += ms;
      m.max_solve_ms = std::max(m.max_solve_ms, ms);
      if (ms > cpu_budget_ms) ++m.cpu_budget_exceedances;
      const std::string& st = trace.status[s];
      if (st != "optimal" && st != "converged" && st != "ok") {
        ++m.solver_fallbacks;
      }
    }
  }
  m.mean_rrmse = rrmse_sum / static_cast<double>(trace.length());
  if (instants > 0) m.mean_solve_ms = solve_sum / instants;
  return m;
}

ClosedLoopTrace run_closed_loop(const PipelineResult& pipeline,
                                ControllerKind kind, const BenchmarkSpec& spec,
                                std::uint64_t seed) {
  LpvPlant plant(pipeline.model, pipeline.cloud.p, DrawMode::UniformFromCloud,
                 seed, spec.perturbation_scale);
  plant.reset_from_output(pipeline.initial_profile);
  LpvPlantAdapter adapter(plant);

  ControllerConfig cc = spec.controller;
  cc.kind = kind;
  MpcController ctrl(cc, pipeline.model, pipeline.scenarios, spec.schedule(),
                     pipeline.initial_profile);
  FailSafeController safe(ctrl);

  Timing timing;
  timing.tau_c = cc.control_interval;
  timing.delay = cc.delay;
  return run_executive(adapter, &safe, timing, spec.duration_ms, cc.edge_index,
                       cc.edge_limit);
}

BenchmarkResult run_benchmark(const PipelineResult& pipeline,
                              const BenchmarkSpec& spec) {
  spec.validate();
  const ReferenceSchedule ref = spec.schedule();
  BenchmarkResult result;
  for (ControllerKind kind : spec.controllers) {
    for (int s = 0; s < spec.n_seeds; ++s) {
      BenchmarkRun run;
      run.kind = kind;
      run.seed = spec.seed_base + static_cast<std::uint64_t>(s);
      run.trace = run_closed_loop(pipeline, kind, spec, run.seed);
      run.metrics = compute_metrics(run.trace, ref, spec.controller.core_points,
                                    spec.cpu_budget_ms);
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

void write_plot_files(const BenchmarkRun& run, const BenchmarkSpec& spec,
                      const std::string& dir, bool deterministic) {
  const std::string kind = to_string(run.kind);
  const ClosedLoopTrace& tr = run.trace;
  const ReferenceSchedule ref = spec.schedule();
  const int core = spec.controller.core_points;

  auto core_avg = [&](Eigen::Index i) {
    return tr.outputs.row(i).head(core).mean();
  };

  {
    auto out = open_out(dir + "/plot_" + kind + "_core_tracking.csv");
    out << "t,core_avg,reference\n";
    for (Eigen::Index i = 0; i < tr.length(); ++i) {
      out << tr.t[static_cast<size_t>(i)] << ',' << format_double(core_avg(i))
          << ',' << format_double(ref(tr.t[static_cast<size_t>(i)])) << '\n';
    }
  }
  {
    auto out = open_out(dir + "/plot_" + kind + "_rrmse.csv");
    out << "t,rrmse_percent\n";
    for (Eigen::Index i = 0; i < tr.length(); ++i) {
      const double r = ref(tr.t[static_cast<size_t>(i)]);
      double sq = 0.0;
      for (int k = 0; k < core; ++k) {
        const double e = (tr.outputs(i, k) - r) / r;
        sq += e * e;
      }
      out << tr.t[static_cast<size_t>(i)] << ','
          << format_double(100.0 * std::sqrt(sq / core)) << '\n';
    }
  }
  {
    auto out = open_out(dir + "/plot_" + kind + "_edge.csv");
    out << "t,n_edge,limit\n";
    for (Eigen::Index i = 0; i < tr.length(); ++i) {
      out << tr.t[static_cast<size_t>(i)] << ','
          << format_double(tr.edge_density(i)) << ','
          << format_double(tr.edge_limit) << '\n';
    }
  }
  {
    auto out = open_out(dir + "/plot_" + kind + "_decisions.csv");
    out << "t,u_fired,pellet_entered\n";
    for (size_t i = 0; i < tr.t.size(); ++i) {
      out << tr.t[i] << ',' << tr.u_fired[i] << ',' << tr.pellet_entered[i]
          << '\n';
    }
  }
  {
    auto out = open_out(dir + "/plot_" + kind + "_solve_time.csv");
    out << "t,solve_time_ms\n";
    for (size_t i = 0; i < tr.t.size(); ++i) {
      out << tr.t[i] << ','
          << format_double(deterministic ? 0.0 : tr.solve_time_ms[i]) << '\n';
    }
  }
}

}  // namespace

void emit_report(const BenchmarkResult& result, const BenchmarkSpec& spec,
                 const std::string& dir, bool deterministic) {
  std::filesystem::create_directories(dir);

  Json summary;
  summary["schema"] = "densctl.benchmark.v1";
  summary["duration_ms"] = spec.duration_ms;
  summary["reference"] = {{"before", spec.ref_before},
                          {"after", spec.ref_after},
                          {"step_ms", spec.ref_step_ms}};
  summary["perturbation_scale"] = spec.perturbation_scale;
  summary["runs"] = Json::array();

  std::vector<std::string> plotted;
  for (const BenchmarkRun& run : result.runs) {
    const std::string kind = to_string(run.kind);
    Json entry;
    entry["controller"] = kind;
    entry["seed"] = run.seed;
    entry["metrics"] = run.metrics.to_json(deterministic);
    summary["runs"].push_back(std::move(entry));

    run.trace.to_csv(dir + "/trace_" + kind + "_seed" +
                         std::to_string(run.seed) + ".csv",
                     deterministic);
    if (std::find(plotted.begin(), plotted.end(), kind) == plotted.end()) {
      plotted.push_back(kind);
      write_plot_files(run, spec, dir, deterministic);
    }
  }

  Json aggregate = Json::object();
  for (const std::string& kind : plotted) {
    double rrmse = 0.0;
    int n = 0, violations = 0, fallbacks = 0;
    for (const BenchmarkRun& run : result.runs) {
      if (to_string(run.kind) != kind) continue;
      rrmse += run.metrics.mean_rrmse;
      violations += run.metrics.violation_count;
      fallbacks += run.metrics.solver_fallbacks;
      ++n;
    }
    aggregate[kind] = {{"seeds", n},
                       {"mean_rrmse_percent", rrmse / n},
                       {"total_violations", violations},
                       {"total_solver_fallbacks", fallbacks}};
  }
  summary["aggregate"] = std::move(aggregate);
  write_json_file(dir + "/summary.json", summary);
}

namespace {

/// Drives the loop with branch-and-bound decisions and times a cold
/// homotopy solve on the same condensed QP at every instant.
class PairedAuditController : public Controller {
 public:
  PairedAuditController(MpcController& builder, const ControllerConfig& cc,
                        std::vector<PairedSolveSample>& out)
      : builder_(builder), cc_(cc), out_(out) {}

  StepDecision decide(int t, const Vector& y,
                      const std::vector<PendingEntry>& pending) override {
    const OcpSpec spec = builder_.build_ocp(t, y, pending);
    const CondensedQp qp = condense(spec);
    const int var0 = spec.tree.variable_index(0, 0);

    PairedSolveSample sample;
    sample.t = t;

    auto t0 = std::chrono::steady_clock::now();
    const QpSolution bnb = solve_miqp_bnb(qp, cc_.bnb, nullptr);
    sample.bnb_ms = elapsed_ms(t0);
    sample.bnb_feasible = bnb.status != SolveStatus::Infeasible;
    sample.bnb_nodes = bnb.nodes_explored;
    sample.bnb_u0 = bnb.status == SolveStatus::Optimal
                        ? static_cast<int>(std::lround(bnb.z(var0)))
                        : 0;
    sample.bnb_status = to_string(bnb.status);

    t0 = std::chrono::steady_clock::now();
    const PthResult pth = pth_solve(qp, cc_.pth, nullptr);
    sample.pth_ms = elapsed_ms(t0);
    sample.pth_u0 = pth.status == PthStatus::Converged
                        ? static_cast<int>(std::lround(pth.z(var0)))
                        : 0;
    sample.pth_status = to_string(pth.status);

    StepDecision d;
    d.u0 = sample.bnb_u0;
    d.solve_time_ms = sample.bnb_ms;
    d.status = to_string(bnb.status);
    out_.push_back(sample);
    return d;
  }

 private:
  MpcController& builder_;
  const ControllerConfig& cc_;
  std::vector<PairedSolveSample>& out_;
};

}  // namespace

PairedAudit paired_solver_audit(const PipelineResult& pipeline,
                                const BenchmarkSpec& spec,
                                std::uint64_t seed) {
  LpvPlant plant(pipeline.model, pipeline.cloud.p, DrawMode::UniformFromCloud,
                 seed, spec.perturbation_scale);
  plant.reset_from_output(pipeline.initial_profile);
  LpvPlantAdapter adapter(plant);

  ControllerConfig cc = spec.controller;
  cc.kind = ControllerKind::MsMi;
  cc.use_warm_start = false;
  MpcController builder(cc, pipeline.model, pipeline.scenarios,
                        spec.schedule(), pipeline.initial_profile);

  PairedAudit audit;
  PairedAuditController ctrl(builder, cc, audit.samples);
  Timing timing;
  timing.tau_c = cc.control_interval;
  timing.delay = cc.delay;
  run_executive(adapter, &ctrl, timing, spec.duration_ms, cc.edge_index,
                cc.edge_limit);

  int agree = 0;
  for (const PairedSolveSample& s : audit.samples) {
    if (s.bnb_u0 == s.pth_u0) ++agree;
    if (!s.bnb_feasible && s.pth_u0 == 1) {
      audit.pth_fired_on_bnb_infeasible = true;
    }
    audit.bnb_mean_ms += s.bnb_ms;
    audit.pth_mean_ms += s.pth_ms;
  }
  if (!audit.samples.empty()) {
    const double n = static_cast<double>(audit.samples.size());
    audit.agreement_fraction = agree / n;
    audit.bnb_mean_ms /= n;
    audit.pth_mean_ms /= n;
  }
  return audit;
}

}  // namespace densctl
