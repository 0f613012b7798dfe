#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "densctl/harness.hpp"

namespace {

using densctl::Json;

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::string controller = "all";
  long seed = -1;  // -1 keeps the config value
  bool deterministic = false;
};

void apply_config(const Json& j, densctl::PipelineConfig& pipe,
                  densctl::BenchmarkSpec& bench) {
  if (j.value("schema", std::string{}) != "densctl.config.v1") {
    throw std::runtime_error("config: expected schema densctl.config.v1");
  }
  if (j.contains("pipeline")) {
    const Json& p = j["pipeline"];
    pipe.seed = p.value("seed", pipe.seed);
    pipe.settle_steps = p.value("settle_steps", pipe.settle_steps);
    pipe.firing_probability =
        p.value("firing_probability", pipe.firing_probability);
    pipe.sysid_duration_ms = p.value("sysid_duration_ms", pipe.sysid_duration_ms);
    pipe.n_x = p.value("n_x", pipe.n_x);
    pipe.n_p = p.value("n_p", pipe.n_p);
    if (p.contains("plant")) {
      const Json& t = p["plant"];
      auto& c = pipe.plant;
      c.diff_base = t.value("diff_base", c.diff_base);
      c.diff_quad = t.value("diff_quad", c.diff_quad);
      c.edge_sink_rate = t.value("edge_sink_rate", c.edge_sink_rate);
      c.core_source_rate = t.value("core_source_rate", c.core_source_rate);
      c.edge_boundary_value =
          t.value("edge_boundary_value", c.edge_boundary_value);
      c.pellet_amp_lo = t.value("pellet_amp_lo", c.pellet_amp_lo);
      c.pellet_amp_hi = t.value("pellet_amp_hi", c.pellet_amp_hi);
      c.pellet_center_lo = t.value("pellet_center_lo", c.pellet_center_lo);
      c.pellet_center_hi = t.value("pellet_center_hi", c.pellet_center_hi);
      c.pellet_width_lo = t.value("pellet_width_lo", c.pellet_width_lo);
      c.pellet_width_hi = t.value("pellet_width_hi", c.pellet_width_hi);
    }
  }
  if (j.contains("benchmark")) {
    const Json& b = j["benchmark"];
    bench.duration_ms = b.value("duration_ms", bench.duration_ms);
    bench.ref_before = b.value("ref_before", bench.ref_before);
    bench.ref_after = b.value("ref_after", bench.ref_after);
    bench.ref_step_ms = b.value("ref_step_ms", bench.ref_step_ms);
    bench.n_seeds = b.value("n_seeds", bench.n_seeds);
    bench.seed_base = b.value("seed_base", bench.seed_base);
    bench.perturbation_scale =
        b.value("perturbation_scale", bench.perturbation_scale);
  }
}

densctl::PipelineResult prepare(const CliOptions& opt,
                                densctl::PipelineConfig& pipe,
                                densctl::BenchmarkSpec& bench) {
  if (!opt.config_path.empty()) {
    apply_config(densctl::read_json_file(opt.config_path), pipe, bench);
  }
  if (opt.seed >= 0) pipe.seed = static_cast<std::uint64_t>(opt.seed);
  return densctl::run_pipeline(pipe);
}

int cmd_sysid(const CliOptions& opt) {
  densctl::PipelineConfig pipe;
  densctl::BenchmarkSpec bench;
  const densctl::PipelineResult r = prepare(opt, pipe, bench);
  densctl::write_pipeline_artifacts(r, opt.out_dir);
  std::printf("model: n_x=%ld fit_residual=%.3e spectral_radius=%.6f\n",
              static_cast<long>(r.model.state_dim()), r.model.fit_residual,
              r.model.spectral_radius);
  std::printf("metrics: one_step_rmse=%.3e open_loop_rmse=%.3e pellet_step_rmse=%.3e\n",
              r.fit_metrics.one_step_rmse, r.fit_metrics.open_loop_rmse,
              r.fit_metrics.pellet_step_rmse);
  std::printf("cloud: %ld perturbation rows\n", static_cast<long>(r.cloud.size()));
  std::printf("artifacts written to %s\n", opt.out_dir.c_str());
  return 0;
}

int cmd_scenarios(const CliOptions& opt) {
  densctl::PipelineConfig pipe;
  densctl::BenchmarkSpec bench;
  const densctl::PipelineResult r = prepare(opt, pipe, bench);
  densctl::write_pipeline_artifacts(r, opt.out_dir);
  const auto& ev = r.cloud.pca.explained_variance_fractions;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    std::printf("component %ld: explained variance %.4f\n",
                static_cast<long>(i), ev(i));
  }
  std::printf("first two components: %.4f\n",
              ev.size() >= 2 ? ev(0) + ev(1) : ev.sum());
  for (Eigen::Index i = 0; i < r.scenarios.size(); ++i) {
    std::printf("scenario %ld: cloud row %d, weight %.4f\n",
                static_cast<long>(i), r.scenarios.provenance[static_cast<size_t>(i)],
                r.scenarios.weights(i));
  }
  return 0;
}

int cmd_run(const CliOptions& opt) {
  densctl::PipelineConfig pipe;
  densctl::BenchmarkSpec bench;
  const densctl::PipelineResult r = prepare(opt, pipe, bench);
  densctl::write_pipeline_artifacts(r, opt.out_dir);

  if (opt.controller != "all") {
    if (opt.controller == "mi") {
      bench.controllers = {densctl::ControllerKind::Mi};
    } else if (opt.controller == "ms-mi") {
      bench.controllers = {densctl::ControllerKind::MsMi};
    } else if (opt.controller == "ms-pth") {
      bench.controllers = {densctl::ControllerKind::MsPth};
    } else {
      std::fprintf(stderr, "unknown controller: %s\n", opt.controller.c_str());
      return 2;
    }
  }
  const densctl::BenchmarkResult result = densctl::run_benchmark(r, bench);
  densctl::emit_report(result, bench, opt.out_dir, opt.deterministic);
  for (const auto& run : result.runs) {
    std::printf("%-7s seed=%llu rrmse=%.4f%% violations=%d pellets=%d fallbacks=%d\n",
                densctl::to_string(run.kind),
                static_cast<unsigned long long>(run.seed),
                run.metrics.mean_rrmse, run.metrics.violation_count,
                run.metrics.pellets_entered, run.metrics.solver_fallbacks);
  }
  std::printf("report written to %s\n", opt.out_dir.c_str());
  return 0;
}

int cmd_report(const CliOptions& opt) {
  const Json summary = densctl::read_json_file(opt.out_dir + "/summary.json");
  if (summary.contains("aggregate")) {
    for (const auto& [kind, agg] : summary["aggregate"].items()) {
      std::printf("%-7s seeds=%d mean_rrmse=%.4f%% violations=%d fallbacks=%d\n",
                  kind.c_str(), agg.value("seeds", 0),
                  agg.value("mean_rrmse_percent", 0.0),
                  agg.value("total_violations", 0),
                  agg.value("total_solver_fallbacks", 0));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pellet-fueling density-profile control pipeline"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--seed", opt.seed, "override pipeline seed");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_flag("--deterministic", opt.deterministic,
                  "zero wall-clock fields in emitted files");
  };

  CLI::App* sysid = app.add_subcommand("sysid", "generate data and fit the model");
  add_common(sysid);
  CLI::App* scenarios =
      app.add_subcommand("scenarios", "PCA scenario selection");
  add_common(scenarios);
  CLI::App* run = app.add_subcommand("run", "closed-loop benchmark");
  add_common(run);
  run->add_option("--controller", opt.controller,
                  "mi, ms-mi, ms-pth, or all");
  CLI::App* report = app.add_subcommand("report", "print an existing summary");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sysid->parsed()) return cmd_sysid(opt);
    if (scenarios->parsed()) return cmd_scenarios(opt);
    if (run->parsed()) return cmd_run(opt);
    if (report->parsed()) return cmd_report(opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
