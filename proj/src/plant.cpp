#include "densctl/plant.hpp"

#include <cmath>

#include "densctl/io.hpp"

namespace densctl {

void TruthPlantConfig::validate() const {
  if (n_y < 4) throw std::invalid_argument("truth plant: n_y too small");
  if (diff_base <= 0.0 || diff_quad < 0.0) {
    throw std::invalid_argument("truth plant: diffusivity must be positive");
  }
  const double d_max = diffusivity(1.0);
  if (d_max >= 0.5) {
    throw std::invalid_argument("truth plant: CFL violated, max D >= 0.5");
  }
  if (2.0 * d_max + edge_sink_rate > 1.0) {
    throw std::invalid_argument("truth plant: update not monotone");
  }
  if (pellet_amp_lo <= 0.0 || pellet_amp_hi < pellet_amp_lo ||
      pellet_width_lo <= 0.0 || pellet_width_hi < pellet_width_lo ||
      pellet_center_lo <= 0.0 || pellet_center_hi < pellet_center_lo ||
      pellet_center_hi >= 1.0) {
    throw std::invalid_argument("truth plant: bad pellet deposition law");
  }
  if (edge_sink_rate < 0.0 || core_source_rate < 0.0 ||
      edge_boundary_value < 0.0) {
    throw std::invalid_argument("truth plant: negative rate");
  }
}

TruthPlant::TruthPlant(TruthPlantConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  const int n = cfg_.n_y;
  profile_ = Vector::Constant(n, cfg_.edge_boundary_value);
  diff_.resize(n - 1);  // diffusivity at cell faces
  const double drho = 1.0 / static_cast<double>(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    diff_(i) = cfg_.diffusivity((i + 0.5) * drho);
  }
}

void TruthPlant::step(bool pellet_entering) {
  const int n = cfg_.n_y;
  const double drho = 1.0 / static_cast<double>(n - 1);
  const Vector old = profile_;
  Vector next = old;

  // Conservative diffusion, zero-flux at rho = 0.
  for (int i = 0; i < n; ++i) {
    double lap = 0.0;
    if (i + 1 < n) lap += diff_(i) * (old(i + 1) - old(i));
    if (i > 0) lap += diff_(i - 1) * (old(i - 1) - old(i));
    next(i) += lap;
  }
  for (int i = 0; i < n; ++i) {
    const double rho = i * drho;
    if (rho < 0.3) {
      next(i) += cfg_.core_source_rate;
      ledger_.source_added += cfg_.core_source_rate;
    }
    if (rho > 0.9) {
      const double removed = cfg_.edge_sink_rate * old(i);
      next(i) -= removed;
      ledger_.sink_removed += removed;
    }
  }
  if (pellet_entering) {
    std::uniform_real_distribution<double> amp(cfg_.pellet_amp_lo, cfg_.pellet_amp_hi);
    std::uniform_real_distribution<double> ctr(cfg_.pellet_center_lo, cfg_.pellet_center_hi);
    std::uniform_real_distribution<double> wid(cfg_.pellet_width_lo, cfg_.pellet_width_hi);
    const double a = amp(rng_);
    const double c = ctr(rng_);
    const double w = wid(rng_);
    for (int i = 0; i < n; ++i) {
      const double rho = i * drho;
      const double bump = a * std::exp(-0.5 * (rho - c) * (rho - c) / (w * w));
      next(i) += bump;
      ledger_.pellet_added += bump;
    }
  }
  // Fixed low-density boundary at rho = 1; the ledger books the particles
  // it absorbs or supplies.
  ledger_.boundary_outflow += next(n - 1) - cfg_.edge_boundary_value;
  next(n - 1) = cfg_.edge_boundary_value;
  profile_ = next;
}

LpvPlant::LpvPlant(StateSpaceModel model, Matrix cloud_rows, DrawMode mode,
                   std::uint64_t seed, double perturbation_scale)
    : model_(std::move(model)),
      cloud_(std::move(cloud_rows)),
      mode_(mode),
      scale_(perturbation_scale) {
  if (mode_ != DrawMode::FixedSequence && cloud_.rows() == 0) {
    throw DataError("LpvPlant: empty cloud");
  }
  x_ = Vector::Zero(model_.state_dim());
  // Pre-generate the draw stream so the n-th pellet entry sees the same
  // realization no matter which controller produced it.
  std::mt19937_64 rng(seed);
  if (cloud_.rows() > 0) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(cloud_.rows()) - 1);
    draw_indices_.resize(4096);
    for (int& idx : draw_indices_) idx = pick(rng);
  }
}

void LpvPlant::reset_from_output(const Vector& y0) {
  x_ = model_.project(y0);
  entry_count_ = 0;
}

void LpvPlant::set_fixed_sequence(std::vector<Vector> seq) {
  fixed_seq_ = std::move(seq);
}

Vector LpvPlant::next_draw() {
  const int i = entry_count_;
  switch (mode_) {
    case DrawMode::FixedSequence:
      if (i >= static_cast<int>(fixed_seq_.size())) {
        throw DataError("LpvPlant: fixed perturbation sequence exhausted");
      }
      return fixed_seq_[static_cast<size_t>(i)];
    case DrawMode::UniformFromCloud:
    case DrawMode::ScenariosOnly:
      if (i >= static_cast<int>(draw_indices_.size())) {
        throw DataError("LpvPlant: draw stream exhausted");
      }
      return cloud_.row(draw_indices_[static_cast<size_t>(i)]).transpose();
  }
  throw ContractError("LpvPlant: bad draw mode");
}

Vector LpvPlant::step(bool pellet_entering) {
  if (pellet_entering) {
    const Vector p = next_draw();
    x_ = model_.a * x_ + scale_ * p + model_.b0;
    ++entry_count_;
  } else {
    x_ = model_.a * x_;
  }
  return model_.lift(x_);
}

void DelayLine::fire(int t) { entry_times_.push_back(t + delay_); }

bool DelayLine::entering_at(int t) {
  if (!entry_times_.empty() && entry_times_.front() == t) {
    entry_times_.pop_front();
    return true;
  }
  return false;
}

std::vector<int> DelayLine::pending_entries(int t) const {
  std::vector<int> out;
  for (int e : entry_times_) {
    if (e >= t) out.push_back(e);
  }
  return out;
}

StepDecision RandomFiringController::decide(int, const Vector&,
                                            const std::vector<PendingEntry>&) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StepDecision d;
  d.u0 = unit(rng_) < q_ ? 1 : 0;
  return d;
}

void ClosedLoopTrace::to_csv(const std::string& path, bool deterministic) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "t,u_fired,pellet_entered,solve_time_ms,n_edge,violation_flag";
  for (Eigen::Index j = 0; j < outputs.cols(); ++j) out << ",y_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < length(); ++i) {
    const size_t s = static_cast<size_t>(i);
    out << t[s] << ',' << u_fired[s] << ',' << pellet_entered[s] << ','
        << format_double(deterministic ? 0.0 : solve_time_ms[s]) << ','
        << format_double(edge_density(i)) << ',' << violation_flag[s];
    for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
      out << ',' << format_double(outputs(i, j));
    }
    out << '\n';
  }
}

ClosedLoopTrace run_executive(PlantInterface& plant, Controller* controller,
                              const Timing& timing, int duration_steps,
                              int edge_index, double edge_limit) {
  if (timing.tau_c % timing.tau_s != 0 || timing.delay < 0) {
    throw std::invalid_argument("run_executive: bad timing");
  }
  DelayLine queue(timing.delay);
  ClosedLoopTrace trace;
  trace.edge_index = edge_index;
  trace.edge_limit = edge_limit;
  const Vector y0 = plant.measure();
  trace.outputs.resize(duration_steps, y0.size());

  for (int t = 0; t < duration_steps; ++t) {
    const Vector y = plant.measure();
    int u = 0;
    double solve_ms = 0.0;
    std::string status = "-";
    const bool control_instant =
        controller != nullptr && t >= timing.start_offset &&
        (t - timing.start_offset) % timing.tau_c == 0;
    if (control_instant) {
      std::vector<Controller::PendingEntry> pending;
      for (int e : queue.pending_entries(t)) {
        pending.push_back(Controller::PendingEntry{e - t});
      }
      const StepDecision d = controller->decide(t, y, pending);
      if (d.u0 != 0 && d.u0 != 1) {
        throw ContractError("run_executive: controller returned non-binary u");
      }
      u = d.u0;
      solve_ms = d.solve_time_ms;
      status = d.status;
      if (u == 1) queue.fire(t);
    }
    const bool entering = queue.entering_at(t);
    trace.t.push_back(t);
    trace.u_fired.push_back(u);
    trace.pellet_entered.push_back(entering ? 1 : 0);
    trace.solve_time_ms.push_back(solve_ms);
    trace.violation_flag.push_back(y(edge_index) > edge_limit ? 1 : 0);
    trace.status.push_back(status);
    trace.outputs.row(t) = y.transpose();
    plant.advance(entering);
  }
  return trace;
}

SnapshotLog generate_sysid_data(const TruthPlantConfig& cfg,
                                const Vector& initial_profile, double q,
                                int duration_ms, std::uint64_t seed,
                                const Timing& timing) {
  if (duration_ms < 2000) {
    throw std::invalid_argument("generate_sysid_data: duration < 2000 ms");
  }
  if (q < 0.0 || q >= 1.0) {
    throw std::invalid_argument("generate_sysid_data: q must be in [0,1)");
  }
  TruthPlant plant(cfg);
  plant.set_profile(initial_profile);
  TruthPlantAdapter adapter(plant);
  RandomFiringController firing(q, seed);
  const int edge_index = static_cast<int>(std::lround(0.85 * (cfg.n_y - 1)));
  const ClosedLoopTrace trace =
      run_executive(adapter, &firing, timing, duration_ms, edge_index, 1.0);
  SnapshotLog log;
  log.outputs = trace.outputs;
  log.inputs = trace.pellet_entered;
  return log;
}

Vector settle_truth_plant(const TruthPlantConfig& cfg, int steps) {
  TruthPlant plant(cfg);
  const int n = cfg.n_y;
  Vector shape(n);
  const double drho = 1.0 / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) {
    const double rho = i * drho;
    shape(i) = std::max(cfg.edge_boundary_value, 1.05 * (1.0 - 0.55 * rho * rho));
  }
  plant.set_profile(shape);
  for (int i = 0; i < steps; ++i) plant.step(false);
  return plant.profile();
}

}  // namespace densctl
