#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "densctl/numerics.hpp"
#include "densctl/sysid.hpp"

namespace densctl {

/// Synthetic nonlinear truth plant: 1D diffusion of the density profile
/// over rho in [0,1] with an edge particle sink, a core source, and
/// Gaussian pellet deposition with randomized (amplitude, center, width).
/// Densities are in units of 1e20 m^-3; diffusivity is expressed in units
/// of drho^2 per step so the explicit scheme is stable when d(rho) < 0.5.
struct TruthPlantConfig {
  int n_y = 100;
  double diff_base = 0.10;   // D(rho) = diff_base * (1 + diff_quad * rho^2)
  double diff_quad = 3.0;
  double edge_sink_rate = 0.0015;   // acts on rho > 0.9
  double core_source_rate = 0.0;    // acts on rho < 0.3
  double edge_boundary_value = 0.3; // Dirichlet value at rho = 1
  // Deposition peaks near rho = 0.8 but the ablation tail reaches the core,
  // so one pellet lifts the core average by a few percent.
  double pellet_amp_lo = 0.25, pellet_amp_hi = 0.40;
  double pellet_center_lo = 0.75, pellet_center_hi = 0.85;
  double pellet_width_lo = 0.20, pellet_width_hi = 0.30;
  std::uint64_t seed = 1;

  double diffusivity(double rho) const {
    return diff_base * (1.0 + diff_quad * rho * rho);
  }
  void validate() const;  // CFL and parameter-range checks
};

struct MassLedger {
  double source_added = 0.0;
  double sink_removed = 0.0;
  double boundary_outflow = 0.0;  // net particles lost through rho = 1
  double pellet_added = 0.0;
};

class TruthPlant {
 public:
  explicit TruthPlant(TruthPlantConfig cfg);

  const Vector& profile() const { return profile_; }
  void set_profile(const Vector& p) { profile_ = p; }
  const MassLedger& ledger() const { return ledger_; }

  /// One explicit finite-difference step; adds a freshly drawn Gaussian
  /// bump when a pellet enters during this step.
  void step(bool pellet_entering);

  const TruthPlantConfig& config() const { return cfg_; }

 private:
  TruthPlantConfig cfg_;
  Vector profile_;
  Vector diff_;  // diffusivity at cell faces
  std::mt19937_64 rng_;
  MassLedger ledger_;
};

enum class DrawMode { UniformFromCloud, FixedSequence, ScenariosOnly };

/// Benchmark plant: the identified LPV model driven by perturbation draws
/// from the cloud. The draw stream is pre-generated from the seed and
/// indexed by pellet-entry count, so two closed loops with the same seed
/// see identical perturbations at the n-th pellet regardless of controller.
class LpvPlant {
 public:
  LpvPlant(StateSpaceModel model, Matrix cloud_rows, DrawMode mode,
           std::uint64_t seed, double perturbation_scale = 1.0);

  void reset_from_output(const Vector& y0);
  void set_fixed_sequence(std::vector<Vector> seq);

  Vector output() const { return model_.lift(x_); }
  const Vector& state() const { return x_; }

  /// x <- A x (+ scale * p + b0 when a pellet enters); returns y = C x.
  Vector step(bool pellet_entering);

  const StateSpaceModel& model() const { return model_; }
  int entry_count() const { return entry_count_; }

 private:
  Vector next_draw();

  StateSpaceModel model_;
  Matrix cloud_;
  DrawMode mode_;
  double scale_;
  std::vector<int> draw_indices_;  // pre-generated, indexed by entry count
  std::vector<Vector> fixed_seq_;
  Vector x_;
  int entry_count_ = 0;
};

/// Pellets in flight: fired at fire_time, entering at fire_time + delay.
class DelayLine {
 public:
  explicit DelayLine(int delay) : delay_(delay) {}

  void fire(int t);
  bool entering_at(int t);  // pops the matching event if present
  std::vector<int> pending_entries(int t) const;  // entry times >= t
  int delay() const { return delay_; }

 private:
  int delay_;
  std::deque<int> entry_times_;
};

struct Timing {
  int tau_s = 1;
  int tau_c = 100;
  int delay = 135;
  int start_offset = 0;  // first control instant
};

struct StepDecision {
  int u0 = 0;
  double solve_time_ms = 0.0;
  std::string status = "ok";
};

class Controller {
 public:
  virtual ~Controller() = default;
  struct PendingEntry {
    int entry_offset;  // steps from now until the pellet enters
  };
  virtual StepDecision decide(int t, const Vector& y,
                              const std::vector<PendingEntry>& pending) = 0;
};

/// Fires with probability q at each control instant; used for sysid
/// excitation.
class RandomFiringController : public Controller {
 public:
  RandomFiringController(double q, std::uint64_t seed) : q_(q), rng_(seed) {}
  StepDecision decide(int, const Vector&,
                      const std::vector<PendingEntry>&) override;

 private:
  double q_;
  std::mt19937_64 rng_;
};

struct ClosedLoopTrace {
  std::vector<int> t;
  std::vector<int> u_fired;
  std::vector<int> pellet_entered;
  std::vector<double> solve_time_ms;
  std::vector<int> violation_flag;
  std::vector<std::string> status;
  Matrix outputs;  // one row per step, measurement y(t)
  int edge_index = 0;
  double edge_limit = 1.0;

  Eigen::Index length() const { return outputs.rows(); }
  double edge_density(Eigen::Index i) const { return outputs(i, edge_index); }

  /// Columns: t,u_fired,pellet_entered,solve_time_ms,n_edge,violation_flag,
  /// y_0..y_{n_y-1}. Solve times are zeroed when deterministic is set.
  void to_csv(const std::string& path, bool deterministic = false) const;
};

/// Multi-rate closed loop: the controller runs at tau_c instants, the plant
/// at every tau_s step, and fired pellets enter after the fixed delay.
/// `plant_step` advances the plant and returns the new output; `measure`
/// returns the current output.
class PlantInterface {
 public:
  virtual ~PlantInterface() = default;
  virtual Vector measure() const = 0;
  virtual void advance(bool pellet_entering) = 0;
};

class TruthPlantAdapter : public PlantInterface {
 public:
  explicit TruthPlantAdapter(TruthPlant& p) : p_(p) {}
  Vector measure() const override { return p_.profile(); }
  void advance(bool pellet_entering) override { p_.step(pellet_entering); }

 private:
  TruthPlant& p_;
};

class LpvPlantAdapter : public PlantInterface {
 public:
  explicit LpvPlantAdapter(LpvPlant& p) : p_(p) {}
  Vector measure() const override { return p_.output(); }
  void advance(bool pellet_entering) override { p_.step(pellet_entering); }

 private:
  LpvPlant& p_;
};

ClosedLoopTrace run_executive(PlantInterface& plant, Controller* controller,
                              const Timing& timing, int duration_steps,
                              int edge_index, double edge_limit);

/// Runs the truth plant under the executive with random firing at control
/// instants and logs an entry-aligned SnapshotLog. Deterministic under seed.
SnapshotLog generate_sysid_data(const TruthPlantConfig& cfg,
                                const Vector& initial_profile, double q,
                                int duration_ms, std::uint64_t seed,
                                const Timing& timing = Timing{});

/// Autonomous settle of the truth plant from a default shape, used to
/// produce the reference initial profile.
Vector settle_truth_plant(const TruthPlantConfig& cfg, int steps);

}  // namespace densctl
