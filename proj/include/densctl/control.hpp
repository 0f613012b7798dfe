#pragma once

#include <functional>
#include <optional>

#include "densctl/optim.hpp"
#include "densctl/plant.hpp"
#include "densctl/scenario.hpp"
#include "densctl/sysid.hpp"

namespace densctl {

enum class ControllerKind { Mi, MsMi, MsPth };

const char* to_string(ControllerKind k);

/// Piecewise reference: core-average target as a function of absolute time
/// in tau_s steps.
using ReferenceSchedule = std::function<double(int t)>;

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Mi;
  int horizon = 500;          // N
  int n_controls = 5;         // N_c = N tau_s / tau_c
  int control_interval = 100; // tau_c
  int delay = 135;            // d
  double q_core = 10.0;       // weight on the first core_points outputs
  double q_rest = 1e-4;
  int core_points = 40;       // rho in [0, 0.4]
  double r_weight = 1.0;
  int edge_index = 84;        // rho = 0.85 on the 100-point grid
  double edge_limit = 1.0;    // n_e,lim in 1e20 m^-3
  int robust_horizon = 1;     // N_R for the ms kinds
  PthSchedule pth;
  BnbOptions bnb;
  bool store_predictions = false;
  bool use_warm_start = true;

  void validate(int n_y) const;
};

struct ControlDecision {
  int u0 = 0;
  Vector planned_inputs;  // deduplicated decision vector z
  std::string status;
  double solve_time_ms = 0.0;
  double objective = 0.0;
  // Per-scenario predicted outputs from the QP's affine maps, (N+1) x n_y;
  // filled when store_predictions is set.
  std::vector<Matrix> predicted_outputs;
  std::optional<CondensedQp> qp;  // kept only when store_predictions is set
};

/// One MPC policy instance: owns the model, scenario set, and warm-start
/// state for a single closed loop.
class MpcController : public Controller {
 public:
  /// `rest_reference` is the profile the non-core outputs are held to
  /// (typically the pre-step steady profile; its weight is q_rest).
  MpcController(ControllerConfig cfg, StateSpaceModel model,
                ScenarioSet scenarios, ReferenceSchedule reference,
                Vector rest_reference);

  StepDecision decide(int t, const Vector& y,
                      const std::vector<PendingEntry>& pending) override;

  /// Full decision with solver detail; decide() wraps this.
  ControlDecision decide_full(int t, const Vector& y,
                              const std::vector<PendingEntry>& pending);

  /// The OCP this controller would solve at (t, y, pending); exposed so the
  /// harness can audit paired solves on identical instances.
  OcpSpec build_ocp(int t, const Vector& y,
                    const std::vector<PendingEntry>& pending) const;

  const ControllerConfig& config() const { return cfg_; }
  void reset_warm_start() { warm_start_.reset(); }

 private:
  ControllerConfig cfg_;
  StateSpaceModel model_;
  ScenarioSet scenarios_;
  ReferenceSchedule reference_;
  Vector rest_reference_;
  ScenarioTree tree_;
  std::optional<Vector> warm_start_;

  Vector shift_warm_start(const Vector& z) const;
};

}  // namespace densctl
