#pragma once

#include <string>
#include <vector>

#include "densctl/numerics.hpp"
#include "densctl/scenario.hpp"

namespace densctl {

/// Optimal-control problem over one measurement: per-scenario prediction
/// models B_j = b0 + p_j, horizon of `horizon` fast steps with decisions at
/// the control instants {0, tau_c, ..., (N_c-1) tau_c}, inputs delayed by
/// `delay` steps, plus the already-fired pellets still in flight.
struct OcpSpec {
  Matrix a;
  Vector b0;
  Matrix c;
  Matrix scenario_perturbations;  // S x n_x, row j is p_j
  Vector scenario_weights;        // S entries, sum to 1
  ScenarioTree tree;
  int horizon = 0;           // N (tau_s steps)
  int control_interval = 0;  // tau_c
  int delay = 0;             // d
  std::vector<int> pending_entry_offsets;  // steps until in-flight entries
  Vector x0;
  Matrix reference;  // (N+1) x n_y output reference
  Vector q_diag;     // n_y
  double r_weight = 1.0;
  int edge_index = 0;
  double edge_limit = 1.0;
  bool keep_state_maps = false;

  int scenario_count() const { return tree.scenario_count; }
  void validate() const;
};

/// Dense QP over the deduplicated control decisions z in [0,1]^n:
///   min 1/2 z'Hz + f'z + c0   s.t.  g z <= g_rhs,  z binary in MI mode.
/// States are eliminated; non-anticipativity is handled by variable
/// deduplication (the tree keeps the E_ell pairs for audit).
struct CondensedQp {
  Matrix h;
  Vector f;
  double c0 = 0.0;
  Matrix g;        // retained (non-vacuous) edge-constraint rows
  Vector g_rhs;
  Vector g_weight;  // per-row barrier weight: scenario weight / horizon
  std::vector<int> active_rows;  // rows not provably redundant over the box
  int n_vars = 0;
  std::vector<int> binary_indices;
  Vector penalty_weight;  // per-variable aggregated scenario weight
  int dropped_vacuous_rows = 0;
  int preexisting_violation_rows = 0;

  // Optional affine state maps, x_k = state_base[j].row(k)' + state_map[j]
  // block(k) * z; filled when OcpSpec::keep_state_maps is set.
  std::vector<Matrix> state_base;  // per scenario, (N+1) x n_x
  std::vector<Matrix> state_map;   // per scenario, (N+1)*n_x x n_vars
  int state_dim = 0;

  double objective(const Vector& z) const {
    return 0.5 * z.dot(h * z) + f.dot(z) + c0;
  }
  /// Retained rows plus the box, to tolerance.
  bool feasible(const Vector& z, double tol) const;

  void dump_json(const std::string& path) const;
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double max() const {
    return std::max(stationarity, std::max(primal, complementarity));
  }
};

enum class SolveStatus { Optimal, LocalStationary, Infeasible, IterationCap };

const char* to_string(SolveStatus s);

struct QpSolution {
  Vector z;
  double objective = 0.0;
  KktResiduals kkt;
  SolveStatus status = SolveStatus::Optimal;
  int iterations = 0;
  int nodes_explored = 0;
  double bound_gap = 0.0;
  double infeasibility = 0.0;  // certificate residual when Infeasible
};

CondensedQp condense(const OcpSpec& spec);

/// Convex QP over the box [0,1]^n (optionally tightened per variable) and
/// the retained inequality rows; primal-dual interior point. Binary
/// restrictions are ignored here.
QpSolution solve_qp(const CondensedQp& qp, const Vector* warm_start = nullptr);
QpSolution solve_qp_bounded(const CondensedQp& qp, const Vector& lb,
                            const Vector& ub, const Vector* warm_start = nullptr);

struct BnbOptions {
  long node_limit = 200000;
  double time_budget_ms = 0.0;  // 0 disables the wall-clock cutoff
};

/// Best-first branch and bound over the binary set; branches on the most
/// fractional variable, deterministic tie-break on the lowest index. The
/// warm start only seeds the root relaxation; the returned optimum does not
/// depend on it.
QpSolution solve_miqp_bnb(const CondensedQp& qp, const BnbOptions& opts = {},
                          const Vector* warm_start = nullptr);

/// Exhaustive check of every binary pattern (<= 20 variables). The defining
/// oracle for solve_miqp_bnb.
QpSolution enumerate_oracle(const CondensedQp& qp);

struct PthSchedule {
  double beta_init = 32.0;
  double beta_inc = 2.0;
  double gamma_init = 32.0;
  double gamma_inc = 2.0;
  double epsilon = 1e-3;
  int i_max = 12;
};

enum class PthStatus {
  Converged,
  FallbackMaxIter,          // i reached i_max while still fractional
  FallbackBarrierUndefined, // z = 0 already violates the edge limit
  FallbackValidation        // rounded solution failed the hard constraint
};

const char* to_string(PthStatus s);

struct PthPassRecord {
  int pass = 0;
  double beta = 0.0;
  double gamma = 0.0;
  int newton_iterations = 0;
  bool integral = false;
};

struct PthResult {
  Vector z;  // binary on success, all zero on fallback
  PthStatus status = PthStatus::Converged;
  std::vector<PthPassRecord> passes;
};

/// The homotopy: repeated box-constrained smooth solves of the base
/// objective plus beta_i * z(1-z) and the -gamma_i * ln(limit - edge) term,
/// warm-started pass to pass, with epsilon rounding on exit and the
/// all-zeros fallback on non-convergence or hard-constraint failure.
PthResult pth_solve(const CondensedQp& qp, const PthSchedule& schedule,
                    const Vector* warm_start = nullptr);
PthResult pth_solve(const OcpSpec& spec, const PthSchedule& schedule,
                    const Vector* warm_start = nullptr);

}  // namespace densctl
