#include "densctl/control.hpp"

#include <chrono>

namespace densctl {

const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::Mi: return "mi";
    case ControllerKind::MsMi: return "ms-mi";
    case ControllerKind::MsPth: return "ms-pth";
  }
  return "?";
}

void ControllerConfig::validate(int n_y) const {
  if (n_controls * control_interval != horizon) {
    throw std::invalid_argument("ControllerConfig: N_c * tau_c must equal N");
  }
  if (edge_index < 0 || edge_index >= n_y || core_points < 1 ||
      core_points > n_y) {
    throw std::invalid_argument("ControllerConfig: bad output indices");
  }
  if (edge_limit <= 0.0 || r_weight <= 0.0 || delay < 0) {
    throw std::invalid_argument("ControllerConfig: bad weights or delay");
  }
}

MpcController::MpcController(ControllerConfig cfg, StateSpaceModel model,
                             ScenarioSet scenarios, ReferenceSchedule reference,
                             Vector rest_reference)
    : cfg_(cfg),
      model_(std::move(model)),
      scenarios_(std::move(scenarios)),
      reference_(std::move(reference)),
      rest_reference_(std::move(rest_reference)) {
  cfg_.validate(static_cast<int>(model_.output_dim()));
  if (rest_reference_.size() != model_.output_dim()) {
    throw std::invalid_argument("MpcController: rest_reference size mismatch");
  }
  if (cfg_.kind == ControllerKind::Mi) {
    tree_ = build_tree(1, 1, cfg_.n_controls);
  } else {
    tree_ = build_tree(static_cast<int>(scenarios_.size()), cfg_.robust_horizon,
                       cfg_.n_controls);
  }
}

OcpSpec MpcController::build_ocp(int t, const Vector& y,
                                 const std::vector<PendingEntry>& pending) const {
  OcpSpec spec;
  spec.a = model_.a;
  spec.b0 = model_.b0;
  spec.c = model_.c;
  spec.tree = tree_;
  if (cfg_.kind == ControllerKind::Mi) {
    spec.scenario_perturbations = Matrix::Zero(1, model_.state_dim());
    spec.scenario_weights = Vector::Ones(1);
  } else {
    spec.scenario_perturbations = scenarios_.realizations;
    spec.scenario_weights = scenarios_.weights;
  }
  spec.horizon = cfg_.horizon;
  spec.control_interval = cfg_.control_interval;
  spec.delay = cfg_.delay;
  for (const PendingEntry& p : pending) {
    spec.pending_entry_offsets.push_back(p.entry_offset);
  }
  spec.x0 = model_.project(y);

  const Eigen::Index n_y = model_.output_dim();
  spec.reference.resize(cfg_.horizon + 1, n_y);
  for (int k = 0; k <= cfg_.horizon; ++k) {
    const double core = reference_(t + k);
    for (Eigen::Index i = 0; i < n_y; ++i) {
      spec.reference(k, i) =
          i < cfg_.core_points ? core : rest_reference_(i);
    }
  }
  spec.q_diag = Vector::Constant(n_y, cfg_.q_rest);
  spec.q_diag.head(cfg_.core_points).setConstant(cfg_.q_core);
  spec.r_weight = cfg_.r_weight;
  spec.edge_index = cfg_.edge_index;
  spec.edge_limit = cfg_.edge_limit;
  spec.keep_state_maps = cfg_.store_predictions;
  return spec;
}

Vector MpcController::shift_warm_start(const Vector& z) const {
  Vector shifted = Vector::Zero(z.size());
  for (int j = 0; j < tree_.scenario_count; ++j) {
    for (int ell = 0; ell + 1 < tree_.n_controls; ++ell) {
      shifted(tree_.variable_index(j, ell)) = z(tree_.variable_index(j, ell + 1));
    }
  }
  return shifted;
}

ControlDecision MpcController::decide_full(int t, const Vector& y,
                                           const std::vector<PendingEntry>& pending) {
  const auto t0 = std::chrono::steady_clock::now();
  const OcpSpec spec = build_ocp(t, y, pending);
  CondensedQp qp = condense(spec);
  const Vector* warm =
      cfg_.use_warm_start && warm_start_.has_value() ? &*warm_start_ : nullptr;

  ControlDecision dec;
  if (cfg_.kind == ControllerKind::MsPth) {
    const PthResult r = pth_solve(qp, cfg_.pth, warm);
    dec.planned_inputs = r.z;
    dec.status = to_string(r.status);
    dec.u0 = r.status == PthStatus::Converged
                 ? static_cast<int>(std::lround(r.z(tree_.variable_index(0, 0))))
                 : 0;
    dec.objective = qp.objective(r.z);
  } else {
    const QpSolution sol = solve_miqp_bnb(qp, cfg_.bnb, warm);
    dec.status = to_string(sol.status);
    if (sol.status == SolveStatus::Optimal) {
      dec.planned_inputs = sol.z;
      dec.u0 = static_cast<int>(std::lround(sol.z(tree_.variable_index(0, 0))));
      dec.objective = sol.objective;
    } else {
      // Never fire on a failed or infeasible solve.
      dec.planned_inputs = Vector::Zero(qp.n_vars);
      dec.u0 = 0;
      dec.objective = qp.objective(dec.planned_inputs);
    }
  }
  warm_start_ = shift_warm_start(dec.planned_inputs);

  if (cfg_.store_predictions) {
    for (int j = 0; j < tree_.scenario_count; ++j) {
      const Eigen::Index n_x = model_.state_dim();
      Matrix y_pred(spec.horizon + 1, model_.output_dim());
      for (int k = 0; k <= spec.horizon; ++k) {
        const Vector xk =
            qp.state_base[static_cast<size_t>(j)].row(k).transpose() +
            qp.state_map[static_cast<size_t>(j)]
                    .middleRows(static_cast<Eigen::Index>(k) * n_x, n_x) *
                dec.planned_inputs;
        y_pred.row(k) = model_.lift(xk).transpose();
      }
      dec.predicted_outputs.push_back(std::move(y_pred));
    }
    dec.qp = std::move(qp);
  }
  dec.solve_time_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  return dec;
}

StepDecision MpcController::decide(int t, const Vector& y,
                                   const std::vector<PendingEntry>& pending) {
  const ControlDecision d = decide_full(t, y, pending);
  StepDecision s;
  s.u0 = d.u0;
  s.solve_time_ms = d.solve_time_ms;
  s.status = d.status;
  return s;
}

}  // namespace densctl
