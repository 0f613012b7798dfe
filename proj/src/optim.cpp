#include "densctl/optim.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

#include "densctl/io.hpp"

namespace densctl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::LocalStationary: return "local-stationary";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationCap: return "iteration-cap";
  }
  return "?";
}

const char* to_string(PthStatus s) {
  switch (s) {
    case PthStatus::Converged: return "converged";
    case PthStatus::FallbackMaxIter: return "fallback-max-iter";
    case PthStatus::FallbackBarrierUndefined: return "fallback-barrier-undefined";
    case PthStatus::FallbackValidation: return "fallback-validation";
  }
  return "?";
}

void OcpSpec::validate() const {
  const Eigen::Index n_x = a.rows();
  if (a.cols() != n_x || b0.size() != n_x || c.cols() != n_x) {
    throw std::invalid_argument("OcpSpec: inconsistent model dimensions");
  }
  if (scenario_perturbations.rows() != tree.scenario_count ||
      scenario_perturbations.cols() != n_x) {
    throw std::invalid_argument("OcpSpec: scenario set does not match tree");
  }
  if (scenario_weights.size() != tree.scenario_count ||
      (scenario_weights.array() <= 0.0).any()) {
    throw std::invalid_argument("OcpSpec: weights must be positive per scenario");
  }
  if (horizon < 1 || control_interval < 1 ||
      (tree.n_controls - 1) * control_interval > horizon) {
    throw std::invalid_argument("OcpSpec: control instants exceed horizon");
  }
  if (r_weight <= 0.0) throw std::invalid_argument("OcpSpec: R must be > 0");
  if ((q_diag.array() < 0.0).any() || q_diag.size() != c.rows()) {
    throw std::invalid_argument("OcpSpec: bad Q diagonal");
  }
  if (reference.rows() != horizon + 1 || reference.cols() != c.rows()) {
    throw std::invalid_argument("OcpSpec: reference must be (N+1) x n_y");
  }
  for (int e : pending_entry_offsets) {
    if (e < 0) throw std::invalid_argument("OcpSpec: negative pending offset");
  }
}

CondensedQp condense(const OcpSpec& spec) {
  spec.validate();
  const Eigen::Index n_x = spec.a.rows();
  const int n_steps = spec.horizon;
  const int s_count = spec.scenario_count();
  const int n_vars = spec.tree.variable_count();

  CondensedQp qp;
  qp.n_vars = n_vars;
  qp.h = Matrix::Zero(n_vars, n_vars);
  qp.f = Vector::Zero(n_vars);
  qp.penalty_weight = Vector::Zero(n_vars);
  for (int v = 0; v < n_vars; ++v) qp.binary_indices.push_back(v);
  qp.state_dim = static_cast<int>(n_x);

  // Input-cost and penalty weights aggregate over the (j, ell) pairs that
  // map to each deduplicated variable.
  for (int j = 0; j < s_count; ++j) {
    for (int ell = 0; ell < spec.tree.n_controls; ++ell) {
      qp.penalty_weight(spec.tree.variable_index(j, ell)) += spec.scenario_weights(j);
    }
  }
  qp.h.diagonal() += 2.0 * spec.r_weight * qp.penalty_weight;

  // Reference terms shared across scenarios.
  const Matrix qx = spec.c.transpose() * spec.q_diag.asDiagonal() * spec.c;
  Matrix qref(n_steps + 1, n_x);
  Vector cref(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) {
    const Vector yr = spec.reference.row(k).transpose();
    qref.row(k) = (spec.c.transpose() * (spec.q_diag.asDiagonal() * yr)).transpose();
    cref(k) = yr.dot(spec.q_diag.asDiagonal() * yr);
  }
  const Eigen::RowVectorXd c_edge = spec.c.row(spec.edge_index);

  std::vector<Eigen::RowVectorXd> g_rows;
  std::vector<double> g_rhs, g_w;

  for (int j = 0; j < s_count; ++j) {
    const double w = spec.scenario_weights(j);
    const Vector b_j = spec.b0 + spec.scenario_perturbations.row(j).transpose();

    // Decision variables and pending pellets indexed by the step whose
    // state update they enter: u fired at step e adds B_j into x_{e+1}.
    std::vector<std::vector<int>> entry_vars(static_cast<size_t>(n_steps));
    std::vector<int> entry_pending(static_cast<size_t>(n_steps), 0);
    for (int ell = 0; ell < spec.tree.n_controls; ++ell) {
      const int e = ell * spec.control_interval + spec.delay;
      if (e < n_steps) {
        entry_vars[static_cast<size_t>(e)].push_back(spec.tree.variable_index(j, ell));
      }
    }
    for (int e : spec.pending_entry_offsets) {
      if (e < n_steps) entry_pending[static_cast<size_t>(e)] += 1;
    }

    Vector base = spec.x0;
    Matrix map = Matrix::Zero(n_x, n_vars);
    Matrix* keep_base = nullptr;
    Matrix* keep_map = nullptr;
    if (spec.keep_state_maps) {
      qp.state_base.emplace_back(n_steps + 1, n_x);
      qp.state_map.emplace_back(Matrix::Zero((n_steps + 1) * n_x, n_vars));
      keep_base = &qp.state_base.back();
      keep_map = &qp.state_map.back();
    }

    for (int k = 0;; ++k) {
      if (keep_base) {
        keep_base->row(k) = base.transpose();
        keep_map->middleRows(static_cast<Eigen::Index>(k) * n_x, n_x) = map;
      }
      // Tracking cost at step k.
      const Matrix qxm = qx * map;
      qp.h.noalias() += 2.0 * w * (map.transpose() * qxm);
      qp.f.noalias() += 2.0 * w * (map.transpose() * (qx * base - qref.row(k).transpose()));
      qp.c0 += w * (base.dot(qx * base) - 2.0 * qref.row(k).dot(base) + cref(k));

      // Edge-density constraint row at step k.
      Eigen::RowVectorXd row = c_edge * map;
      const double rhs = spec.edge_limit - c_edge.dot(base);
      if (row.cwiseAbs().maxCoeff() < 1e-13 && rhs >= -1e-9) {
        // No decision influence and satisfied regardless: drop.
        ++qp.dropped_vacuous_rows;
      } else {
        // A violated zero row is kept: it makes the instance infeasible for
        // every z, which is exactly what an unavoidable predicted violation
        // means for the solver and the u = 0 fallback upstream.
        if (row.cwiseAbs().maxCoeff() < 1e-13) ++qp.preexisting_violation_rows;
        g_rows.push_back(std::move(row));
        g_rhs.push_back(rhs);
        // Barrier weight: horizon-averaged per scenario, so the log terms
        // rank rows by margin instead of outweighing tracking by row count.
        g_w.push_back(w / static_cast<double>(spec.horizon));
      }

      if (k == n_steps) break;
      base = spec.a * base;
      map = spec.a * map;
      for (int v : entry_vars[static_cast<size_t>(k)]) map.col(v) += b_j;
      if (entry_pending[static_cast<size_t>(k)] > 0) {
        base += entry_pending[static_cast<size_t>(k)] * b_j;
      }
    }
  }

  qp.g.resize(static_cast<Eigen::Index>(g_rows.size()), n_vars);
  qp.g_rhs.resize(static_cast<Eigen::Index>(g_rows.size()));
  qp.g_weight.resize(static_cast<Eigen::Index>(g_rows.size()));
  for (size_t r = 0; r < g_rows.size(); ++r) {
    qp.g.row(static_cast<Eigen::Index>(r)) = g_rows[r];
    qp.g_rhs(static_cast<Eigen::Index>(r)) = g_rhs[r];
    qp.g_weight(static_cast<Eigen::Index>(r)) = g_w[r];
  }
  // A row that cannot bind anywhere on the box is dropped from the solver
  // path (max over z in [0,1]^n of g.z is the sum of positive entries).
  for (Eigen::Index r = 0; r < qp.g.rows(); ++r) {
    const double worst = qp.g.row(r).cwiseMax(0.0).sum();
    if (worst > qp.g_rhs(r) - 1e-12) qp.active_rows.push_back(static_cast<int>(r));
  }
  // Symmetrize against accumulation round-off.
  qp.h = 0.5 * (qp.h + qp.h.transpose()).eval();
  return qp;
}

bool CondensedQp::feasible(const Vector& z, double tol) const {
  if ((z.array() < -tol).any() || (z.array() > 1.0 + tol).any()) return false;
  if (g.rows() == 0) return true;
  return ((g * z - g_rhs).array() <= tol).all();
}

void CondensedQp::dump_json(const std::string& path) const {
  Json j;
  j["schema"] = "densctl.qp.v1";
  j["h"] = matrix_to_json(h);
  j["f"] = vector_to_json(f);
  j["c0"] = c0;
  j["g"] = matrix_to_json(g);
  j["g_rhs"] = vector_to_json(g_rhs);
  j["a_eq"] = Json::array();  // non-anticipativity eliminated by dedup
  j["b_eq"] = Json::array();
  j["lb"] = vector_to_json(Vector::Zero(n_vars));
  j["ub"] = vector_to_json(Vector::Ones(n_vars));
  j["binary_indices"] = binary_indices;
  j["dropped_vacuous_rows"] = dropped_vacuous_rows;
  j["preexisting_violation_rows"] = preexisting_violation_rows;
  write_json_file(path, j);
}

namespace {

// ---------------------------------------------------------------------------
// Reduction of variables fixed by branch-and-bound (lb == ub).

struct ReducedQp {
  Matrix h;
  Vector f;
  double c0 = 0.0;
  Matrix a;   // inequality rows over free variables
  Vector b;
  Vector lb, ub;
  std::vector<int> free_index;  // reduced -> original
};

ReducedQp reduce(const CondensedQp& qp, const Vector& lb, const Vector& ub,
                 Vector& fixed_values) {
  ReducedQp r;
  fixed_values = Vector::Zero(qp.n_vars);
  std::vector<int> fixed;
  for (int i = 0; i < qp.n_vars; ++i) {
    if (ub(i) - lb(i) < 1e-12) {
      fixed.push_back(i);
      fixed_values(i) = lb(i);
    } else {
      r.free_index.push_back(i);
    }
  }
  const int nf = static_cast<int>(r.free_index.size());
  r.h.resize(nf, nf);
  r.f.resize(nf);
  r.lb.resize(nf);
  r.ub.resize(nf);
  const Vector hx = qp.h * fixed_values;
  for (int i = 0; i < nf; ++i) {
    const int oi = r.free_index[static_cast<size_t>(i)];
    r.f(i) = qp.f(oi) + hx(oi);
    r.lb(i) = lb(oi);
    r.ub(i) = ub(oi);
    for (int j = 0; j < nf; ++j) r.h(i, j) = qp.h(oi, r.free_index[static_cast<size_t>(j)]);
  }
  r.c0 = qp.c0 + qp.f.dot(fixed_values) + 0.5 * fixed_values.dot(hx);
  const int m = static_cast<int>(qp.active_rows.size());
  r.a.resize(m, nf);
  r.b.resize(m);
  for (int k = 0; k < m; ++k) {
    const int row = qp.active_rows[static_cast<size_t>(k)];
    r.b(k) = qp.g_rhs(row) - qp.g.row(row).dot(fixed_values);
    for (int i = 0; i < nf; ++i) r.a(k, i) = qp.g(row, r.free_index[static_cast<size_t>(i)]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Feasibility phase: min 1/2 ||(Az - b)_+||^2 over the box, projected Newton.

double hinge_feasibility(const ReducedQp& r, Vector& z) {
  const int n = static_cast<int>(r.free_index.size());
  const int m = static_cast<int>(r.b.size());
  if (m == 0) return 0.0;
  z = z.cwiseMax(r.lb).cwiseMin(r.ub);
  auto value = [&](const Vector& x) {
    return 0.5 * (r.a * x - r.b).cwiseMax(0.0).squaredNorm();
  };
  auto search = [&](const Vector& d, double& fz) {
    double alpha = 1.0;
    while (alpha > 1e-14) {
      const Vector zn = (z + alpha * d).cwiseMax(r.lb).cwiseMin(r.ub);
      const double fn = value(zn);
      if (fn < fz - 1e-18) {
        z = zn;
        fz = fn;
        return true;
      }
      alpha *= 0.5;
    }
    return false;
  };
  double fz = value(z);
  for (int it = 0; it < 300 && fz > 1e-18; ++it) {
    const Vector viol = (r.a * z - r.b).cwiseMax(0.0);
    const Vector grad = r.a.transpose() * viol;
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      const bool clamped = (z(i) <= r.lb(i) + 1e-12 && grad(i) > 0.0) ||
                           (z(i) >= r.ub(i) - 1e-12 && grad(i) < 0.0);
      if (!clamped) free_idx.push_back(i);
    }
    double pg_max = 0.0;
    for (int i : free_idx) pg_max = std::max(pg_max, std::abs(grad(i)));
    if (pg_max < 1e-12 || free_idx.empty()) break;

    // Gauss-Newton on the free coordinates only; clamped ones would bend
    // the projected direction away from descent.
    const int nf = static_cast<int>(free_idx.size());
    Matrix hf = Matrix::Zero(nf, nf);
    Vector gf(nf);
    for (int i = 0; i < nf; ++i) gf(i) = grad(free_idx[static_cast<size_t>(i)]);
    for (int k = 0; k < m; ++k) {
      if (viol(k) <= 0.0) continue;
      Vector ak(nf);
      for (int i = 0; i < nf; ++i) ak(i) = r.a(k, free_idx[static_cast<size_t>(i)]);
      hf.noalias() += ak * ak.transpose();
    }
    hf.diagonal().array() += 1e-10 + 1e-10 * hf.diagonal().maxCoeff();
    const Vector df = -hf.ldlt().solve(gf);
    Vector d = Vector::Zero(n);
    for (int i = 0; i < nf; ++i) d(free_idx[static_cast<size_t>(i)]) = df(i);
    if (search(d, fz)) continue;
    // Fall back to projected steepest descent before giving up.
    if (!search(-grad / std::max(grad.cwiseAbs().maxCoeff(), 1e-300), fz)) break;
  }
  return fz;
}

// ---------------------------------------------------------------------------
// Primal-dual interior point over  min 1/2 z'Hz + f'z  s.t.  Az <= b,
// lb <= z <= ub  (box folded into the row stack).

QpSolution ipm_solve(const ReducedQp& r, const Vector* warm) {
  const int n = static_cast<int>(r.free_index.size());
  const int mg = static_cast<int>(r.b.size());
  const int m = mg + 2 * n;
  Matrix a(m, n);
  Vector b(m);
  a.topRows(mg) = r.a;
  b.head(mg) = r.b;
  a.middleRows(mg, n) = Matrix::Identity(n, n);
  b.segment(mg, n) = r.ub;
  a.bottomRows(n) = -Matrix::Identity(n, n);
  b.tail(n) = -r.lb;

  Vector z;
  if (warm != nullptr) {
    const Vector margin = 0.25 * (r.ub - r.lb).cwiseMin(4e-3);
    z = warm->cwiseMax(r.lb + margin).cwiseMin(r.ub - margin);
  } else {
    z = 0.5 * (r.lb + r.ub);
  }
  Vector s = (b - a * z).cwiseMax(1.0);
  Vector lam = Vector::Ones(m);

  QpSolution sol;
  const double scale_d = 1.0 + r.f.cwiseAbs().maxCoeff();
  const double scale_p = 1.0 + b.cwiseAbs().maxCoeff();
  const int max_iter = 100;
  for (int it = 0; it < max_iter; ++it) {
    const Vector rd = r.h * z + r.f + a.transpose() * lam;
    const Vector rp = a * z + s - b;
    const double mu = s.dot(lam) / m;
    sol.kkt.stationarity = rd.cwiseAbs().maxCoeff() / scale_d;
    sol.kkt.primal = rp.cwiseAbs().maxCoeff() / scale_p;
    sol.kkt.complementarity = mu;
    sol.iterations = it;
    if (sol.kkt.stationarity < 1e-9 && sol.kkt.primal < 1e-9 && mu < 1e-10) break;

    const Vector w = lam.cwiseQuotient(s);
    Matrix kkt = r.h;
    kkt.noalias() += a.transpose() * w.asDiagonal() * a;
    Eigen::LDLT<Matrix> fact(kkt);

    // Newton direction for a given complementarity target rc:
    //   (H + A'WA) dz = -rd + A'((rc - lam.*rp) ./ s)
    auto direction = [&](const Vector& rc, Vector& dz, Vector& ds, Vector& dlam) {
      const Vector rhs =
          -rd + a.transpose() * ((rc - lam.cwiseProduct(rp)).cwiseQuotient(s));
      dz = fact.solve(rhs);
      ds = -rp - a * dz;
      dlam = -(rc + lam.cwiseProduct(ds)).cwiseQuotient(s);
    };

    // Affine (predictor) direction.
    Vector rc = s.cwiseProduct(lam);
    Vector dz, ds, dlam;
    direction(rc, dz, ds, dlam);

    auto max_step = [&](const Vector& v, const Vector& dv) {
      double amax = 1.0;
      for (int i = 0; i < m; ++i) {
        if (dv(i) < 0.0) amax = std::min(amax, -v(i) / dv(i));
      }
      return amax;
    };
    const double ap_aff = max_step(s, ds);
    const double ad_aff = max_step(lam, dlam);
    const double mu_aff =
        (s + ap_aff * ds).dot(lam + ad_aff * dlam) / m;
    const double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);

    // Corrector.
    rc = s.cwiseProduct(lam) + ds.cwiseProduct(dlam) -
         Vector::Constant(m, sigma * mu);
    direction(rc, dz, ds, dlam);

    const double ap = std::min(1.0, 0.995 * max_step(s, ds));
    const double ad = std::min(1.0, 0.995 * max_step(lam, dlam));
    z += ap * dz;
    s += ap * ds;
    lam += ad * dlam;
  }

  sol.z = z;
  sol.objective = 0.5 * z.dot(r.h * z) + r.f.dot(z) + r.c0;
  sol.status = sol.kkt.max() <= 1e-6 ? SolveStatus::Optimal
                                     : SolveStatus::IterationCap;
  return sol;
}

QpSolution expand_solution(const CondensedQp& qp, const ReducedQp& r,
                           QpSolution sol, const Vector& fixed_values) {
  Vector full = fixed_values;
  for (size_t i = 0; i < r.free_index.size(); ++i) {
    full(r.free_index[i]) = sol.z(static_cast<Eigen::Index>(i));
  }
  sol.z = full;
  sol.objective = qp.objective(full);
  return sol;
}

}  // namespace

QpSolution solve_qp_bounded(const CondensedQp& qp, const Vector& lb,
                            const Vector& ub, const Vector* warm_start) {
  Vector fixed_values;
  const ReducedQp r = reduce(qp, lb, ub, fixed_values);
  const int nf = static_cast<int>(r.free_index.size());

  if (nf == 0) {
    QpSolution sol;
    sol.z = fixed_values;
    sol.objective = qp.objective(fixed_values);
    const double infeas =
        r.b.size() > 0 ? (-r.b).cwiseMax(0.0).maxCoeff() : 0.0;
    if (infeas > 1e-9) {
      sol.status = SolveStatus::Infeasible;
      sol.infeasibility = infeas;
    }
    return sol;
  }

  // Phase 1: certify feasibility of the rows over the box.
  Vector zf;
  if (warm_start != nullptr) {
    zf.resize(nf);
    for (int i = 0; i < nf; ++i) zf(i) = (*warm_start)(r.free_index[static_cast<size_t>(i)]);
  } else {
    zf = 0.5 * (r.lb + r.ub);
  }
  Vector zfeas = zf;
  const double infeas_sq = hinge_feasibility(r, zfeas);
  const double infeas = std::sqrt(2.0 * infeas_sq);
  if (infeas > 1e-8 * (1.0 + (r.b.size() ? r.b.cwiseAbs().maxCoeff() : 1.0))) {
    QpSolution sol;
    sol.z = Vector::Zero(qp.n_vars);
    sol.status = SolveStatus::Infeasible;
    sol.infeasibility = infeas;
    return sol;
  }

  QpSolution sol = ipm_solve(r, warm_start != nullptr ? &zf : nullptr);
  return expand_solution(qp, r, std::move(sol), fixed_values);
}

QpSolution solve_qp(const CondensedQp& qp, const Vector* warm_start) {
  return solve_qp_bounded(qp, Vector::Zero(qp.n_vars), Vector::Ones(qp.n_vars),
                          warm_start);
}

QpSolution solve_miqp_bnb(const CondensedQp& qp, const BnbOptions& opts,
                          const Vector* warm_start) {
  struct Node {
    double bound;
    long seq;
    std::vector<int8_t> fixed;
    Vector zrel;
    bool operator>(const Node& o) const {
      if (bound != o.bound) return bound > o.bound;
      return seq > o.seq;
    }
  };
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  const int n = qp.n_vars;
  long nodes = 0;
  auto relax = [&](const std::vector<int8_t>& fixed,
                   const Vector* warm) -> QpSolution {
    Vector lb = Vector::Zero(n), ub = Vector::Ones(n);
    for (int i = 0; i < n; ++i) {
      if (fixed[static_cast<size_t>(i)] == 0) ub(i) = 0.0;
      if (fixed[static_cast<size_t>(i)] == 1) lb(i) = 1.0;
    }
    ++nodes;
    return solve_qp_bounded(qp, lb, ub, warm);
  };

  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> open;
  long seq = 0;
  double incumbent = kInf;
  Vector z_best;
  bool have_incumbent = false;
  bool limit_hit = false;

  std::vector<int8_t> root_fixed(static_cast<size_t>(n), -1);
  const QpSolution root = relax(root_fixed, warm_start);
  if (root.status == SolveStatus::Infeasible) {
    QpSolution sol = root;
    sol.nodes_explored = static_cast<int>(nodes);
    return sol;
  }
  open.push(Node{root.objective, seq++, root_fixed, root.z});

  double best_open_bound = root.objective;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    best_open_bound = node.bound;
    if (have_incumbent && node.bound >= incumbent - 1e-9) break;

    // Most fractional free variable, lowest index on ties.
    int branch_var = -1;
    double frac = 0.0;
    for (int i = 0; i < n; ++i) {
      if (node.fixed[static_cast<size_t>(i)] != -1) continue;
      const double d = std::min(node.zrel(i), 1.0 - node.zrel(i));
      if (d > frac + 1e-12) {
        frac = d;
        branch_var = i;
      }
    }
    if (branch_var < 0 || frac <= 1e-6) {
      // Integral relaxation: exact binary point.
      Vector zi = node.zrel.unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
      if (qp.feasible(zi, 1e-7)) {
        const double obj = qp.objective(zi);
        if (obj < incumbent) {
          incumbent = obj;
          z_best = zi;
          have_incumbent = true;
        }
        continue;
      }
      // Rounding broke a tight row; branch instead of discarding the node.
      if (branch_var < 0) continue;
    }
    if (nodes >= opts.node_limit ||
        (opts.time_budget_ms > 0.0 && elapsed_ms() > opts.time_budget_ms)) {
      limit_hit = true;
      break;
    }
    for (int val = 0; val <= 1; ++val) {
      std::vector<int8_t> fixed = node.fixed;
      fixed[static_cast<size_t>(branch_var)] = static_cast<int8_t>(val);
      const QpSolution child = relax(fixed, &node.zrel);
      if (child.status == SolveStatus::Infeasible) continue;
      if (have_incumbent && child.objective >= incumbent - 1e-9) continue;
      open.push(Node{child.objective, seq++, std::move(fixed), child.z});
    }
  }

  QpSolution sol;
  sol.nodes_explored = static_cast<int>(nodes);
  if (!have_incumbent) {
    if (limit_hit) {
      sol.status = SolveStatus::IterationCap;
      sol.z = Vector::Zero(n);
      sol.bound_gap = kInf;
    } else {
      sol.status = SolveStatus::Infeasible;
      sol.z = Vector::Zero(n);
    }
    return sol;
  }
  sol.z = z_best;
  sol.objective = incumbent;
  if (limit_hit && !open.empty()) {
    sol.status = SolveStatus::IterationCap;
    sol.bound_gap = incumbent - std::min(best_open_bound, incumbent);
  } else {
    sol.status = SolveStatus::Optimal;
  }
  return sol;
}

QpSolution enumerate_oracle(const CondensedQp& qp) {
  const int n = qp.n_vars;
  if (n > 20) throw std::invalid_argument("enumerate_oracle: > 20 binaries");
  const Eigen::Index m = qp.g.rows();

  Vector z = Vector::Zero(n);
  Vector hz = Vector::Zero(n);
  Vector rows = Vector::Zero(m);
  double obj = qp.c0;

  double best = kInf;
  Vector z_best;
  auto consider = [&] {
    if (m > 0 && ((rows - qp.g_rhs).array() > 1e-9).any()) return;
    if (obj < best) {
      best = obj;
      z_best = z;
    }
  };
  consider();
  const std::uint64_t total = 1ull << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int bit = static_cast<int>(__builtin_ctzll(k));  // Gray-code flip
    const double delta = z(bit) > 0.5 ? -1.0 : 1.0;
    obj += delta * (hz(bit) + qp.f(bit)) + 0.5 * qp.h(bit, bit);
    z(bit) += delta;
    hz += delta * qp.h.col(bit);
    if (m > 0) rows += delta * qp.g.col(bit);
    consider();
  }

  QpSolution sol;
  if (!std::isfinite(best)) {
    sol.status = SolveStatus::Infeasible;
    sol.z = Vector::Zero(n);
    return sol;
  }
  sol.z = z_best;
  sol.objective = qp.objective(z_best);  // recompute, drops accumulation error
  sol.status = SolveStatus::Optimal;
  return sol;
}

namespace {

// One homotopy pass: projected Newton on the box for the base objective
// plus the concave integrality penalty and the weighted log barrier.
Vector pth_pass(const CondensedQp& qp, double beta, double gamma,
                Vector z, int& newton_iters) {
  const int n = qp.n_vars;
  const Eigen::Index m = qp.g.rows();
  z = z.cwiseMax(0.0).cwiseMin(1.0);
  if (gamma > 0.0 && m > 0) {
    // Warm start must be strictly inside the barrier domain; z = 0 is
    // (checked by the caller), so shrink toward it.
    while (((qp.g_rhs - qp.g * z).array() <= 0.0).any()) z *= 0.5;
  }

  auto value = [&](const Vector& x) -> double {
    double v = qp.objective(x) +
               beta * qp.penalty_weight.dot(
                          (x.array() * (1.0 - x.array())).matrix());
    if (gamma > 0.0 && m > 0) {
      const Vector slack = qp.g_rhs - qp.g * x;
      if ((slack.array() <= 0.0).any()) return kInf;
      v -= gamma * qp.g_weight.dot(slack.array().log().matrix());
    }
    return v;
  };

  const double tol = 1e-6 * (1.0 + qp.f.cwiseAbs().maxCoeff());
  double fz = value(z);
  newton_iters = 0;
  for (int it = 0; it < 200; ++it) {
    Vector grad = qp.h * z + qp.f +
                  beta * qp.penalty_weight.cwiseProduct(
                             (Vector::Ones(n) - 2.0 * z));
    Matrix hess = qp.h;
    hess.diagonal() -= 2.0 * beta * qp.penalty_weight;
    if (gamma > 0.0 && m > 0) {
      const Vector slack = qp.g_rhs - qp.g * z;
      const Vector w1 = gamma * qp.g_weight.cwiseQuotient(slack);
      grad.noalias() += qp.g.transpose() * w1;
      const Vector w2 = w1.cwiseQuotient(slack);
      hess.noalias() += qp.g.transpose() * w2.asDiagonal() * qp.g;
    }

    Vector pg = grad;
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = z(i) <= 1e-10 && grad(i) > 0.0;
      const bool at_hi = z(i) >= 1.0 - 1e-10 && grad(i) < 0.0;
      if (at_lo || at_hi) {
        pg(i) = 0.0;
      } else {
        free_idx.push_back(i);
      }
    }
    if (pg.cwiseAbs().maxCoeff() <= tol || free_idx.empty()) break;
    ++newton_iters;

    const int nf = static_cast<int>(free_idx.size());
    Matrix hf(nf, nf);
    Vector gf(nf);
    for (int i = 0; i < nf; ++i) {
      gf(i) = grad(free_idx[static_cast<size_t>(i)]);
      for (int j = 0; j < nf; ++j) {
        hf(i, j) = hess(free_idx[static_cast<size_t>(i)],
                        free_idx[static_cast<size_t>(j)]);
      }
    }
    // Modified Newton: clamp the spectrum so the direction is descent even
    // when the integrality penalty makes the Hessian indefinite.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hf);
    const double lam_max = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double floor = std::max(1e-8 * std::max(lam_max, 1.0), 1e-10);
    const Vector inv_eig =
        eig.eigenvalues().cwiseMax(floor).cwiseInverse();
    const Vector df =
        -(eig.eigenvectors() * inv_eig.asDiagonal() *
          eig.eigenvectors().transpose() * gf);

    Vector d = Vector::Zero(n);
    for (int i = 0; i < nf; ++i) d(free_idx[static_cast<size_t>(i)]) = df(i);

    double alpha = 1.0;
    bool moved = false;
    while (alpha > 1e-14) {
      const Vector zn = (z + alpha * d).cwiseMax(0.0).cwiseMin(1.0);
      const double fn = value(zn);
      if (std::isfinite(fn) && fn <= fz + 1e-4 * std::min(0.0, grad.dot(zn - z))) {
        z = zn;
        fz = fn;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }
  return z;
}

}  // namespace

PthResult pth_solve(const CondensedQp& qp, const PthSchedule& schedule,
                    const Vector* warm_start) {
  PthResult result;
  const int n = qp.n_vars;

  // Barrier domain must contain z = 0, and a violation in the
  // decision-independent window cannot be fixed by any input.
  const bool zero_ok =
      qp.preexisting_violation_rows == 0 &&
      (qp.g.rows() == 0 || (qp.g_rhs.array() > 1e-12).all());
  if (!zero_ok) {
    result.z = Vector::Zero(n);
    result.status = PthStatus::FallbackBarrierUndefined;
    return result;
  }

  Vector z = warm_start != nullptr
                 ? warm_start->cwiseMax(0.0).cwiseMin(1.0)
                 : Vector(Vector::Zero(n));
  auto fractional = [&](const Vector& x) {
    return (x.array().min(1.0 - x.array()) > schedule.epsilon).any();
  };

  int i = 0;
  double beta = 0.0, gamma = 0.0;
  bool frac = true;
  do {
    PthPassRecord rec;
    rec.pass = i;
    rec.beta = beta;
    rec.gamma = gamma;
    z = pth_pass(qp, beta, gamma, z, rec.newton_iterations);
    ++i;
    beta = schedule.beta_init * std::pow(schedule.beta_inc, i - 1);
    gamma = schedule.gamma_init * std::pow(schedule.gamma_inc, i - 1);
    frac = fractional(z);
    rec.integral = !frac;
    result.passes.push_back(rec);
  } while (frac && i < schedule.i_max);

  if (frac) {
    result.z = Vector::Zero(n);
    result.status = PthStatus::FallbackMaxIter;
    return result;
  }
  Vector rounded = z.unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
  if (!qp.feasible(rounded, 1e-9)) {
    result.z = Vector::Zero(n);
    result.status = PthStatus::FallbackValidation;
    return result;
  }
  result.z = rounded;
  result.status = PthStatus::Converged;
  return result;
}

PthResult pth_solve(const OcpSpec& spec, const PthSchedule& schedule,
                    const Vector* warm_start) {
  return pth_solve(condense(spec), schedule, warm_start);
}

}  // namespace densctl
