#include "densctl/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "densctl/io.hpp"

namespace densctl {

namespace {

int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

int ScenarioTree::realization_index(int scenario, int control_step) const {
  const int ell = std::min(control_step, robust_horizon - 1);
  return (scenario / ipow(n_p, robust_horizon - 1 - ell)) % n_p;
}

int ScenarioTree::variable_index(int scenario, int control_step) const {
  if (control_step < robust_horizon) {
    // One variable per tree node: node = branch prefix of length ell.
    int offset = 0;
    for (int i = 0; i < control_step; ++i) offset += ipow(n_p, i);
    return offset + scenario / ipow(n_p, robust_horizon - control_step);
  }
  int offset = 0;
  for (int i = 0; i < robust_horizon; ++i) offset += ipow(n_p, i);
  return offset + (control_step - robust_horizon) * scenario_count + scenario;
}

int ScenarioTree::variable_count() const {
  int n = 0;
  for (int i = 0; i < robust_horizon; ++i) n += ipow(n_p, i);
  return n + (n_controls - robust_horizon) * scenario_count;
}

ScenarioTree build_tree(int n_p, int robust_horizon, int n_controls) {
  if (n_p < 1) throw std::invalid_argument("build_tree: n_p must be >= 1");
  if (robust_horizon < 1 || robust_horizon > n_controls) {
    throw std::invalid_argument("build_tree: need 1 <= N_R <= N_c");
  }
  ScenarioTree t;
  t.n_p = n_p;
  t.robust_horizon = robust_horizon;
  t.n_controls = n_controls;
  t.scenario_count = ipow(n_p, robust_horizon);
  if (t.scenario_count > 1) {
    for (int ell = 0; ell < robust_horizon; ++ell) {
      std::vector<EqualityPair> eq;
      const int nodes = ipow(n_p, ell);
      const int span = t.scenario_count / nodes;  // scenarios per node
      int row = 0;
      for (int node = 0; node < nodes; ++node) {
        for (int j = node * span; j + 1 < (node + 1) * span; ++j) {
          eq.push_back(EqualityPair{row++, j, j + 1});
        }
      }
      t.nonanticipativity.push_back(std::move(eq));
    }
  }
  return t;
}

ScenarioSet select_scenarios_pca(const ParameterCloud& cloud, int n_p,
                                 bool append_centroid) {
  if (n_p < 2 || n_p % 2 != 0) {
    throw std::invalid_argument("select_scenarios_pca: n_p must be even, >= 2");
  }
  if (cloud.size() < n_p) {
    throw DataError("select_scenarios_pca: cloud smaller than n_p");
  }
  const PcaResult& p = cloud.pca;
  if (n_p / 2 > p.components.cols()) {
    throw std::invalid_argument(
        "select_scenarios_pca: n_p/2 exceeds component count");
  }
  if (p.singular_values(0) <= 1e-13 * std::max(1.0, cloud.p.norm())) {
    throw DataError("select_scenarios_pca: cloud has zero variance");
  }

  const Eigen::Index m = cloud.size();
  Matrix centered = cloud.p;
  centered.rowwise() -= p.mean_row.transpose();
  const Matrix scores = centered * p.components;  // m x n_components

  std::vector<int> chosen;
  std::vector<bool> taken(static_cast<size_t>(m), false);
  auto pick = [&](int comp, bool positive) {
    int best = -1;
    double best_score = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (taken[static_cast<size_t>(i)]) continue;
      const double s = positive ? scores(i, comp) : -scores(i, comp);
      if (best < 0 || s > best_score) {
        best = static_cast<int>(i);
        best_score = s;
      }
    }
    taken[static_cast<size_t>(best)] = true;
    chosen.push_back(best);
  };
  for (int comp = 0; comp < n_p / 2; ++comp) {
    pick(comp, true);
    pick(comp, false);
  }

  ScenarioSet set;
  const int total = n_p + (append_centroid ? 1 : 0);
  set.realizations.resize(total, cloud.p.cols());
  for (int i = 0; i < n_p; ++i) {
    set.realizations.row(i) = cloud.p.row(chosen[static_cast<size_t>(i)]);
    set.provenance.push_back(chosen[static_cast<size_t>(i)]);
  }
  if (append_centroid) {
    set.realizations.row(n_p) = p.mean_row.transpose();
    set.provenance.push_back(-1);
  }
  set.weights = Vector::Constant(total, 1.0 / static_cast<double>(total));
  return set;
}

void ScenarioSet::to_json_file(const std::string& path) const {
  Json j;
  j["schema"] = "densctl.scenarios.v1";
  j["realizations"] = matrix_to_json(realizations);
  j["weights"] = vector_to_json(weights);
  j["provenance"] = provenance;
  write_json_file(path, j);
}

ScenarioSet ScenarioSet::from_json_file(const std::string& path) {
  const Json j = read_json_file(path);
  ScenarioSet s;
  s.realizations = matrix_from_json(j.at("realizations"));
  s.weights = vector_from_json(j.at("weights"));
  s.provenance = j.at("provenance").get<std::vector<int>>();
  return s;
}

}  // namespace densctl
