#pragma once

#include <string>
#include <vector>

#include "densctl/numerics.hpp"
#include "densctl/sysid.hpp"

namespace densctl {

/// Scenario realizations selected from the parameter cloud. Rows of
/// `realizations` are rows of P (selection, never synthesis).
struct ScenarioSet {
  Matrix realizations;          // n_p x n_x
  Vector weights;               // sums to 1
  std::vector<int> provenance;  // row indices into P

  Eigen::Index size() const { return realizations.rows(); }

  void to_json_file(const std::string& path) const;
  static ScenarioSet from_json_file(const std::string& path);
};

/// One non-anticipativity equality u[plus_scenario] - u[minus_scenario] = 0
/// at a given control step.
struct EqualityPair {
  int row;
  int plus_scenario;
  int minus_scenario;
};

/// Scenario tree with robust horizon: branches at control steps
/// ell < robust_horizon, parameter frozen afterwards. Scenario j's branch
/// at step ell is the ell-th most-significant digit of j base n_p.
struct ScenarioTree {
  int n_p = 1;
  int robust_horizon = 1;
  int n_controls = 1;
  int scenario_count = 1;  // n_p^robust_horizon
  // One equality system per control step ell < robust_horizon.
  std::vector<std::vector<EqualityPair>> nonanticipativity;

  /// Realization index scenario j uses at control step ell.
  int realization_index(int scenario, int control_step) const;

  /// Scenarios sharing a tree node at control step ell map to one decision
  /// variable; this gives the deduplicated variable index of (j, ell).
  int variable_index(int scenario, int control_step) const;
  int variable_count() const;
};

/// PCA-based selection: for each of the first n_p/2 principal components,
/// the rows of P with the most positive and most negative centered
/// projection. Duplicates fall through to the next-farthest row; ties break
/// on the smallest row index. Throws DataError on a zero-variance cloud.
ScenarioSet select_scenarios_pca(const ParameterCloud& cloud, int n_p,
                                 bool append_centroid = false);

ScenarioTree build_tree(int n_p, int robust_horizon, int n_controls);

}  // namespace densctl
