#pragma once

#include <string>
#include <vector>

#include "densctl/numerics.hpp"

namespace densctl {

/// Time series of plant outputs sampled every tau_s step, paired with the
/// entry-aligned binary input u_eff(t): 1 iff a pellet enters the plasma
/// during the step from t to t+1 (actuation delay already resolved).
struct SnapshotLog {
  Matrix outputs;           // T x n_y, one row per step
  std::vector<int> inputs;  // size T, values in {0,1}

  Eigen::Index length() const { return outputs.rows(); }
  Eigen::Index output_dim() const { return outputs.cols(); }

  void validate() const;

  void to_csv(const std::string& path) const;
  static SnapshotLog from_csv(const std::string& path);
};

/// Reduced-order model x(t+1) = A x(t) + B(p) u_eff(t), y = C x, with
/// B(p) = p + b0. C is the orthonormal POD basis used for the reduction,
/// so c_pinv = C^dagger maps measurements back to reduced states.
struct StateSpaceModel {
  Matrix a;       // n_x x n_x
  Vector b0;      // n_x (single input)
  Matrix c;       // n_y x n_x, orthonormal columns
  Matrix c_pinv;  // n_x x n_y
  int delay_steps = 0;
  double fit_residual = 0.0;
  double spectral_radius = 0.0;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index output_dim() const { return c.rows(); }

  Vector project(const Vector& y) const { return c_pinv * y; }
  Vector lift(const Vector& x) const { return c * x; }

  /// One-step output map y(t+1) = lifted_a y(t) + lifted_b u_eff(t).
  Matrix lifted_state_matrix() const { return c * a * c_pinv; }
  Vector lifted_input_vector() const { return c * b0; }

  void to_json_file(const std::string& path) const;
  static StateSpaceModel from_json_file(const std::string& path);
};

/// Residual input-matrix perturbations observed at pellet-entry steps,
/// one row of P per event, with their PCA.
struct ParameterCloud {
  Matrix p;  // m x n_x
  PcaResult pca;
  std::vector<int> source_event_times;

  Eigen::Index size() const { return p.rows(); }

  void to_json_file(const std::string& path) const;
  static ParameterCloud from_json_file(const std::string& path);
};

struct ModelMetrics {
  double one_step_rmse = 0.0;
  double open_loop_rmse = 0.0;
  double pellet_step_rmse = 0.0;  // NaN when the log has no pellet events
};

/// DMDc: POD basis of rank n_x from the output snapshots, joint least
/// squares for [A b0] in reduced coordinates. Throws DataError when the
/// snapshot matrix has rank < n_x or the input column is all zero.
StateSpaceModel dmdc_fit(const SnapshotLog& log, int n_x);

/// For every step with u_eff = 1, the residual
///   p = C^dagger y(t+1) - A C^dagger y(t) - b0
/// is one realization of the input-matrix perturbation. Throws DataError
/// when the log contains no pellet events.
ParameterCloud extract_parameter_cloud(const SnapshotLog& log,
                                       const StateSpaceModel& model);

ModelMetrics model_metrics(const StateSpaceModel& model,
                           const SnapshotLog& validation);

}  // namespace densctl
