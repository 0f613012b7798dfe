#include "densctl/sysid.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>

#include "densctl/io.hpp"

namespace densctl {

void SnapshotLog::validate() const {
  if (outputs.rows() != static_cast<Eigen::Index>(inputs.size())) {
    throw DataError("SnapshotLog: outputs/inputs length mismatch");
  }
  if (!outputs.allFinite() || (outputs.array() < 0.0).any()) {
    throw DataError("SnapshotLog: outputs must be finite and nonnegative");
  }
  for (int u : inputs) {
    if (u != 0 && u != 1) throw DataError("SnapshotLog: inputs must be binary");
  }
}

void SnapshotLog::to_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "t,u_eff";
  for (Eigen::Index j = 0; j < outputs.cols(); ++j) out << ",y_" << j;
  out << '\n';
  for (Eigen::Index t = 0; t < outputs.rows(); ++t) {
    out << t << ',' << inputs[static_cast<size_t>(t)];
    for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
      out << ',' << format_double(outputs(t, j));
    }
    out << '\n';
  }
}

SnapshotLog SnapshotLog::from_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("SnapshotLog csv: empty file");
  Eigen::Index n_y = -1;  // from header: t,u_eff,y_0..y_{n_y-1}
  {
    std::stringstream hs(line);
    std::string field;
    Eigen::Index n = 0;
    while (std::getline(hs, field, ',')) ++n;
    n_y = n - 2;
  }
  if (n_y < 1) throw DataError("SnapshotLog csv: bad header");
  std::vector<Vector> rows;
  std::vector<int> us;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');  // t, implicit by row index
    std::getline(ls, field, ',');
    us.push_back(std::stoi(field));
    Vector y(n_y);
    for (Eigen::Index j = 0; j < n_y; ++j) {
      std::getline(ls, field, ',');
      y(j) = std::stod(field);
    }
    rows.push_back(std::move(y));
  }
  SnapshotLog log;
  log.outputs.resize(static_cast<Eigen::Index>(rows.size()), n_y);
  for (size_t i = 0; i < rows.size(); ++i) {
    log.outputs.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  log.inputs = std::move(us);
  return log;
}

StateSpaceModel dmdc_fit(const SnapshotLog& log, int n_x) {
  log.validate();
  const Eigen::Index t_len = log.length();
  const Eigen::Index n_y = log.output_dim();
  if (n_x < 1 || n_x > n_y) throw DataError("dmdc_fit: invalid state order");
  if (t_len < n_x + 2) throw DataError("dmdc_fit: log too short");

  // POD basis from the output snapshot matrix (outputs as columns).
  const SvdResult svd = thin_svd(log.outputs.transpose());
  const double rank_tol = static_cast<double>(std::max(t_len, n_y)) *
                          svd.singular_values(0) *
                          std::numeric_limits<double>::epsilon();
  if (svd.singular_values.size() < n_x || svd.singular_values(n_x - 1) <= rank_tol) {
    throw DataError("dmdc_fit: snapshot matrix rank below requested order");
  }
  const Matrix basis = svd.u.leftCols(n_x);  // n_y x n_x

  bool any_input = false;
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    if (log.inputs[static_cast<size_t>(t)] != 0) any_input = true;
  }
  if (!any_input) {
    throw DataError(
        "dmdc_fit: input column is all zero, B0 unidentifiable; excite the "
        "plant with pellet events");
  }

  // Reduced states x(t) = basis^T y(t); regress x(t+1) ~ [A b0][x(t); u(t)].
  const Matrix x_all = log.outputs * basis;  // T x n_x
  const Eigen::Index n_reg = t_len - 1;
  Matrix z(n_reg, n_x + 1);
  Matrix x_next(n_reg, n_x);
  for (Eigen::Index t = 0; t < n_reg; ++t) {
    z.block(t, 0, 1, n_x) = x_all.row(t);
    z(t, n_x) = static_cast<double>(log.inputs[static_cast<size_t>(t)]);
    x_next.row(t) = x_all.row(t + 1);
  }
  // [A b0]^T = z \ x_next
  const Matrix ab_t = pseudoinverse(z) * x_next;  // (n_x+1) x n_x

  StateSpaceModel m;
  m.a = ab_t.topRows(n_x).transpose();
  m.b0 = ab_t.row(n_x).transpose();
  m.c = basis;
  m.c_pinv = pseudoinverse(basis);
  m.fit_residual = (z * ab_t - x_next).norm();
  m.spectral_radius = m.a.eigenvalues().cwiseAbs().maxCoeff();
  if (m.spectral_radius >= 1.0 + 1e-6) {
    std::fprintf(stderr,
                 "dmdc_fit: warning: identified A has spectral radius %.6f\n",
                 m.spectral_radius);
  }
  return m;
}

ParameterCloud extract_parameter_cloud(const SnapshotLog& log,
                                       const StateSpaceModel& model) {
  log.validate();
  std::vector<int> events;
  for (Eigen::Index t = 0; t + 1 < log.length(); ++t) {
    if (log.inputs[static_cast<size_t>(t)] == 1) events.push_back(static_cast<int>(t));
  }
  if (events.empty()) {
    throw DataError("extract_parameter_cloud: log contains no pellet events");
  }
  ParameterCloud cloud;
  cloud.p.resize(static_cast<Eigen::Index>(events.size()), model.state_dim());
  for (size_t i = 0; i < events.size(); ++i) {
    const Eigen::Index t = events[i];
    const Vector x_now = model.project(log.outputs.row(t).transpose());
    const Vector x_next = model.project(log.outputs.row(t + 1).transpose());
    cloud.p.row(static_cast<Eigen::Index>(i)) =
        (x_next - model.a * x_now - model.b0).transpose();
  }
  cloud.source_event_times = std::move(events);
  cloud.pca = pca(cloud.p);  // throws DataError for m < 2
  return cloud;
}

ModelMetrics model_metrics(const StateSpaceModel& model,
                           const SnapshotLog& validation) {
  validation.validate();
  const Eigen::Index t_len = validation.length();
  if (t_len < 2) throw DataError("model_metrics: validation log too short");

  ModelMetrics out;
  double sum_one = 0.0, sum_pellet = 0.0, sum_open = 0.0;
  Eigen::Index n_pellet = 0;
  Vector x_open = model.project(validation.outputs.row(0).transpose());
  const double inv_ny = 1.0 / static_cast<double>(model.output_dim());
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const double u = static_cast<double>(validation.inputs[static_cast<size_t>(t)]);
    const Vector x_now = model.project(validation.outputs.row(t).transpose());
    const Vector y_pred = model.lift(model.a * x_now + model.b0 * u);
    const double err =
        std::sqrt((y_pred - validation.outputs.row(t + 1).transpose())
                      .squaredNorm() * inv_ny);
    sum_one += err;
    if (u > 0.5) {
      sum_pellet += err;
      ++n_pellet;
    }
    x_open = model.a * x_open + model.b0 * u;
    sum_open += std::sqrt(
        (model.lift(x_open) - validation.outputs.row(t + 1).transpose())
            .squaredNorm() * inv_ny);
  }
  const double n_steps = static_cast<double>(t_len - 1);
  out.one_step_rmse = sum_one / n_steps;
  out.open_loop_rmse = sum_open / n_steps;
  out.pellet_step_rmse =
      n_pellet > 0 ? sum_pellet / static_cast<double>(n_pellet)
                   : std::numeric_limits<double>::quiet_NaN();
  return out;
}

void StateSpaceModel::to_json_file(const std::string& path) const {
  Json j;
  j["schema"] = "densctl.model.v1";
  j["a"] = matrix_to_json(a);
  j["b0"] = vector_to_json(b0);
  j["c"] = matrix_to_json(c);
  j["delay_steps"] = delay_steps;
  j["fit_residual"] = fit_residual;
  j["spectral_radius"] = spectral_radius;
  write_json_file(path, j);
}

StateSpaceModel StateSpaceModel::from_json_file(const std::string& path) {
  const Json j = read_json_file(path);
  StateSpaceModel m;
  m.a = matrix_from_json(j.at("a"));
  m.b0 = vector_from_json(j.at("b0"));
  m.c = matrix_from_json(j.at("c"));
  m.c_pinv = pseudoinverse(m.c);
  m.delay_steps = j.at("delay_steps").get<int>();
  m.fit_residual = j.at("fit_residual").get<double>();
  m.spectral_radius = j.at("spectral_radius").get<double>();
  return m;
}

void ParameterCloud::to_json_file(const std::string& path) const {
  Json j;
  j["schema"] = "densctl.cloud.v1";
  j["p"] = matrix_to_json(p);
  j["event_times"] = source_event_times;
  j["pca_components"] = matrix_to_json(pca.components);
  j["pca_singular_values"] = vector_to_json(pca.singular_values);
  j["pca_explained_fractions"] = vector_to_json(pca.explained_variance_fractions);
  j["pca_mean_row"] = vector_to_json(pca.mean_row);
  write_json_file(path, j);
}

ParameterCloud ParameterCloud::from_json_file(const std::string& path) {
  const Json j = read_json_file(path);
  ParameterCloud c;
  c.p = matrix_from_json(j.at("p"));
  c.source_event_times = j.at("event_times").get<std::vector<int>>();
  c.pca = densctl::pca(c.p);
  return c;
}

}  // namespace densctl
