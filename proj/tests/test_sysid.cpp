#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "densctl/numerics.hpp"
#include "densctl/sysid.hpp"

using densctl::Matrix;
using densctl::SnapshotLog;
using densctl::StateSpaceModel;
using densctl::Vector;

namespace {

// Simulate y(t+1) = A y(t) + B u(t) with full-dimensional outputs.
SnapshotLog simulate_linear(const Matrix& a, const Vector& b, const Vector& y0,
                            const std::vector<int>& u) {
  SnapshotLog log;
  const Eigen::Index n = y0.size();
  const Eigen::Index t_len = static_cast<Eigen::Index>(u.size());
  log.outputs.resize(t_len, n);
  log.inputs = u;
  Vector y = y0;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    log.outputs.row(t) = y.transpose();
    y = a * y + b * static_cast<double>(u[static_cast<size_t>(t)]);
  }
  return log;
}

std::vector<int> random_binary(int t_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  std::vector<int> u(static_cast<size_t>(t_len));
  for (auto& v : u) v = coin(rng) ? 1 : 0;
  return u;
}

Matrix reference_a() {
  Matrix a(2, 2);
  a << 0.9, 0.1, 0.0, 0.8;
  return a;
}

Vector reference_b() {
  Vector b(2);
  b << 0.5, 1.0;
  return b;
}

// Exactly known model with an orthonormal basis, for cloud/metrics tests
// that must not depend on fitting error.
StateSpaceModel known_model(const Matrix& a, const Vector& b0,
                            const Matrix& basis) {
  StateSpaceModel m;
  m.a = a;
  m.b0 = b0;
  m.c = basis;
  m.c_pinv = densctl::pseudoinverse(basis);
  return m;
}

// Log in output space produced by the reduced model with a per-event
// perturbation sequence (cycled over the events).
SnapshotLog simulate_reduced(const StateSpaceModel& m, const Vector& x0,
                             const std::vector<int>& u,
                             const std::vector<Vector>& perturbations) {
  SnapshotLog log;
  const Eigen::Index t_len = static_cast<Eigen::Index>(u.size());
  log.outputs.resize(t_len, m.output_dim());
  log.inputs = u;
  Vector x = x0;
  size_t event = 0;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    log.outputs.row(t) = m.lift(x).transpose();
    Vector b = m.b0;
    if (u[static_cast<size_t>(t)] == 1 && !perturbations.empty()) {
      b += perturbations[event % perturbations.size()];
      ++event;
    }
    x = m.a * x + b * static_cast<double>(u[static_cast<size_t>(t)]);
  }
  return log;
}

}  // namespace

TEST_CASE("dmdc recovers an exact 2-state linear system to 1e-8") {
  Vector y0(2);
  y0 << 1.0, 0.5;
  const SnapshotLog log =
      simulate_linear(reference_a(), reference_b(), y0, random_binary(50, 42));
  const StateSpaceModel m = densctl::dmdc_fit(log, 2);

  // n_y = n_x, so the lifted one-step maps must equal the true system.
  CHECK((m.lifted_state_matrix() - reference_a()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((m.lifted_input_vector() - reference_b()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(m.fit_residual < 1e-8);
  CHECK(m.spectral_radius == doctest::Approx(0.9).epsilon(1e-6));
  // Basis orthonormality: C^dagger C = I.
  CHECK((m.c_pinv * m.c - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dmdc rejects an all-zero input column") {
  Vector y0(2);
  y0 << 1.0, 0.3;
  const SnapshotLog log = simulate_linear(reference_a(), reference_b(), y0,
                                          std::vector<int>(50, 0));
  CHECK_THROWS_AS(densctl::dmdc_fit(log, 2), densctl::DataError);
}

TEST_CASE("dmdc rank-1 system lifted to 10 outputs") {
  // Scalar dynamics s(t+1) = 0.7 s + 0.2 u, observed through a fixed
  // direction v: the one-step predictions must be exact at order 1.
  Vector v(10);
  for (int i = 0; i < 10; ++i) v(i) = std::cos(0.3 * i) + 1.5;
  v.normalize();
  SnapshotLog log;
  const std::vector<int> u = random_binary(60, 7);
  log.inputs = u;
  log.outputs.resize(60, 10);
  double s = 2.0;
  for (int t = 0; t < 60; ++t) {
    log.outputs.row(t) = (s * v).transpose();
    s = 0.7 * s + 0.2 * static_cast<double>(u[static_cast<size_t>(t)]);
  }
  const StateSpaceModel m = densctl::dmdc_fit(log, 1);
  CHECK(m.state_dim() == 1);
  for (int t = 0; t + 1 < 60; ++t) {
    const Vector y_pred =
        m.lift(m.a * m.project(log.outputs.row(t).transpose()) +
               m.b0 * static_cast<double>(u[static_cast<size_t>(t)]));
    CHECK((y_pred - log.outputs.row(t + 1).transpose()).cwiseAbs().maxCoeff() <
          1e-8);
  }

  // Requesting order 2 from rank-1 data must fail, not silently pad.
  CHECK_THROWS_AS(densctl::dmdc_fit(log, 2), densctl::DataError);
}

TEST_CASE("dmdc input validation") {
  SnapshotLog log;
  log.outputs = Matrix::Ones(3, 2);
  log.inputs = {1, 0, 1};
  CHECK_THROWS_AS(densctl::dmdc_fit(log, 0), densctl::DataError);
  CHECK_THROWS_AS(densctl::dmdc_fit(log, 3), densctl::DataError);
  CHECK_THROWS_AS(densctl::dmdc_fit(log, 2), densctl::DataError);  // too short
}

TEST_CASE("parameter cloud is zero when the log matches the nominal model") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector x0(2);
  x0 << 1.2, 0.4;
  const SnapshotLog log = simulate_reduced(m, x0, random_binary(80, 3), {});
  const auto cloud = densctl::extract_parameter_cloud(log, m);
  CHECK(cloud.size() >= 2);
  CHECK(cloud.p.cwiseAbs().maxCoeff() < 1e-8);
  // Event times are exactly the steps with u = 1.
  for (int t : cloud.source_event_times) {
    CHECK(log.inputs[static_cast<size_t>(t)] == 1);
  }
}

TEST_CASE("parameter cloud recovers two alternating known perturbations") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector p_a(2), p_b(2);
  p_a << 0.03, -0.02;
  p_b << -0.05, 0.04;
  Vector x0(2);
  x0 << 0.8, 0.1;
  const SnapshotLog log =
      simulate_reduced(m, x0, random_binary(80, 9), {p_a, p_b});
  const auto cloud = densctl::extract_parameter_cloud(log, m);
  REQUIRE(cloud.size() >= 4);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Vector expected = (i % 2 == 0) ? p_a : p_b;
    CHECK((cloud.p.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("parameter cloud re-simulation reproduces the post-pellet outputs") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector p_a(2), p_b(2);
  p_a << 0.02, 0.01;
  p_b << -0.01, 0.05;
  Vector x0(2);
  x0 << 1.0, 0.5;
  const SnapshotLog log =
      simulate_reduced(m, x0, random_binary(100, 21), {p_a, p_b});
  const auto cloud = densctl::extract_parameter_cloud(log, m);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const int t = cloud.source_event_times[static_cast<size_t>(i)];
    const Vector x_now = m.project(log.outputs.row(t).transpose());
    const Vector y_next =
        m.lift(m.a * x_now + m.b0 + cloud.p.row(i).transpose());
    CHECK((y_next - log.outputs.row(t + 1).transpose()).cwiseAbs().maxCoeff() <
          1e-8);
  }
}

TEST_CASE("parameter cloud error paths") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector x0(2);
  x0 << 1.0, 0.0;

  // No events at all.
  const SnapshotLog quiet =
      simulate_reduced(m, x0, std::vector<int>(20, 0), {});
  CHECK_THROWS_AS(densctl::extract_parameter_cloud(quiet, m),
                  densctl::DataError);

  // A single event cannot support a PCA of the cloud.
  std::vector<int> one(20, 0);
  one[5] = 1;
  const SnapshotLog single = simulate_reduced(m, x0, one, {});
  CHECK_THROWS_AS(densctl::extract_parameter_cloud(single, m),
                  densctl::DataError);
}

TEST_CASE("model metrics are near zero on self-consistent data") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector x0(2);
  x0 << 0.9, 0.2;
  const SnapshotLog log = simulate_reduced(m, x0, random_binary(60, 13), {});
  const auto metrics = densctl::model_metrics(m, log);
  CHECK(metrics.one_step_rmse < 1e-10);
  CHECK(metrics.open_loop_rmse < 1e-10);
  CHECK(metrics.pellet_step_rmse < 1e-10);
}

TEST_CASE("pellet-step rmse isolates the perturbation error") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector p(2);
  p << 0.1, -0.08;
  Vector x0(2);
  x0 << 1.1, 0.3;
  const SnapshotLog log = simulate_reduced(m, x0, random_binary(80, 31), {p});
  const auto metrics = densctl::model_metrics(m, log);
  // Only pellet steps carry error, so the pellet average must exceed the
  // all-steps average.
  CHECK(metrics.pellet_step_rmse > metrics.one_step_rmse);
  CHECK(metrics.one_step_rmse > 0.0);
}

TEST_CASE("pellet-step rmse is NaN when the log has no pellet events") {
  const StateSpaceModel m =
      known_model(reference_a(), reference_b(), Matrix::Identity(2, 2));
  Vector x0(2);
  x0 << 1.0, 0.4;
  const SnapshotLog log =
      simulate_reduced(m, x0, std::vector<int>(30, 0), {});
  const auto metrics = densctl::model_metrics(m, log);
  CHECK(std::isnan(metrics.pellet_step_rmse));
  CHECK(metrics.one_step_rmse < 1e-10);
}

TEST_CASE("snapshot log validation") {
  SnapshotLog log;
  log.outputs = Matrix::Ones(3, 2);
  log.inputs = {0, 1};
  CHECK_THROWS_AS(log.validate(), densctl::DataError);  // length mismatch

  log.inputs = {0, 1, 2};
  CHECK_THROWS_AS(log.validate(), densctl::DataError);  // non-binary input

  log.inputs = {0, 1, 0};
  log.outputs(1, 0) = -0.1;
  CHECK_THROWS_AS(log.validate(), densctl::DataError);  // negative density

  log.outputs(1, 0) = 0.1;
  CHECK_NOTHROW(log.validate());
}

TEST_CASE("snapshot log csv round trip") {
  Vector y0(3);
  y0 << 1.0, 0.25, 1.0 / 3.0;
  Matrix a = Matrix::Identity(3, 3) * 0.95;
  Vector b(3);
  b << 0.1, 0.2, 0.3;
  const SnapshotLog log = simulate_linear(a, b, y0, random_binary(40, 55));

  const std::string path = "sysid_roundtrip.csv";
  log.to_csv(path);
  const SnapshotLog back = SnapshotLog::from_csv(path);
  std::remove(path.c_str());

  REQUIRE(back.length() == log.length());
  REQUIRE(back.output_dim() == log.output_dim());
  CHECK(back.inputs == log.inputs);
  // %.17g serialization is value-exact for doubles.
  CHECK((back.outputs - log.outputs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model and cloud json round trips") {
  Vector y0(2);
  y0 << 1.0, 0.5;
  const SnapshotLog log =
      simulate_linear(reference_a(), reference_b(), y0, random_binary(50, 42));
  const StateSpaceModel m = densctl::dmdc_fit(log, 2);
  const auto cloud = densctl::extract_parameter_cloud(log, m);

  const std::string mpath = "model_roundtrip.json";
  const std::string cpath = "cloud_roundtrip.json";
  m.to_json_file(mpath);
  cloud.to_json_file(cpath);
  const StateSpaceModel m2 = StateSpaceModel::from_json_file(mpath);
  const auto cloud2 = densctl::ParameterCloud::from_json_file(cpath);
  std::remove(mpath.c_str());
  std::remove(cpath.c_str());

  CHECK((m2.a - m.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m2.b0 - m.b0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m2.c - m.c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m2.c_pinv - m.c_pinv).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cloud2.p - cloud.p).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cloud2.source_event_times == cloud.source_event_times);
  CHECK((cloud2.pca.singular_values - cloud.pca.singular_values)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}
