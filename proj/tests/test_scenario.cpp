#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <vector>

#include "densctl/scenario.hpp"

using densctl::EqualityPair;
using densctl::Matrix;
using densctl::ParameterCloud;
using densctl::ScenarioSet;
using densctl::ScenarioTree;
using densctl::Vector;

namespace {

ParameterCloud make_cloud(const Matrix& p) {
  ParameterCloud c;
  c.p = p;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    c.source_event_times.push_back(static_cast<int>(i));
  }
  c.pca = densctl::pca(p);
  return c;
}

// Dense equality matrix for one level: rows of u[plus] - u[minus] = 0.
Matrix equality_matrix(const std::vector<EqualityPair>& eq, int s) {
  Matrix e = Matrix::Zero(static_cast<Eigen::Index>(eq.size()), s);
  for (const auto& pair : eq) {
    e(pair.row, pair.plus_scenario) = 1.0;
    e(pair.row, pair.minus_scenario) = -1.0;
  }
  return e;
}

// MSB-first digit ell of j in base n_p with robust_horizon digits.
int digit(int j, int ell, int n_p, int n_r) {
  int d = j;
  for (int i = 0; i < n_r - 1 - ell; ++i) d /= n_p;
  return d % n_p;
}

std::vector<Vector> sorted_rows(const Matrix& m) {
  std::vector<Vector> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(m.row(i));
  std::sort(rows.begin(), rows.end(), [](const Vector& a, const Vector& b) {
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      if (a(k) != b(k)) return a(k) < b(k);
    }
    return false;
  });
  return rows;
}

}  // namespace

TEST_CASE("tree (n_p=2, N_R=2): second-level equalities pair siblings") {
  const ScenarioTree t = densctl::build_tree(2, 2, 3);
  CHECK(t.scenario_count == 4);
  REQUIRE(t.nonanticipativity.size() == 2);

  // Level 1: scenarios sharing the first branch digit must agree, giving
  // exactly [1 -1 0 0; 0 0 1 -1] up to row order.
  const Matrix e1 = equality_matrix(t.nonanticipativity[1], 4);
  REQUIRE(e1.rows() == 2);
  Matrix expected(2, 4);
  expected << 1, -1, 0, 0, 0, 0, 1, -1;
  const auto got = sorted_rows(e1);
  const auto want = sorted_rows(expected);
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK((got[i] - want[i]).cwiseAbs().maxCoeff() == 0.0);
  }

  // Level 0: all four scenarios collapse to one decision (3 independent rows).
  const Matrix e0 = equality_matrix(t.nonanticipativity[0], 4);
  CHECK(e0.rows() == 3);
  Eigen::FullPivLU<Matrix> lu(e0);
  CHECK(lu.rank() == 3);
}

TEST_CASE("tree sizes: scenario count is n_p^N_R, equalities S - n_p^ell") {
  for (int n_p = 1; n_p <= 4; ++n_p) {
    for (int n_r = 1; n_r <= 3; ++n_r) {
      const ScenarioTree t = densctl::build_tree(n_p, n_r, n_r + 2);
      int s = 1;
      for (int i = 0; i < n_r; ++i) s *= n_p;
      CHECK(t.scenario_count == s);
      if (s == 1) {
        CHECK(t.nonanticipativity.empty());
        continue;
      }
      REQUIRE(static_cast<int>(t.nonanticipativity.size()) == n_r);
      int nodes = 1;
      for (int ell = 0; ell < n_r; ++ell) {
        CHECK(static_cast<int>(t.nonanticipativity[static_cast<size_t>(ell)]
                                   .size()) == s - nodes);
        nodes *= n_p;
      }
    }
  }
}

TEST_CASE("tree (n_p=4, N_R=1): one level chaining all four scenarios") {
  const ScenarioTree t = densctl::build_tree(4, 1, 5);
  CHECK(t.scenario_count == 4);
  REQUIRE(t.nonanticipativity.size() == 1);
  const auto& eq = t.nonanticipativity[0];
  REQUIRE(eq.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(eq[static_cast<size_t>(i)].plus_scenario == i);
    CHECK(eq[static_cast<size_t>(i)].minus_scenario == i + 1);
  }
  CHECK(t.variable_count() == 17);  // 1 shared root + 4 scenarios x 4 steps
}

TEST_CASE("degenerate tree n_p=1 is a single open-loop sequence") {
  const ScenarioTree t = densctl::build_tree(1, 1, 5);
  CHECK(t.scenario_count == 1);
  CHECK(t.nonanticipativity.empty());
  CHECK(t.variable_count() == 5);
  for (int ell = 0; ell < 5; ++ell) {
    CHECK(t.variable_index(0, ell) == ell);
    CHECK(t.realization_index(0, ell) == 0);
  }
}

TEST_CASE("realization indices are MSB-first digits, frozen after N_R") {
  const ScenarioTree t = densctl::build_tree(2, 2, 4);
  // Scenario 2 is binary 10.
  CHECK(t.realization_index(2, 0) == 1);
  CHECK(t.realization_index(2, 1) == 0);
  CHECK(t.realization_index(2, 2) == 0);  // frozen at the last branch digit
  CHECK(t.realization_index(2, 3) == 0);
  CHECK(t.realization_index(3, 3) == 1);
}

TEST_CASE("variable sharing matches shared branch prefixes (brute force)") {
  for (int n_p : {2, 3, 4}) {
    for (int n_r = 1; n_r <= (n_p == 2 ? 3 : 2); ++n_r) {
      const int n_c = n_r + 2;
      const ScenarioTree t = densctl::build_tree(n_p, n_r, n_c);
      const int s = t.scenario_count;
      REQUIRE(s <= 16);

      std::set<int> seen;
      for (int j = 0; j < s; ++j) {
        for (int ell = 0; ell < n_c; ++ell) {
          const int v = t.variable_index(j, ell);
          CHECK(v >= 0);
          CHECK(v < t.variable_count());
          seen.insert(v);
          for (int k = 0; k < s; ++k) {
            bool same_prefix = true;
            for (int d = 0; d < std::min(ell, n_r); ++d) {
              if (digit(j, d, n_p, n_r) != digit(k, d, n_p, n_r)) {
                same_prefix = false;
                break;
              }
            }
            const bool shared = ell < n_r ? same_prefix : (j == k);
            CHECK((t.variable_index(k, ell) == v) == shared);
          }
        }
      }
      // Every deduplicated variable index is used exactly once.
      CHECK(static_cast<int>(seen.size()) == t.variable_count());
    }
  }
}

TEST_CASE("equality pairs connect exactly the same-node scenarios") {
  const ScenarioTree t = densctl::build_tree(3, 2, 3);
  const int s = t.scenario_count;
  for (int ell = 0; ell < t.robust_horizon; ++ell) {
    // Union-find over the level's pairs.
    std::vector<int> root(static_cast<size_t>(s));
    for (int j = 0; j < s; ++j) root[static_cast<size_t>(j)] = j;
    std::function<int(int)> find = [&](int x) {
      return root[static_cast<size_t>(x)] == x
                 ? x
                 : root[static_cast<size_t>(x)] =
                       find(root[static_cast<size_t>(x)]);
    };
    for (const auto& pair : t.nonanticipativity[static_cast<size_t>(ell)]) {
      root[static_cast<size_t>(find(pair.plus_scenario))] =
          find(pair.minus_scenario);
    }
    for (int j = 0; j < s; ++j) {
      for (int k = 0; k < s; ++k) {
        bool same_prefix = true;
        for (int d = 0; d < ell; ++d) {
          if (digit(j, d, 3, 2) != digit(k, d, 3, 2)) same_prefix = false;
        }
        CHECK((find(j) == find(k)) == same_prefix);
      }
    }
  }
}

TEST_CASE("build_tree argument validation") {
  CHECK_THROWS_AS(densctl::build_tree(0, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(densctl::build_tree(2, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(densctl::build_tree(2, 3, 2), std::invalid_argument);
}

TEST_CASE("pca selection picks the axis extremes") {
  Matrix p(6, 2);
  p << 3, 0, -3, 0, 0, 2, 0, -2, 0.1, 0.1, -0.1, -0.1;
  const ScenarioSet s = densctl::select_scenarios_pca(make_cloud(p), 4);
  REQUIRE(s.size() == 4);
  CHECK((s.weights - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
  // PC1 is the x axis, PC2 the y axis; the four extremes are rows 0-3.
  const std::set<int> got(s.provenance.begin(), s.provenance.end());
  CHECK(got == std::set<int>({0, 1, 2, 3}));
  // Realizations are rows of P verbatim, never synthesized points.
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK((s.realizations.row(i) - p.row(s.provenance[static_cast<size_t>(i)]))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("pca selection on a rank-1 cloud returns the two endpoints") {
  Matrix p(5, 2);
  for (int i = 0; i < 5; ++i) {
    const double t = static_cast<double>(i - 2);
    p(i, 0) = t;
    p(i, 1) = 2.0 * t;
  }
  const ScenarioSet s = densctl::select_scenarios_pca(make_cloud(p), 2);
  const std::set<int> got(s.provenance.begin(), s.provenance.end());
  CHECK(got == std::set<int>({0, 4}));
}

TEST_CASE("pca selection matches a brute-force projection scan") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix p(40, 4);
  for (Eigen::Index i = 0; i < 40; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) p(i, j) = gauss(rng);
  }
  const ParameterCloud cloud = make_cloud(p);
  const int n_p = 4;
  const ScenarioSet s = densctl::select_scenarios_pca(cloud, n_p);

  // Oracle: greedy scan of centered projections, skipping taken rows,
  // ties to the smallest row index.
  Matrix centered = p;
  centered.rowwise() -= cloud.pca.mean_row.transpose();
  const Matrix scores = centered * cloud.pca.components;
  std::vector<bool> taken(40, false);
  std::vector<int> expected;
  for (int comp = 0; comp < n_p / 2; ++comp) {
    for (int sign = 0; sign < 2; ++sign) {
      int best = -1;
      for (int i = 0; i < 40; ++i) {
        if (taken[static_cast<size_t>(i)]) continue;
        const double v = sign == 0 ? scores(i, comp) : -scores(i, comp);
        if (best < 0 || v > (sign == 0 ? scores(best, comp)
                                       : -scores(best, comp))) {
          best = i;
        }
      }
      taken[static_cast<size_t>(best)] = true;
      expected.push_back(best);
    }
  }
  CHECK(s.provenance == expected);
}

TEST_CASE("pca selection tie-break and duplicate fall-through") {
  // Rows 1 and 3 are identical positive extremes along PC1.
  Matrix p(5, 2);
  p << -5, 0, 5, 0, 1, 0, 5, 0, -1, 0;
  const ScenarioSet s = densctl::select_scenarios_pca(make_cloud(p), 2);
  // Positive pick ties between rows 1 and 3: smallest index wins.
  CHECK(s.provenance[0] == 1);
  CHECK(s.provenance[1] == 0);

  // With n_p = 4 the duplicate extreme row 3 is still available and the
  // second component's picks fall through to the remaining rows.
  const ScenarioSet s4 = densctl::select_scenarios_pca(make_cloud(p), 4);
  const std::set<int> got(s4.provenance.begin(), s4.provenance.end());
  CHECK(got.size() == 4);
  CHECK(got.count(1) == 1);
  CHECK(got.count(0) == 1);
}

TEST_CASE("pca selection is invariant to row permutation up to indexing") {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix p(25, 3);
  for (Eigen::Index i = 0; i < 25; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) p(i, j) = gauss(rng);
  }
  std::vector<int> order(25);
  for (int i = 0; i < 25; ++i) order[static_cast<size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Matrix shuffled(25, 3);
  for (int i = 0; i < 25; ++i) {
    shuffled.row(i) = p.row(order[static_cast<size_t>(i)]);
  }
  const ScenarioSet a = densctl::select_scenarios_pca(make_cloud(p), 4);
  const ScenarioSet b = densctl::select_scenarios_pca(make_cloud(shuffled), 4);
  const auto ra = sorted_rows(a.realizations);
  const auto rb = sorted_rows(b.realizations);
  for (size_t i = 0; i < ra.size(); ++i) {
    CHECK((ra[i] - rb[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pca selection error paths") {
  // Zero variance: every event identical.
  Matrix flat(6, 2);
  flat.setConstant(0.7);
  CHECK_THROWS_AS(densctl::select_scenarios_pca(make_cloud(flat), 2),
                  densctl::DataError);

  Matrix small(3, 2);
  small << 1, 0, 0, 1, -1, 0;
  CHECK_THROWS_AS(densctl::select_scenarios_pca(make_cloud(small), 4),
                  densctl::DataError);
  CHECK_THROWS_AS(densctl::select_scenarios_pca(make_cloud(small), 3),
                  std::invalid_argument);
  // n_p/2 components cannot exceed the cloud dimension.
  Matrix wide(8, 2);
  for (Eigen::Index i = 0; i < 8; ++i) {
    wide(i, 0) = static_cast<double>(i);
    wide(i, 1) = static_cast<double>(i % 3);
  }
  CHECK_THROWS_AS(densctl::select_scenarios_pca(make_cloud(wide), 6),
                  std::invalid_argument);
}

TEST_CASE("centroid append adds the mean row with uniform weights") {
  Matrix p(6, 2);
  p << 3, 1, -3, 1, 0, 3, 0, -1, 0.1, 1.1, -0.1, 0.9;
  const ParameterCloud cloud = make_cloud(p);
  const ScenarioSet s = densctl::select_scenarios_pca(cloud, 4, true);
  REQUIRE(s.size() == 5);
  CHECK((s.realizations.row(4).transpose() - cloud.pca.mean_row)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK(s.provenance[4] == -1);
  CHECK((s.weights - Vector::Constant(5, 0.2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("scenario set json round trip") {
  Matrix p(6, 2);
  p << 3, 0, -3, 0, 0, 2, 0, -2, 0.1, 0.1, -0.1, -0.1;
  const ScenarioSet s = densctl::select_scenarios_pca(make_cloud(p), 4);
  const std::string path = "scenarios_roundtrip.json";
  s.to_json_file(path);
  const ScenarioSet back = ScenarioSet::from_json_file(path);
  std::remove(path.c_str());
  CHECK((back.realizations - s.realizations).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.weights - s.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.provenance == s.provenance);
}
