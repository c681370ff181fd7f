#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gfdm/geometry.hpp"
#include "gfdm/stabilize.hpp"
#include "gfdm/stencil.hpp"

using namespace gfdm;

namespace {

// 1-d monomial stencil rows for hand-built cases, z already scaled to [-1,1]
RowWeights fake_row(const std::vector<double>& z, const Vector& w, int degree,
                    int base = 0) {
  RowWeights row;
  row.base = base;
  row.w = w;
  row.h_scale = 1.0;
  const int k = static_cast<int>(z.size());
  row.phi.resize(k, degree + 1);
  for (int i = 0; i < k; ++i) {
    double p = 1.0;
    for (int j = 0; j <= degree; ++j) {
      row.phi(i, j) = p;
      p *= z[i];
    }
  }
  row.neighbors.resize(k);
  for (int i = 0; i < k; ++i) row.neighbors[i] = i;
  return row;
}

}  // namespace

TEST_CASE("row with nonnegative off-diagonal weights keeps C = 0") {
  Vector w(6);
  w << -2.2, 0.5, 0.7, 0.3, 0.4, 0.3;
  RowWeights row = fake_row({0.0, 0.4, -0.2, 1.0, -1.0, 0.7}, w, 2);
  StabilizedRow out = stabilize_row(row);
  CHECK(out.feasible);
  CHECK(out.c <= 1e-15);
  CHECK(out.diagonally_dominant);
  CHECK_FALSE(out.fallback_used);
  const double drift = (row.phi.transpose() * (out.w - row.w))
                           .cwiseAbs()
                           .maxCoeff();
  CHECK(drift <= 1e-12 * row.w.cwiseAbs().maxCoeff());
  CHECK(out.w[0] <= 0.0);
}

TEST_CASE("square consistency system pins C at the witness level") {
  // Unscaled nodes (0, 1, 1.5, -2) with cubic reproduction give the unique
  // second-derivative weights (-1/3, -2/3, 16/21, 5/21): the only feasible
  // w_hat is w itself, so the optimal relaxation is |min off-diagonal| = 2/3.
  Vector w(4);
  w << -1.0 / 3.0, -2.0 / 3.0, 16.0 / 21.0, 5.0 / 21.0;
  RowWeights row = fake_row({0.0, 0.5, 0.75, -1.0}, w, 3, 11);
  StabilizedRow out = stabilize_row(row);
  CHECK(out.feasible);
  CHECK(out.c == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  CHECK_FALSE(out.diagonally_dominant);
  for (int i = 0; i < 4; ++i)
    CHECK(out.w[i] == doctest::Approx(w[i]).epsilon(1e-9));
}

TEST_CASE("nonnegative first weight is refused with the point index") {
  Vector w(4);
  w << 0.1, -0.3, 0.1, 0.1;
  RowWeights row = fake_row({0.0, 0.5, -1.0, 0.25}, w, 2, 7);
  CHECK_THROWS_WITH_AS(stabilize_row(row),
                       doctest::Contains("point 7"), Error);
}

TEST_CASE("ellipse quadratic rows all reach diagonal dominance") {
  ManifoldSpec spec;
  spec.family = Family::Ellipse1D;
  PointCloud cloud = sample_manifold(spec, 400, 1);
  NeighborTable knn = build_knn(cloud.ambient, 21);
  Frame frames = analytic_frames(cloud);
  AssembleOptions aopt;
  aopt.degree = 2;
  std::vector<RowWeights> rows;
  SparseOperator raw = assemble_operator(cloud.ambient, knn, frames, aopt, &rows);

  StabilizeReport rep;
  SparseOperator hat = stabilize_operator(rows, {}, &rep);

  CHECK(rep.rows_total == 400);
  CHECK(rep.rows_skipped == 0);  // closed curve: every first weight negative
  CHECK(rep.rows_stabilized == 400);
  CHECK(rep.fallbacks == 0);
  CHECK(rep.c_max <= 1e-6);
  CHECK(rep.rows_over_tol == 0);
  CHECK((hat.cols.array() == raw.cols.array()).all());
  CHECK(hat.const_residual <= 1e-9);

  for (int i = 0; i < 400; ++i) {
    const double scale = raw.vals.row(i).cwiseAbs().maxCoeff();
    const double offsum =
        hat.vals.row(i).tail(20).cwiseAbs().sum();
    CHECK(std::abs(hat.vals(i, 0)) >= offsum - 1e-9 * scale);
    CHECK(std::abs(hat.vals.row(i).sum()) <= 1e-9 * scale);
  }

  // Deterministic pivoting: a second pass reproduces the weights bitwise.
  SparseOperator again = stabilize_operator(rows, {}, nullptr);
  CHECK((again.vals.array() == hat.vals.array()).all());
}

TEST_CASE("ellipse quartic rows need nonzero relaxation somewhere") {
  ManifoldSpec spec;
  spec.family = Family::Ellipse1D;
  PointCloud cloud = sample_manifold(spec, 400, 1);
  NeighborTable knn = build_knn(cloud.ambient, 21);
  Frame frames = analytic_frames(cloud);
  AssembleOptions aopt;
  aopt.degree = 4;
  std::vector<RowWeights> rows;
  assemble_operator(cloud.ambient, knn, frames, aopt, &rows);

  StabilizeReport rep;
  stabilize_operator(rows, {}, &rep);
  CHECK(rep.rows_over_tol >= 1);
  CHECK(rep.c_max > 1e-6);
}

TEST_CASE("relaxation report lands on disk as CSV") {
  StabilizeReport rep;
  rep.c = {0.0, 2.5, std::nan("")};
  rep.fallback = {false, false, true};
  const std::string path = "/tmp/test_stab_report.csv";
  save_stabilize_report(path, rep);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "point,c,feasible,fallback");
  std::getline(in, line);
  CHECK(line == "0,0,1,0");
  std::getline(in, line);
  CHECK(line == "1,2.5,1,0");
  std::getline(in, line);
  CHECK(line == "2,0,0,1");
  std::remove(path.c_str());
}

TEST_CASE("sign repair pulls a one-sided diagonal to zero at the exact cost") {
  // One-sided second-difference weights on nodes (0, 1, 2, 3): w1 = +1. The
  // consistency null space is spanned by the cubic-difference direction
  // (-1, 3, -3, 1), so w_hat(t) = w + t*(-1, 3, -3, 1) needs t >= 1 to reach
  // w_hat_1 <= 0, and the deficit 3t - 1 is smallest there: the optimum is
  // w_hat = (0, 1, -2, 1) with C = 2.
  Vector w(4);
  w << 1.0, -2.0, 1.0, 0.0;
  RowWeights row = fake_row({0.0, 1.0, 2.0, 3.0}, w, 2, 3);

  CHECK_THROWS_WITH_AS(stabilize_row(row), doctest::Contains("point 3"),
                       Error);

  StabilizeOptions opt;
  opt.repair_nonnegative = true;
  StabilizedRow out = stabilize_row(row, opt);
  CHECK(out.feasible);
  CHECK_FALSE(out.fallback_used);
  CHECK_FALSE(out.diagonally_dominant);
  CHECK(out.c == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(out.w[0] == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(out.w[1] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(out.w[2] == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(out.w[3] == doctest::Approx(1.0).epsilon(1e-10));
  const double drift =
      (row.phi.transpose() * (out.w - row.w)).cwiseAbs().maxCoeff();
  CHECK(drift <= 1e-10);
}

TEST_CASE("sign repair reports infeasible when consistency pins the row") {
  // Square system: nodes (0, 1, 2) with quadratic reproduction admit only
  // the second-difference weights themselves, so w_hat_1 <= 0 is
  // unreachable and the raw row must come back marked infeasible.
  Vector w(3);
  w << 1.0, -2.0, 1.0;
  RowWeights row = fake_row({0.0, 1.0, 2.0}, w, 2, 5);
  StabilizeOptions opt;
  opt.repair_nonnegative = true;
  StabilizedRow out = stabilize_row(row, opt);
  CHECK_FALSE(out.feasible);
  CHECK(out.fallback_used);
  CHECK(std::isnan(out.c));
  for (int i = 0; i < 3; ++i) CHECK(out.w[i] == w[i]);
}

TEST_CASE("operator-level repair is opt-in and accounted per row") {
  Vector good(4);
  good << -2.0, 1.0, 0.5, 0.5;
  Vector bad(4);
  bad << 1.0, -2.0, 1.0, 0.0;
  std::vector<RowWeights> rows = {
      fake_row({0.0, 0.5, -0.5, 1.0}, good, 2, 0),
      fake_row({0.0, 1.0, 2.0, 3.0}, bad, 2, 1)};
  rows[1].neighbors = {1, 2, 3, 0};

  StabilizeReport rep;
  SparseOperator kept = stabilize_operator(rows, {}, &rep);
  CHECK(rep.rows_skipped == 1);
  CHECK(rep.rows_stabilized == 1);
  CHECK(kept.vals(1, 0) == 1.0);  // raw flagged row passes through

  StabilizeOptions opt;
  opt.repair_nonnegative = true;
  SparseOperator fixed = stabilize_operator(rows, opt, &rep);
  CHECK(rep.rows_skipped == 0);
  CHECK(rep.rows_stabilized == 2);
  CHECK(rep.fallbacks == 0);
  CHECK(fixed.vals(1, 0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(rep.c[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(rep.rows_over_tol == 1);  // the repaired row's deficit is honest
}
