#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gfdm/geometry.hpp"
#include "gfdm/stencil.hpp"

using namespace gfdm;

namespace {

constexpr double kPi = std::numbers::pi;

Matrix random_cloud(int n, int dim, unsigned seed) {
  std::mt19937 eng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix pts(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) pts(i, j) = unit(eng);
  return pts;
}

}  // namespace

TEST_CASE("knn on collinear points, ties go to the smaller index") {
  Matrix pts(4, 1);
  pts << 0.0, 1.0, 2.0, 3.0;
  const auto table = build_knn(pts, 3);
  CHECK(table.idx(0, 0) == 0);
  CHECK(table.idx(0, 1) == 1);
  CHECK(table.idx(0, 2) == 2);
  CHECK(table.idx(1, 0) == 1);
  CHECK(table.idx(1, 1) == 0);  // 0 and 2 equidistant; 0 wins
  CHECK(table.idx(1, 2) == 2);
  CHECK(table.idx(2, 1) == 1);  // 1 and 3 equidistant; 1 wins
  CHECK(table.idx(2, 2) == 3);
  CHECK(table.dist(1, 1) == 1.0);
  CHECK(table.dist(1, 2) == 1.0);
}

TEST_CASE("knn input validation") {
  Matrix pts = random_cloud(5, 2, 1);
  CHECK_THROWS_AS(build_knn(pts, 6), Error);
  CHECK_THROWS_AS(build_knn(pts, 0), Error);
  CHECK_THROWS_AS(build_knn(Matrix(0, 2), 1), Error);
}

TEST_CASE("kd-tree agrees with brute force exactly") {
  for (int dim : {1, 2, 3, 9}) {
    const Matrix pts = random_cloud(300, dim, 100 + static_cast<unsigned>(dim));
    const auto tree = build_knn(pts, 12);
    const auto brute = build_knn_brute(pts, 12);
    CHECK(tree.idx == brute.idx);
    CHECK(tree.dist == brute.dist);
  }
  // tie-rich integer grid
  Matrix grid(17 * 17, 2);
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) {
      grid(i * 17 + j, 0) = i;
      grid(i * 17 + j, 1) = j;
    }
  const auto tree = build_knn(grid, 9);
  const auto brute = build_knn_brute(grid, 9);
  CHECK(tree.idx == brute.idx);
  CHECK(tree.dist == brute.dist);
}

TEST_CASE("knn is equivariant under point relabeling") {
  const int n = 200, k = 8;
  const Matrix pts = random_cloud(n, 3, 7);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  Matrix shuffled(n, 3);
  for (int i = 0; i < n; ++i) shuffled.row(perm[static_cast<std::size_t>(i)]) = pts.row(i);
  const auto base = build_knn(pts, k);
  const auto moved = build_knn(shuffled, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      CHECK(moved.idx(perm[static_cast<std::size_t>(i)], j) ==
            perm[static_cast<std::size_t>(base.idx(i, j))]);
      CHECK(moved.dist(perm[static_cast<std::size_t>(i)], j) ==
            doctest::Approx(base.dist(i, j)).epsilon(1e-14));
    }
}

TEST_CASE("h_k_max is the distance to the K-th neighbor") {
  const Matrix pts = random_cloud(50, 2, 9);
  const auto table = build_knn(pts, 5);
  const Vector h = table.h_k_max();
  for (int i = 0; i < 50; ++i) CHECK(h[i] == table.dist(i, 4));
}

TEST_CASE("tangent estimation recovers exact subspaces") {
  // 10 points on a straight line in R^3
  Matrix line(10, 3);
  const Vector dir = Vector{{2.0, -1.0, 0.5}}.normalized();
  for (int i = 0; i < 10; ++i) line.row(i) = (0.3 * i) * dir.transpose();
  const auto est = estimate_tangent(line, 1, 10);
  CHECK(est.degenerate.empty());
  for (int i = 0; i < 10; ++i) {
    CHECK(std::abs(std::abs(est.frame.basis[static_cast<std::size_t>(i)].col(0).dot(dir)) - 1.0) < 1e-12);
    // residual singular values vanish for an exact subspace
    CHECK(est.singular_values(i, 1) <= 1e-12 * est.singular_values(i, 0));
    // sign convention: first nonzero component positive
    CHECK(est.frame.basis[static_cast<std::size_t>(i)](0, 0) > 0.0);
  }

  // coplanar points in R^3, d = 2
  std::mt19937 eng(4);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix plane(40, 3);
  const Vector e1 = Vector{{1.0, 2.0, 2.0}}.normalized();
  Vector e2 = Vector{{-2.0, 1.0, 0.0}}.normalized();
  for (int i = 0; i < 40; ++i)
    plane.row(i) = unit(eng) * e1.transpose() + unit(eng) * e2.transpose();
  const auto est2 = estimate_tangent(plane, 2, 20);
  CHECK(est2.degenerate.empty());
  const Eigen::Vector3d normal =
      Eigen::Vector3d(e1).cross(Eigen::Vector3d(e2)).normalized();
  for (int i = 0; i < 40; ++i)
    CHECK((est2.frame.basis[static_cast<std::size_t>(i)].transpose() * normal)
              .cwiseAbs()
              .maxCoeff() < 1e-12);

  // a line cannot span d = 2 directions
  const auto bad = estimate_tangent(line, 2, 10);
  CHECK(bad.degenerate.size() == 10);
}

TEST_CASE("estimated tangents approach analytic ones on the ellipse") {
  const auto cloud = sample_manifold(make_ellipse(), 3200, 21);
  const auto est = estimate_tangent(cloud.ambient, 1, 20);
  CHECK(est.degenerate.empty());
  const auto exact = analytic_frames(cloud);
  double worst = 0.0;
  for (int i = 0; i < 3200; ++i) {
    const double c = std::abs(est.frame.basis[static_cast<std::size_t>(i)]
                                  .col(0)
                                  .dot(exact.basis[static_cast<std::size_t>(i)].col(0)));
    worst = std::max(worst, std::acos(std::min(1.0, c)));
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("projection error decreases with N at k_p = 2 sqrt(N)") {
  for (const auto& spec : {make_ellipse(), make_semi_torus()}) {
    double prev = 1e300;
    for (int n : {800, 3200, 12800}) {
      const auto cloud = sample_manifold(spec, n, 77);
      const auto est = estimate_tangent(cloud.ambient, spec.dim(), default_kp(n));
      const auto exact = analytic_frames(cloud);
      std::vector<double> err(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Matrix& t_hat = est.frame.basis[static_cast<std::size_t>(i)];
        const Matrix& t = exact.basis[static_cast<std::size_t>(i)];
        err[static_cast<std::size_t>(i)] =
            (t_hat * t_hat.transpose() - t * t.transpose()).norm();
      }
      std::nth_element(err.begin(), err.begin() + n / 2, err.end());
      const double median = err[static_cast<std::size_t>(n / 2)];
      CHECK(median < prev);
      prev = median;
    }
  }
}

TEST_CASE("default PCA neighborhood size") {
  CHECK(default_kp(400) == 41);     // 2 sqrt(400) = 40, ties round up
  CHECK(default_kp(3200) == 113);   // 113.14
  CHECK(default_kp(25600) == 321);  // 320
  CHECK(default_kp(1600) == 81);    // 80
  CHECK(default_kp(121) % 2 == 1);
}

TEST_CASE("fill distance bracket on sparse clouds") {
  // one point at t = 0 on the ellipse: the farthest manifold point is at
  // distance sqrt(16/3) > 2, so dense probing must certify at least 2
  Matrix single(1, 2);
  single << 1.0, 0.0;
  const double fill = estimate_fill_distance(single, make_ellipse(), 4000, 3);
  CHECK(fill >= 2.0);
  CHECK(fill <= std::sqrt(16.0 / 3.0) + 1e-12);

  // dense clouds: the estimate shrinks
  const auto dense = sample_manifold(make_ellipse(), 3200, 5);
  const double small = estimate_fill_distance(dense.ambient, make_ellipse(), 4000, 3);
  CHECK(small < 0.1);
}
