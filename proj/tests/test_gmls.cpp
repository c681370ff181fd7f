#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gfdm/geometry.hpp"
#include "gfdm/gmls.hpp"
#include "gfdm/stencil.hpp"

using namespace gfdm;

namespace {

// Dense reference: unscaled basis, explicit SVD pseudo-inverse, full G_l
// matrices. Shares no code path with gmls_row_weights beyond the basis
// evaluators it is checking against.
Vector oracle_weights(const Matrix& coords, const std::vector<Matrix>& bases,
                      int degree) {
  const int K = static_cast<int>(coords.rows());
  const int n = static_cast<int>(coords.cols());
  const Matrix& t0 = bases[0];
  const int d = static_cast<int>(t0.cols());
  const auto alphas = multi_indices(d, degree);
  const int m = static_cast<int>(alphas.size());

  Matrix z(K, d);
  for (int k = 0; k < K; ++k)
    z.row(k) = (coords.row(k) - coords.row(0)) * t0;

  Matrix phi(K, m);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < m; ++j)
      phi(k, j) = eval_basis(alphas[static_cast<std::size_t>(j)], z.row(k).transpose());

  Eigen::JacobiSVD<Matrix> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  Matrix sinv = Matrix::Zero(m, m);
  for (int i = 0; i < m; ++i)
    if (sv[i] > 1e-14 * sv[0]) sinv(i, i) = 1.0 / sv[i];
  const Matrix pinv = svd.matrixV() * sinv * svd.matrixU().transpose();

  Matrix acc = Matrix::Zero(K, K);
  for (int l = 0; l < n; ++l) {
    Matrix bl(K, m);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < m; ++j)
        bl(k, j) = eval_G_basis(alphas[static_cast<std::size_t>(j)], z.row(k).transpose(),
                                t0, bases[static_cast<std::size_t>(k)])[l];
    const Matrix gl = bl * pinv;
    acc += gl * gl;
  }
  return acc.row(0).transpose();
}

// stencil on the graph of a random quadratic/cubic over the tangent plane
void random_stencil(int d, int K, unsigned seed, Matrix& coords,
                    std::vector<Matrix>& bases) {
  std::mt19937 eng(seed);
  std::uniform_real_distribution<double> unit(-0.1, 0.1);
  std::uniform_real_distribution<double> shape(-1.0, 1.0);
  const int n = d + 1;
  coords.resize(K, n);
  bases.assign(static_cast<std::size_t>(K), Matrix());
  if (d == 1) {
    const double a = shape(eng), b = shape(eng);
    for (int k = 0; k < K; ++k) {
      const double t = k == 0 ? 0.0 : unit(eng);
      coords(k, 0) = t;
      coords(k, 1) = a * t * t + b * t * t * t;
      Vector tan(2);
      tan << 1.0, 2.0 * a * t + 3.0 * b * t * t;
      bases[static_cast<std::size_t>(k)] = tan.normalized();
    }
  } else {
    const double a = shape(eng), b = shape(eng), c = shape(eng);
    for (int k = 0; k < K; ++k) {
      const double x = k == 0 ? 0.0 : unit(eng);
      const double y = k == 0 ? 0.0 : unit(eng);
      coords(k, 0) = x;
      coords(k, 1) = y;
      coords(k, 2) = a * x * x + b * x * y + c * y * y;
      Matrix jac(3, 2);
      jac << 1.0, 0.0, 0.0, 1.0, 2.0 * a * x + b * y, b * x + 2.0 * c * y;
      Eigen::HouseholderQR<Matrix> qr(jac);
      bases[static_cast<std::size_t>(k)] =
          qr.householderQ() * Matrix::Identity(3, 2);
    }
  }
}

}  // namespace

TEST_CASE("multi-index order and sizes") {
  const auto idx = multi_indices(2, 2);
  REQUIRE(idx.size() == 6);
  CHECK(idx[0] == std::vector<int>{0, 0});
  CHECK(idx[1] == std::vector<int>{0, 1});
  CHECK(idx[2] == std::vector<int>{1, 0});
  CHECK(idx[3] == std::vector<int>{0, 2});
  CHECK(idx[4] == std::vector<int>{1, 1});
  CHECK(idx[5] == std::vector<int>{2, 0});
  CHECK(basis_size(1, 5) == 6);
  CHECK(basis_size(2, 3) == 10);
  CHECK(basis_size(2, 5) == 21);
  CHECK(multi_indices(1, 5).size() == 6);
}

TEST_CASE("basis gradient matches finite differences in ambient space") {
  std::mt19937 eng(2);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  Matrix t0(3, 2);
  t0 << 1, 0, 0, 1, 0, 0;  // tangent plane = xy
  for (const auto& alpha : multi_indices(2, 3)) {
    Vector x(3);
    x << unit(eng), unit(eng), unit(eng);
    auto p = [&](const Vector& q) {
      const Vector z = t0.transpose() * q;
      return eval_basis(alpha, z);
    };
    const Vector grad = eval_basis_gradient(alpha, t0.transpose() * x, t0);
    for (int a = 0; a < 3; ++a) {
      const double h = 1e-6;
      Vector hi = x, lo = x;
      hi[a] += h;
      lo[a] -= h;
      CHECK(grad[a] == doctest::Approx((p(hi) - p(lo)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("tangential gradient is the projected ambient gradient") {
  Matrix t0(3, 2);
  t0 << 1, 0, 0, 1, 0, 0;
  Matrix te(3, 2);  // a different tangent plane at the evaluation point
  te << 1, 0, 0, std::sqrt(0.5), 0, std::sqrt(0.5);
  const std::vector<int> alpha{1, 2};
  Vector z(2);
  z << 0.3, -0.2;
  const Vector grad = eval_basis_gradient(alpha, z, t0);
  const Vector got = eval_G_basis(alpha, z, t0, te);
  const Vector want = te * (te.transpose() * grad);
  CHECK((got - want).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("row weights match the dense SVD oracle") {
  Matrix coords;
  std::vector<Matrix> bases;
  for (int rep = 0; rep < 10; ++rep) {
    const int d = rep % 2 + 1;
    random_stencil(d, 25, 1000 + static_cast<unsigned>(rep), coords, bases);
    AssembleOptions opt;
    opt.degree = rep % 2 ? 3 : 2;
    const RowWeights row = gmls_row_weights(coords, bases, opt, 0);
    const Vector want = oracle_weights(coords, bases, opt.degree);
    CHECK((row.w - want).lpNorm<Eigen::Infinity>() <=
          1e-8 * want.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("weights scale like 1/length^2 under exact binary rescaling") {
  Matrix coords;
  std::vector<Matrix> bases;
  random_stencil(2, 25, 7, coords, bases);
  AssembleOptions opt;
  opt.degree = 2;
  const RowWeights base = gmls_row_weights(coords, bases, opt, 0);
  const Matrix doubled = 2.0 * coords;
  const RowWeights scaled = gmls_row_weights(doubled, bases, opt, 0);
  CHECK(base.w == 4.0 * scaled.w);
}

TEST_CASE("rank-deficient stencils are rejected with the base index") {
  // collinear points cannot support a d = 2 basis
  Matrix coords(10, 3);
  for (int k = 0; k < 10; ++k) {
    coords(k, 0) = 0.05 * k;
    coords(k, 1) = 0.0;
    coords(k, 2) = 0.0;
  }
  Matrix t0(3, 2);
  t0 << 1, 0, 0, 1, 0, 0;
  std::vector<Matrix> bases(10, t0);
  AssembleOptions opt;
  opt.degree = 2;
  CHECK_THROWS_WITH_AS(gmls_row_weights(coords, bases, opt, 17),
                       doctest::Contains("rank-deficient stencil at point 17"),
                       Error);
}

TEST_CASE("assembled operator annihilates constants") {
  const auto cloud = sample_manifold(make_ellipse(), 400, 11);
  const auto knn = build_knn(cloud.ambient, 21);
  const auto frames = analytic_frames(cloud);
  for (int l : {2, 3, 4, 5}) {
    AssembleOptions opt;
    opt.degree = l;
    const auto op = assemble_operator(cloud.ambient, knn, frames, opt);
    CHECK(op.const_residual <= 1e-9);
    const Vector lu = op.apply(Vector::Ones(400));
    const double scale = op.vals.cwiseAbs().rowwise().sum().maxCoeff();
    CHECK(lu.lpNorm<Eigen::Infinity>() <= 1e-9 * scale);
  }
}

TEST_CASE("forward error shrinks on the ellipse") {
  AssembleOptions opt;
  opt.degree = 3;
  double prev = 1e300;
  for (int n : {800, 3200}) {
    const auto cloud = sample_manifold(make_ellipse(), n, 3);
    const auto knn = build_knn(cloud.ambient, 21);
    const auto frames = analytic_frames(cloud);
    const auto op = assemble_operator(cloud.ambient, knn, frames, opt);
    const double fe = forward_error(op, field_values(Field::SinTheta, cloud),
                                    laplacian_values(Field::SinTheta, cloud));
    CHECK(fe < prev);
    prev = fe;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("operator file round trip") {
  const auto cloud = sample_manifold(make_ellipse(), 60, 2);
  const auto knn = build_knn(cloud.ambient, 7);
  const auto frames = analytic_frames(cloud);
  AssembleOptions opt;
  opt.degree = 2;
  const auto op = assemble_operator(cloud.ambient, knn, frames, opt);
  const auto path = std::string("/tmp/gfdm_operator_roundtrip.txt");
  save_operator(path, op);
  const auto loaded = load_operator(path);
  CHECK(loaded.cols == op.cols);
  CHECK(loaded.vals == op.vals);
  CHECK(loaded.const_residual == doctest::Approx(op.const_residual));
}

TEST_CASE("apply matches the sparse matrix") {
  const auto cloud = sample_manifold(make_semi_torus(), 300, 4);
  const auto knn = build_knn(cloud.ambient, 12);
  const auto frames = analytic_frames(cloud);
  AssembleOptions opt;
  opt.degree = 2;
  const auto op = assemble_operator(cloud.ambient, knn, frames, opt);
  std::mt19937 eng(5);
  std::uniform_real_distribution<double> unit(-1, 1);
  Vector u(300);
  for (int i = 0; i < 300; ++i) u[i] = unit(eng);
  const Vector direct = op.apply(u);
  const Vector via_sparse = op.to_sparse() * u;
  CHECK((direct - via_sparse).lpNorm<Eigen::Infinity>() < 1e-12 * direct.lpNorm<Eigen::Infinity>());
}

TEST_CASE("widening flips a one-sided diagonal across a sampling void") {
  // Unit circle with a dense 10-point cluster on one arc and a sparse rest:
  // the cluster-edge point's 6 nearest neighbors all sit on one side, and
  // the first point across the void is only reached at stencil size 12.
  std::vector<double> th;
  for (int j = 0; j < 10; ++j) th.push_back(0.02 * j);
  for (double t = 0.7; t < 5.3; t += 0.5) th.push_back(t);
  th.push_back(5.78);
  const int n = static_cast<int>(th.size());
  REQUIRE(n == 21);
  Matrix pts(n, 2);
  Frame frames;
  for (int i = 0; i < n; ++i) {
    const double t = th[static_cast<std::size_t>(i)];
    pts(i, 0) = std::cos(t);
    pts(i, 1) = std::sin(t);
    Matrix tan(2, 1);
    tan << -std::sin(t), std::cos(t);
    frames.basis.push_back(tan);
  }
  const NeighborTable knn = build_knn(pts, 6);
  for (int j = 0; j < 6; ++j) REQUIRE(knn.idx(0, j) == j);  // one-sided

  AssembleOptions opt;
  opt.degree = 2;
  std::vector<RowWeights> rows;

  // Off by default: the flagged diagonal survives and the layout is the
  // plain neighbor table.
  const auto plain = assemble_operator(pts, knn, frames, opt, &rows);
  CHECK(plain.k() == 6);
  CHECK(plain.cols == knn.idx);
  CHECK(rows[0].w[0] > 0.0);

  // Cap below the void width: the widest attempt is kept, still flagged.
  opt.widen_nonnegative = 8;
  const auto capped = assemble_operator(pts, knn, frames, opt, &rows);
  CHECK(capped.k() == 8);
  CHECK(rows[0].neighbors.size() == 8);
  CHECK(rows[0].w[0] > 0.0);

  // Room to cross: one doubling reaches the far side and the diagonal
  // turns negative.
  opt.widen_nonnegative = 40;
  const auto wide = assemble_operator(pts, knn, frames, opt, &rows);
  CHECK(rows[0].neighbors.size() == 12);
  CHECK(rows[0].w[0] < 0.0);
  bool crossed = false;
  for (int v : rows[0].neighbors) crossed = crossed || v == 20;
  CHECK(crossed);

  // The widened weights agree with the dense reference on the same stencil.
  {
    const int kk = static_cast<int>(rows[0].neighbors.size());
    Matrix coords(kk, 2);
    std::vector<Matrix> bases;
    for (int j = 0; j < kk; ++j) {
      const int v = rows[0].neighbors[static_cast<std::size_t>(j)];
      coords.row(j) = pts.row(v);
      bases.push_back(frames.basis[static_cast<std::size_t>(v)]);
    }
    const Vector ref = oracle_weights(coords, bases, 2);
    CHECK((rows[0].w - ref).lpNorm<Eigen::Infinity>() <=
          1e-8 * ref.lpNorm<Eigen::Infinity>());
  }

  // Narrow rows are padded with a structural zero at the base column, and
  // both application paths agree on the padded operator.
  CHECK(wide.k() == 12);
  CHECK(wide.cols(15, 11) == 15);
  CHECK(wide.vals(15, 11) == 0.0);
  CHECK(wide.const_residual <= 1e-9);
  Vector u(n);
  for (int i = 0; i < n; ++i)
    u[i] = std::sin(2.0 * th[static_cast<std::size_t>(i)]);
  const Vector direct = wide.apply(u);
  const Vector via_sparse = wide.to_sparse() * u;
  CHECK((direct - via_sparse).lpNorm<Eigen::Infinity>() <
        1e-12 * direct.lpNorm<Eigen::Infinity>());
}
