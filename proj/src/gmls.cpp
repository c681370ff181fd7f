#include "gfdm/gmls.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace gfdm {

std::vector<std::vector<int>> multi_indices(int d, int l) {
  if (d < 1) throw Error("multi_indices: d must be positive");
  if (l < 0) throw Error("multi_indices: l must be nonnegative");
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(d), 0);
  // graded: total degree ascending; within a degree the loop nesting yields
  // ascending lexicographic order
  auto rec = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == d - 1) {
      cur[static_cast<std::size_t>(pos)] = remaining;
      out.push_back(cur);
      return;
    }
    for (int a = 0; a <= remaining; ++a) {
      cur[static_cast<std::size_t>(pos)] = a;
      self(self, pos + 1, remaining - a);
    }
  };
  for (int total = 0; total <= l; ++total) rec(rec, 0, total);
  return out;
}

int basis_size(int d, int l) {
  // binomial(l + d, d)
  long long num = 1;
  for (int i = 1; i <= d; ++i) num = num * (l + i) / i;
  return static_cast<int>(num);
}

double eval_basis(const std::vector<int>& alpha, const Vector& z) {
  double v = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    for (int a = 0; a < alpha[i]; ++a) v *= z[static_cast<Eigen::Index>(i)];
  return v;
}

Vector eval_basis_gradient(const std::vector<int>& alpha, const Vector& z,
                           const Matrix& t_base) {
  const int d = static_cast<int>(alpha.size());
  Vector grad = Vector::Zero(t_base.rows());
  for (int i = 0; i < d; ++i) {
    if (alpha[static_cast<std::size_t>(i)] == 0) continue;
    double coeff = alpha[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      const int p = alpha[static_cast<std::size_t>(j)] - (j == i ? 1 : 0);
      for (int a = 0; a < p; ++a) coeff *= z[j];
    }
    grad += coeff * t_base.col(i);
  }
  return grad;
}

Vector eval_G_basis(const std::vector<int>& alpha, const Vector& z,
                    const Matrix& t_base, const Matrix& t_eval) {
  const Vector grad = eval_basis_gradient(alpha, z, t_base);
  return t_eval * (t_eval.transpose() * grad);
}

Matrix stencil_basis(const Matrix& stencil_coords, const Matrix& t_base,
                     int degree, double* h_scale) {
  const int K = static_cast<int>(stencil_coords.rows());
  const int d = static_cast<int>(t_base.cols());
  const auto alphas = multi_indices(d, degree);
  const int m = static_cast<int>(alphas.size());

  double h = 0.0;
  for (int k = 1; k < K; ++k)
    h = std::max(h, (stencil_coords.row(k) - stencil_coords.row(0)).norm());
  if (!(h > 0.0)) throw Error("stencil_basis: all stencil points coincide");
  if (h_scale) *h_scale = h;

  // scaled tangent offsets z_k = T^T (x_k - x_0) / h, then power tables
  Matrix z(K, d);
  for (int k = 0; k < K; ++k)
    z.row(k) =
        ((stencil_coords.row(k) - stencil_coords.row(0)) * t_base) / h;

  std::vector<Matrix> zpow(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    Matrix& p = zpow[static_cast<std::size_t>(i)];
    p.resize(K, degree + 1);
    p.col(0).setOnes();
    for (int a = 1; a <= degree; ++a)
      p.col(a) = p.col(a - 1).cwiseProduct(z.col(i));
  }

  Matrix phi(K, m);
  for (int j = 0; j < m; ++j) {
    phi.col(j).setOnes();
    for (int i = 0; i < d; ++i)
      phi.col(j) = phi.col(j).cwiseProduct(
          zpow[static_cast<std::size_t>(i)].col(alphas[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]));
  }
  return phi;
}

RowWeights gmls_row_weights(const Matrix& stencil_coords,
                            const std::vector<Matrix>& stencil_bases,
                            const AssembleOptions& opt, int base_index) {
  const int K = static_cast<int>(stencil_coords.rows());
  const int n = static_cast<int>(stencil_coords.cols());
  if (static_cast<int>(stencil_bases.size()) != K)
    throw Error("gmls_row_weights: one tangent basis per stencil point required");
  if (opt.degree < 2) throw Error("gmls_row_weights: degree must be at least 2");
  const Matrix& t0 = stencil_bases[0];
  const int d = static_cast<int>(t0.cols());
  const auto alphas = multi_indices(d, opt.degree);
  const int m = static_cast<int>(alphas.size());
  if (K < m)
    throw Error("gmls_row_weights: stencil of " + std::to_string(K) +
                " points cannot fit a basis of size " + std::to_string(m) +
                " at point " + std::to_string(base_index));

  RowWeights row;
  row.base = base_index;
  row.phi = stencil_basis(stencil_coords, t0, opt.degree, &row.h_scale);
  const double h = row.h_scale;

  {  // rank gate on the scaled basis
    Eigen::JacobiSVD<Matrix> svd(row.phi);
    const Vector& sv = svd.singularValues();
    if (sv[sv.size() - 1] < 1e-10 * sv[0])
      throw Error("gmls_row_weights: rank-deficient stencil at point " +
                  std::to_string(base_index) + " (try a larger stencil)");
  }

  // pseudo-inverse applied through column-pivoted QR: X = Phi^+ (m x K)
  Eigen::ColPivHouseholderQR<Matrix> qr(row.phi);
  const Matrix X = qr.solve(Matrix::Identity(K, K));

  // scaled offsets again (cheap; keeps stencil_basis self-contained)
  Matrix z(K, d);
  for (int k = 0; k < K; ++k)
    z.row(k) = ((stencil_coords.row(k) - stencil_coords.row(0)) * t0) / h;

  // M_k(:, j) = P(x_k) grad p_j(x_k); the gradient lives in span(t0), so
  // M_k = Q_k C_k with Q_k = T_k (T_k^T T_0) and C_k the d x m coefficients
  auto coeff = [&](int k, int i, const std::vector<int>& alpha) {
    if (alpha[static_cast<std::size_t>(i)] == 0) return 0.0;
    double c = alpha[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      const int p = alpha[static_cast<std::size_t>(j)] - (j == i ? 1 : 0);
      for (int a = 0; a < p; ++a) c *= z(k, j);
    }
    return c / h;  // the 1/h from differentiating the scaled coordinate
  };

  Matrix C(d, m), M0(n, m);
  Vector s = Vector::Zero(m);
  Matrix R;  // n x K, filled after M0 is known
  std::vector<Matrix> Ms;  // stash M_k to avoid a second pass
  Ms.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < d; ++i)
        C(i, j) = coeff(k, i, alphas[static_cast<std::size_t>(j)]);
    if (opt.projection_at_base) {
      Ms.push_back(t0 * C);
    } else {
      const Matrix& tk = stencil_bases[static_cast<std::size_t>(k)];
      Ms.push_back(tk * ((tk.transpose() * t0) * C));
    }
  }
  R = Ms[0] * X;
  for (int k = 0; k < K; ++k) s += Ms[static_cast<std::size_t>(k)].transpose() * R.col(k);
  row.w = X.transpose() * s;
  return row;
}

SparseOperator assemble_operator(const Matrix& points, const NeighborTable& knn,
                                 const Frame& frames, const AssembleOptions& opt,
                                 std::vector<RowWeights>* rows_out) {
  const int n = static_cast<int>(points.rows());
  if (knn.n_points() != n)
    throw Error("assemble_operator: neighbor table does not match the cloud");
  if (static_cast<int>(frames.basis.size()) != n)
    throw Error("assemble_operator: one tangent basis per point required");
  const int K = knn.k();

  auto make_row = [&](int i, const std::vector<int>& nbrs) {
    const int kk = static_cast<int>(nbrs.size());
    Matrix coords(kk, points.cols());
    std::vector<Matrix> bases(static_cast<std::size_t>(kk));
    for (int j = 0; j < kk; ++j) {
      coords.row(j) = points.row(nbrs[static_cast<std::size_t>(j)]);
      bases[static_cast<std::size_t>(j)] =
          frames.basis[static_cast<std::size_t>(nbrs[static_cast<std::size_t>(j)])];
    }
    RowWeights row = gmls_row_weights(coords, bases, opt, i);
    row.neighbors = nbrs;
    return row;
  };

  std::vector<RowWeights> local;
  std::vector<RowWeights>& all = rows_out ? *rows_out : local;
  all.clear();
  all.reserve(static_cast<std::size_t>(n));

  const int cap = std::min(opt.widen_nonnegative, n);
  std::unique_ptr<KdTree> tree;  // built only if a row actually widens
  std::vector<double> dist;
  int kmax = K;
  for (int i = 0; i < n; ++i) {
    std::vector<int> nbrs(knn.idx.row(i).data(), knn.idx.row(i).data() + K);
    RowWeights row = make_row(i, nbrs);
    if (row.w[0] >= 0.0 && cap > K) {
      // One-sided stencil: double the neighborhood until it straddles the
      // void and the diagonal turns negative. If the cap is hit first, keep
      // the widest attempt; it is the most balanced candidate downstream
      // repair can work with.
      if (!tree) tree = std::make_unique<KdTree>(points);
      for (int kk = std::min(2 * K, cap);; kk = std::min(2 * kk, cap)) {
        std::vector<int> wide;
        tree->query(points.row(i).transpose(), kk, wide, dist);
        RowWeights cand = make_row(i, wide);
        if (cand.w[0] < 0.0 || kk == cap) {
          row = std::move(cand);
          break;
        }
      }
      kmax = std::max(kmax, static_cast<int>(row.neighbors.size()));
    }
    if (!rows_out) row.phi.resize(0, 0);  // keep the streaming footprint
    all.push_back(std::move(row));
  }

  // Pack into a fixed-width operator; rows narrower than the widest get an
  // explicit zero at their base column, which every consumer treats as a
  // structural no-op.
  SparseOperator op;
  op.cols.resize(n, kmax);
  op.vals.resize(n, kmax);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const RowWeights& row = all[i];
    const int kk = static_cast<int>(row.w.size());
    for (int j = 0; j < kk; ++j) {
      op.cols(i, j) = row.neighbors[static_cast<std::size_t>(j)];
      op.vals(i, j) = row.w[j];
    }
    for (int j = kk; j < kmax; ++j) {
      op.cols(i, j) = i;
      op.vals(i, j) = 0.0;
    }
    worst = std::max(worst, std::abs(row.w.sum()) / row.w.cwiseAbs().sum());
  }
  op.const_residual = worst;
  return op;
}

Vector SparseOperator::apply(const Vector& u) const {
  if (u.size() != n_points())
    throw Error("SparseOperator::apply: vector length mismatch");
  Vector out(n_points());
  for (int i = 0; i < n_points(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < k(); ++j) acc += vals(i, j) * u[cols(i, j)];
    out[i] = acc;
  }
  return out;
}

Eigen::SparseMatrix<double> SparseOperator::to_sparse() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n_points()) * static_cast<std::size_t>(k()));
  for (int i = 0; i < n_points(); ++i)
    for (int j = 0; j < k(); ++j) trips.emplace_back(i, cols(i, j), vals(i, j));
  Eigen::SparseMatrix<double> mat(n_points(), n_points());
  mat.setFromTriplets(trips.begin(), trips.end());
  return mat;
}

double forward_error(const SparseOperator& op, const Vector& u, const Vector& lap) {
  return (lap - op.apply(u)).lpNorm<Eigen::Infinity>();
}

void save_operator(const std::string& path, const SparseOperator& op) {
  std::ofstream out(path);
  if (!out) throw Error("save_operator: cannot open '" + path + "'");
  out << op.n_points() << ' ' << op.k() << '\n';
  char buf[64];
  for (int i = 0; i < op.n_points(); ++i) {
    out << i;
    for (int j = 0; j < op.k(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", op.vals(i, j));
      out << ' ' << op.cols(i, j) << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("save_operator: write failed for '" + path + "'");
}

SparseOperator load_operator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_operator: cannot open '" + path + "'");
  int n = 0, k = 0;
  if (!(in >> n >> k) || n < 1 || k < 1)
    throw Error("load_operator: bad header in '" + path + "'");
  SparseOperator op;
  op.cols.resize(n, k);
  op.vals.resize(n, k);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    int row = -1;
    if (!(in >> row) || row != i)
      throw Error("load_operator: expected row " + std::to_string(i));
    for (int j = 0; j < k; ++j) {
      if (!(in >> op.cols(i, j) >> op.vals(i, j)))
        throw Error("load_operator: truncated row " + std::to_string(i));
      if (op.cols(i, j) < 0 || op.cols(i, j) >= n)
        throw Error("load_operator: column out of range in row " + std::to_string(i));
    }
    worst = std::max(worst,
                     std::abs(op.vals.row(i).sum()) / op.vals.row(i).cwiseAbs().sum());
  }
  op.const_residual = worst;
  return op;
}

}  // namespace gfdm
