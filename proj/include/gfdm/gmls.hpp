#pragma once

#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "gfdm/common.hpp"
#include "gfdm/stencil.hpp"

namespace gfdm {

// Multi-indices over d variables with total degree <= l, graded order
// (degree ascending) with ascending lexicographic ties, so index 0 is the
// constant. Size is binomial(l + d, d).
std::vector<std::vector<int>> multi_indices(int d, int l);
int basis_size(int d, int l);

// Value of the intrinsic monomial z^alpha at tangent offset z.
double eval_basis(const std::vector<int>& alpha, const Vector& z);

// Ambient gradient of z^alpha: sum_i alpha_i z^{alpha - e_i} t_i, where the
// t_i are the columns of the base point's tangent frame used to define z.
Vector eval_basis_gradient(const std::vector<int>& alpha, const Vector& z,
                           const Matrix& t_base);

// Tangential gradient of z^alpha at a stencil point: the ambient gradient
// projected onto the tangent space spanned by `t_eval` (P = T T^T applied
// without forming P). Component l of the result is G_l p_alpha.
Vector eval_G_basis(const std::vector<int>& alpha, const Vector& z,
                    const Matrix& t_base, const Matrix& t_eval);

// Scaled basis matrix for one stencil: row k holds p_alpha((x_k - x_0)/h)
// over all alpha, where h (returned through h_scale) is the largest ambient
// offset norm in the stencil. Scaling keeps the least-squares problem
// conditioned without changing the resulting operator weights.
Matrix stencil_basis(const Matrix& stencil_coords, const Matrix& t_base,
                     int degree, double* h_scale);

struct AssembleOptions {
  int degree = 2;                   // polynomial degree l
  bool projection_at_base = false;  // project gradients at x_0 instead of x_k
  // If > 0: a row whose diagonal weight comes out nonnegative (a one-sided
  // or badly skewed stencil, typically at the edge of a sampling void) is
  // re-assembled over progressively larger neighborhoods, doubling from the
  // table's K up to this many points, until the diagonal turns negative.
  // Meant for solves on closed manifolds, where every row enters the linear
  // system; leave at 0 when the diagonal sign is read as a boundary signal.
  // Widened rows make the operator wider; shorter rows are padded with
  // explicit zeros at the base column.
  int widen_nonnegative = 0;
};

// One Laplacian row: weights over the stencil, diagonal first. `phi` and
// `h_scale` are kept so the stabilizer can reuse the same consistency rows.
struct RowWeights {
  int base = -1;
  std::vector<int> neighbors;
  Vector w;
  Matrix phi;
  double h_scale = 0.0;
};

// Least-squares weights for the Laplace-Beltrami row at stencil_coords
// row 0: the first row of sum_l G_l G_l with G_l = B_l Phi^+, the
// pseudo-inverse applied through a column-pivoted QR factorization. Throws
// when the smallest singular value of Phi falls below 1e-10 x the largest
// (rank-deficient stencil; retry with a larger K).
RowWeights gmls_row_weights(const Matrix& stencil_coords,
                            const std::vector<Matrix>& stencil_bases,
                            const AssembleOptions& opt, int base_index);

// Fixed-bandwidth sparse operator: row i holds K weights over the columns
// listed in `cols` (the neighbor row of i, self first).
struct SparseOperator {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols;
  Matrix vals;
  // max over rows of |sum_k w_k| / sum_k |w_k|: constant-annihilation check
  double const_residual = 0.0;

  int n_points() const { return static_cast<int>(cols.rows()); }
  int k() const { return static_cast<int>(cols.cols()); }
  Vector apply(const Vector& u) const;
  Eigen::SparseMatrix<double> to_sparse() const;
};

// Assemble all rows. When rows_out is given it receives the per-row
// RowWeights (weights plus scaled basis values), which boundary detection
// and stabilization consume.
SparseOperator assemble_operator(const Matrix& points, const NeighborTable& knn,
                                 const Frame& frames, const AssembleOptions& opt,
                                 std::vector<RowWeights>* rows_out = nullptr);

// max_i |lap_i - (L u)_i|, the operator consistency (forward) error
double forward_error(const SparseOperator& op, const Vector& u, const Vector& lap);

// Plain-text operator files: "N K" header line, then one row per point:
// index followed by K (column, value) pairs, full double precision.
void save_operator(const std::string& path, const SparseOperator& op);
SparseOperator load_operator(const std::string& path);

}  // namespace gfdm
