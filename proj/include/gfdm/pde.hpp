#pragma once

#include <Eigen/SparseCore>
#include <optional>
#include <vector>

#include "gfdm/geometry.hpp"
#include "gfdm/gmls.hpp"

namespace gfdm {

// Sign split of the cloud: interior points carry a negative first weight,
// the rest are boundary-flagged. eps_star is the largest boundary distance
// among flagged points (boundaried manifolds with at least one flag only).
struct InteriorSplit {
  std::vector<int> interior;  // w_1 < 0
  std::vector<int> flagged;   // w_1 >= 0
  int zero_ties = 0;          // rows with w_1 == 0, counted conservatively
  std::optional<double> eps_star;
};

InteriorSplit detect_interior(const std::vector<RowWeights>& rows,
                              const PointCloud& cloud);
InteriorSplit detect_interior(const SparseOperator& op,
                              const PointCloud& cloud);

// {i : boundary_distance(x_i) > eps}; requires a boundaried manifold.
std::vector<int> restrict_eps(const PointCloud& cloud, double eps);

struct Solution {
  Vector u;
  double residual = 0.0;   // infinity norm of b - A x on the solved system
  int refine_steps = 0;
};

// Direct sparse solve with iterative refinement until the residual drops
// below 1e-10 max(1, |b|_inf). Rows are equilibrated to unit infinity norm
// first (an exactly equivalent system), and the residual contract is
// enforced there: without it, cluster-driven weight magnitudes put the
// attainable double-precision residual above any fixed absolute target.
// Throws on singular factorization (with the solver's pivot report) or an
// unmet residual after refinement (with the residual history).
Vector sparse_solve(const Eigen::SparseMatrix<double>& a, const Vector& b,
                    double* residual_out = nullptr, int* steps_out = nullptr);

// Closed-manifold reaction problem (diag(a) - L) U = f, a > 0 pointwise.
Solution solve_closed(const SparseOperator& lap, const Vector& a,
                      const Vector& f);

// Homogeneous Dirichlet volume-constraint problem: the principal submatrix
// of L on the index set s solves L_S U_S = f_S, everything outside s is
// pinned to zero.
Solution solve_dirichlet(const SparseOperator& lap, const std::vector<int>& s,
                         const Vector& f);

// Lower estimate of |A^{-1}|_inf via the Hager power iteration on the
// 1-norm of A^{-T} (both factorizations are direct).
double inv_norm_estimate(const Eigen::SparseMatrix<double>& a);

// Discrete max-principle diagnostic on the row set s. Checks both
// implications: L v >= 0 on s forces the closure max onto the neighbors
// outside s, and L v <= 0 on s forces the closure min there likewise.
struct MaxPrincipleReport {
  bool lap_nonneg = false;   // (L v)_i >= -tol for all i in s
  bool lap_nonpos = false;
  bool max_on_ring = false;  // max over closure attained outside s
  bool min_on_ring = false;
  std::vector<int> max_violations;  // i in s with v_i above the ring max
  std::vector<int> min_violations;
};

MaxPrincipleReport check_discrete_max_principle(const SparseOperator& lap,
                                                const std::vector<int>& s,
                                                const Vector& v,
                                                double tol = 1e-9);

// Solution export: point index, intrinsic coordinates when known, solved
// value, exact value and absolute error when given.
void save_solution(const std::string& path, const PointCloud& cloud,
                   const Vector& u, const Vector* exact = nullptr);

}  // namespace gfdm
