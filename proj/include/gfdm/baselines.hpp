#pragma once

#include <vector>

#include "gfdm/gmls.hpp"
#include "gfdm/stencil.hpp"

namespace gfdm {

// Radial-basis finite differences with the Matern kernel
// phi(r) = (1 + s r) exp(-s r). Same stencil geometry as the least-squares
// rows, with the kernel interpolation matrix in place of the polynomial
// basis. No polynomial augmentation, so constants are not annihilated.
struct RbfConfig {
  double s = 0.5;  // shape parameter, inverse length
  int k = 0;       // expected stencil size; 0 skips the consistency check
};

// Kernel value and the radial-derivative quotient phi'(r)/r, which stays
// finite at r = 0 (limit -s^2). Exposed so the kernel can be checked in
// isolation.
double rbf_phi(double s, double r);
double rbf_phi_dr_over_r(double s, double r);

// One Laplacian row: weights = first row of sum_l (B_l A^{-1})^2 where
// A_jk = phi(|x_j - x_k|) and B_l holds the tangential kernel derivatives
// at the stencil points. Throws when cond(A) exceeds 1e12 (the kernel
// matrix flattens as stencils shrink; a different shape parameter moves
// the onset).
RowWeights rbf_fd_row_weights(const Matrix& stencil_coords,
                              const std::vector<Matrix>& stencil_bases,
                              const RbfConfig& cfg, int base_index = 0);

// Closed manifolds only: with a boundary the kernel rows lose any useful
// accuracy (no meaningful convergence), so boundaried inputs are refused
// at the harness level rather than produced silently here.
SparseOperator assemble_rbf_operator(const Matrix& points,
                                     const NeighborTable& knn,
                                     const Frame& frames,
                                     const RbfConfig& cfg);

// Variable-bandwidth diffusion-maps graph Laplacian. Neighbor counts k1
// (kernel support) and k2 (density stage) count the point itself, matching
// the stencil-size convention used everywhere else here.
struct VbdmConfig {
  int k1 = 0;
  int k2 = 0;
  int d = 2;          // intrinsic dimension
  double beta = -0.5; // bandwidth exponent on the estimated density
  // Kernel bandwidth; 0 = auto-tune. A fixed value bypasses both tuning
  // stages (the pilot kernel reuses it), which small clouds need: the
  // tuning criterion has no usable transition below a few dozen points.
  double eps = 0.0;
};

struct VbdmResult {
  SparseOperator op;
  double eps = 0.0;    // bandwidth used by the main kernel
  double eps0 = 0.0;   // bandwidth used by the density stage
  double slope = 0.0;  // kernel-sum criterion slope at the chosen eps
};

// Pipeline: root-mean-square distance to the k2 nearest neighbors sets the
// pilot bandwidth rho_0; a pilot kernel estimates the sampling density Q
// (normalized to mean one, which keeps the bandwidth field dimensionless
// and the tuned eps in squared-length units); rho = Q^beta feeds the main
// kernel exp(-r^2 / (4 eps rho_i rho_j)), truncated to k1 neighbors and
// symmetrized by keeping an edge when either endpoint lists the other;
// right-normalization by Q_rho^alpha with alpha = -d/4 + 1/2 removes the
// sampling bias; row normalization and the identity shift give
// L = P^{-2} (D^{-1} K - I) / eps. Row sums vanish by construction (the
// diagonal is the negated off-diagonal sum).
VbdmResult vbdm_laplacian(const Matrix& points, const VbdmConfig& cfg);

// Bandwidth selection: T(eps) = sum of all kernel entries over the
// truncated graph, swept across eps = 2^t for t in [-20, 10]; the chosen
// eps maximizes the log-log slope of T (ties within 0.01 resolve to the
// smallest bandwidth). A flat criterion (max slope < 0.25) throws, naming
// the swept grid.
double vbdm_autotune_eps(const Matrix& points, const VbdmConfig& cfg,
                         double* slope_out = nullptr);

}  // namespace gfdm
