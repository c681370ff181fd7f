#pragma once

#include <vector>

#include "gfdm/gmls.hpp"
#include "gfdm/lp.hpp"

namespace gfdm {

struct StabilizeOptions {
  double c_tol = 1e-6;  // relaxation level below which a row counts as
                        // diagonally dominant
  bool force = false;   // keep raw weights for nonnegative-diagonal rows
                        // instead of skipping them (marked as fallbacks)
  bool repair_nonnegative = false;  // attempt the solve on nonnegative-
                                    // diagonal rows too (uncapped C, the sign
                                    // bound pulls the diagonal to <= 0);
                                    // infeasible rows keep raw weights. For
                                    // closed-manifold solves, where every row
                                    // enters the linear system.
};

struct StabilizedRow {
  Vector w;          // stabilized weights, same layout as the raw row
  double c = 0.0;    // optimal relaxation level
  bool feasible = false;
  bool diagonally_dominant = false;  // c <= c_tol
  bool fallback_used = false;        // solver stalled, raw weights kept
};

// Replace one raw weight row by the minimum-relaxation stabilized row:
// minimize C subject to the polynomial consistency equalities
// sum_k (w_hat_k - w_k) Phi_{k,j} = 0, w_hat_1 <= 0, w_hat_k + C >= 0 for
// k >= 2, and 0 <= C <= |min_{k>=2} w_k|. Requires w_1 < 0; the candidate
// (w_hat = w, C = |min_{k>=2} w_k|) is checked feasible before the solve and
// serves as the fallback if the solver stalls.
//
// Under opt.repair_nonnegative a row with w_1 >= 0 is accepted as well: the
// upper bound on C is dropped (no feasible candidate exists a priori) and an
// infeasible or stalled solve returns the raw row with feasible = false.
StabilizedRow stabilize_row(const RowWeights& raw,
                            const StabilizeOptions& opt = {});

struct StabilizeReport {
  int rows_total = 0;
  int rows_stabilized = 0;
  int rows_skipped = 0;   // w_1 >= 0, raw weights kept
  int fallbacks = 0;      // stalled solves plus forced pass-throughs
  int rows_over_tol = 0;  // stabilized rows with c > c_tol
  double c_max = 0.0;
  std::vector<double> c;        // per point; NaN where skipped
  std::vector<bool> fallback;   // per point
};

// Stabilize every row with a negative first weight; other rows keep their
// raw weights (skipped, or counted as fallbacks under opt.force), unless
// opt.repair_nonnegative asks for the solve on them too. The sparsity
// pattern of the result matches the raw assembly exactly.
SparseOperator stabilize_operator(const std::vector<RowWeights>& rows,
                                  const StabilizeOptions& opt = {},
                                  StabilizeReport* report = nullptr);

// Per-row relaxation levels as CSV: point index, C, feasible, fallback.
void save_stabilize_report(const std::string& path,
                           const StabilizeReport& report);

}  // namespace gfdm
