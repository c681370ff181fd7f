#include "gfdm/stabilize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace gfdm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// LP layout: x = (C, w_hat_1..w_hat_K, s_2..s_K), slack s_k turning
// w_hat_k + C >= 0 into the equality w_hat_k + C - s_k = 0. Weights arrive
// divided by scale = max|w| so every entry is O(1) against the solver's
// absolute tolerances; C converts back by the same factor.
LpProblem build_row_lp(const Matrix& phi, const Vector& wn, double cmax) {
  const int k = static_cast<int>(wn.size());
  const int m = static_cast<int>(phi.cols());
  const int nv = 2 * k;
  const int rows = m + (k - 1);

  LpProblem lp;
  lp.c = Vector::Zero(nv);
  lp.c[0] = 1.0;
  lp.a = Matrix::Zero(rows, nv);
  lp.b = Vector::Zero(rows);
  lp.lb = Vector::Constant(nv, -kInf);
  lp.ub = Vector::Constant(nv, kInf);

  lp.lb[0] = 0.0;
  lp.ub[0] = cmax;
  lp.ub[1] = 0.0;  // w_hat_1 <= 0, lower bound stays open
  for (int j = k + 1; j < nv; ++j) lp.lb[j] = 0.0;

  for (int j = 0; j < m; ++j) {
    lp.a.row(j).segment(1, k) = phi.col(j).transpose();
    lp.b[j] = phi.col(j).dot(wn);
    const double norm = phi.col(j).cwiseAbs().maxCoeff();
    if (norm > 0.0) {
      lp.a.row(j) /= norm;
      lp.b[j] /= norm;
    }
  }
  for (int i = 2; i <= k; ++i) {
    const int r = m + i - 2;
    lp.a(r, 0) = 1.0;
    lp.a(r, i) = 1.0;
    lp.a(r, k + i - 1) = -1.0;
  }
  return lp;
}

// The existence proposition's candidate: keep the raw weights and relax by
// the worst off-diagonal deficit. Feasibility of this point is a theorem,
// so a failure here is a numerical emergency, not a data condition.
bool witness_feasible(const LpProblem& lp, const Vector& wn, double cmax,
                      double tol) {
  const int k = static_cast<int>(wn.size());
  Vector x = Vector::Zero(lp.c.size());
  x[0] = cmax;
  x.segment(1, k) = wn;
  for (int i = 2; i <= k; ++i) x[k + i - 1] = wn[i - 1] + cmax;
  if (wn[0] > 0.0) return false;
  for (int j = 0; j < x.size(); ++j)
    if (x[j] < lp.lb[j] - tol || x[j] > lp.ub[j] + tol) return false;
  return (lp.a * x - lp.b).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

StabilizedRow stabilize_row(const RowWeights& raw, const StabilizeOptions& opt) {
  const int k = static_cast<int>(raw.w.size());
  if (k < 2) throw Error("stabilize_row: stencil too small");
  const bool nonneg = raw.w[0] >= 0.0;
  if (nonneg && !opt.repair_nonnegative)
    throw Error("stabilize_row: first weight is not negative at point " +
                std::to_string(raw.base));

  const double scale = raw.w.cwiseAbs().maxCoeff();
  const Vector wn = raw.w / scale;
  // A negative diagonal certifies the witness (raw weights, C = worst
  // deficit), which also caps C. A nonnegative diagonal has no candidate:
  // leave C uncapped and let the solver decide feasibility.
  const double cmax = nonneg ? kInf : std::abs(wn.tail(k - 1).minCoeff());

  LpProblem lp = build_row_lp(raw.phi, wn, cmax);
  if (!nonneg && !witness_feasible(lp, wn, cmax, 1e-9))
    throw Error("stabilize_row: witness infeasible at point " +
                std::to_string(raw.base));

  StabilizedRow out;
  const LpSolution sol = lp_solve(lp);
  if (nonneg && sol.status != LpStatus::Optimal) {
    // Sign repair failed; keep the raw row and say so.
    out.w = raw.w;
    out.c = std::numeric_limits<double>::quiet_NaN();
    out.feasible = false;
    out.fallback_used = true;
    return out;
  }
  if (sol.status == LpStatus::Stalled) {
    out.w = raw.w;
    out.c = scale * cmax;
    out.feasible = true;
    out.fallback_used = true;
    out.diagonally_dominant = out.c <= opt.c_tol;
    return out;
  }
  if (sol.status != LpStatus::Optimal)
    throw Error("stabilize_row: solver returned " +
                lp_status_name(sol.status) + " at point " +
                std::to_string(raw.base) + " (stencil size " +
                std::to_string(k) + ")");

  Vector wn_hat = sol.x.segment(1, k);
  double c_norm = sol.x[0];
  double repair = 0.0;

  // The solver can stop at a vertex whose basis matrix is ill conditioned,
  // leaving a moment residual on the weights that would trip the drift gate
  // below. Project back onto the moment constraints through the stencil
  // basis and re-account whatever dominance deficit the correction reopens.
  // The trigger is the gate constant itself: residuals under the gate are
  // harmless, and the min-norm correction can cost far more dominance than
  // the accuracy it buys.
  const Vector moment_err = raw.phi.transpose() * (wn_hat - wn);
  if (moment_err.cwiseAbs().maxCoeff() > 1e-8) {
    const Vector delta = Matrix(raw.phi.transpose())
                             .completeOrthogonalDecomposition()
                             .solve(moment_err);
    wn_hat -= delta;
    repair = delta.cwiseAbs().maxCoeff();
    c_norm = std::max(c_norm, -wn_hat.tail(k - 1).minCoeff());
    c_norm = std::max(c_norm, 0.0);
    if (wn_hat[0] > 0.0 || (!nonneg && wn_hat[0] == 0.0)) {
      // The correction flipped the diagonal sign: keep the raw row.
      out.w = raw.w;
      out.fallback_used = true;
      if (nonneg) {
        out.c = std::numeric_limits<double>::quiet_NaN();
        out.feasible = false;
      } else {
        out.c = scale * cmax;
        out.feasible = true;
        out.diagonally_dominant = out.c <= opt.c_tol;
      }
      return out;
    }
  }

  out.w = scale * wn_hat;
  out.c = scale * c_norm;
  out.feasible = true;
  out.diagonally_dominant = out.c <= opt.c_tol;

  // Consistency must survive the swap: the stabilized row reproduces every
  // polynomial moment of the raw row.
  const double drift =
      (raw.phi.transpose() * (out.w - raw.w)).cwiseAbs().maxCoeff();
  if (drift > 1e-8 * scale)
    throw Error("stabilize_row: consistency drift " + std::to_string(drift) +
                " at point " + std::to_string(raw.base));
  if (out.c > scale * (cmax + repair) + 1e-9 * scale)
    throw Error("stabilize_row: objective exceeds witness at point " +
                std::to_string(raw.base));
  return out;
}

SparseOperator stabilize_operator(const std::vector<RowWeights>& rows,
                                  const StabilizeOptions& opt,
                                  StabilizeReport* report) {
  const int n = static_cast<int>(rows.size());
  if (n == 0) throw Error("stabilize_operator: no rows");
  // Widened stencils make the rows ragged; pad everything to the widest row
  // with explicit zeros at the base column.
  int kmax = 0;
  for (const RowWeights& r : rows)
    kmax = std::max(kmax, static_cast<int>(r.w.size()));

  SparseOperator op;
  op.cols.resize(n, kmax);
  op.vals.resize(n, kmax);

  StabilizeReport rep;
  rep.rows_total = n;
  rep.c.assign(n, std::numeric_limits<double>::quiet_NaN());
  rep.fallback.assign(n, false);

  for (int i = 0; i < n; ++i) {
    const RowWeights& raw = rows[i];
    const int k = static_cast<int>(raw.w.size());
    if (static_cast<int>(raw.neighbors.size()) != k)
      throw Error("stabilize_operator: rows lack neighbor indices");
    for (int j = 0; j < k; ++j) op.cols(i, j) = raw.neighbors[j];
    for (int j = k; j < kmax; ++j) {
      op.cols(i, j) = raw.neighbors[0];
      op.vals(i, j) = 0.0;
    }

    if (raw.w[0] >= 0.0 && !opt.repair_nonnegative) {
      // Boundary-flagged row: the stabilization hypothesis fails, keep raw.
      for (int j = 0; j < k; ++j) op.vals(i, j) = raw.w[j];
      if (opt.force) {
        ++rep.fallbacks;
        rep.fallback[i] = true;
      } else {
        ++rep.rows_skipped;
      }
      continue;
    }

    StabilizedRow srow = stabilize_row(raw, opt);
    for (int j = 0; j < k; ++j) op.vals(i, j) = srow.w[j];
    if (!srow.feasible) {
      // Sign repair found no consistent row with a nonpositive diagonal.
      ++rep.fallbacks;
      rep.fallback[i] = true;
      continue;
    }
    ++rep.rows_stabilized;
    rep.c[i] = srow.c;
    rep.c_max = std::max(rep.c_max, srow.c);
    if (srow.c > opt.c_tol) ++rep.rows_over_tol;
    if (srow.fallback_used) {
      ++rep.fallbacks;
      rep.fallback[i] = true;
    }
  }

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = op.vals.row(i).sum();
    const double a = op.vals.row(i).cwiseAbs().sum();
    if (a > 0.0) worst = std::max(worst, std::abs(s) / a);
  }
  op.const_residual = worst;

  if (report) *report = std::move(rep);
  return op;
}

void save_stabilize_report(const std::string& path,
                           const StabilizeReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  std::fprintf(f, "point,c,feasible,fallback\n");
  for (size_t i = 0; i < report.c.size(); ++i) {
    const bool skipped = std::isnan(report.c[i]);
    std::fprintf(f, "%zu,%.17g,%d,%d\n", i, skipped ? 0.0 : report.c[i],
                 skipped ? 0 : 1, report.fallback[i] ? 1 : 0);
  }
  std::fclose(f);
}

}  // namespace gfdm
