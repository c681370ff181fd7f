#include "gfdm/pde.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace gfdm {

namespace {

InteriorSplit split_from_w1(const Vector& w1, const PointCloud& cloud) {
  InteriorSplit out;
  const int n = static_cast<int>(w1.size());
  for (int i = 0; i < n; ++i) {
    if (w1[i] < 0.0) {
      out.interior.push_back(i);
    } else {
      out.flagged.push_back(i);
      if (w1[i] == 0.0) ++out.zero_ties;
    }
  }
  if (cloud.spec && cloud.spec->has_boundary() && !out.flagged.empty()) {
    const Vector bd = boundary_distances(cloud);
    double worst = 0.0;
    for (int i : out.flagged) worst = std::max(worst, bd[i]);
    out.eps_star = worst;
  }
  return out;
}

}  // namespace

InteriorSplit detect_interior(const std::vector<RowWeights>& rows,
                              const PointCloud& cloud) {
  const int n = static_cast<int>(rows.size());
  if (n != cloud.n_points())
    throw Error("detect_interior: row count does not match the cloud");
  Vector w1(n);
  for (int i = 0; i < n; ++i) w1[i] = rows[i].w[0];
  return split_from_w1(w1, cloud);
}

InteriorSplit detect_interior(const SparseOperator& op,
                              const PointCloud& cloud) {
  if (op.n_points() != cloud.n_points())
    throw Error("detect_interior: operator does not match the cloud");
  return split_from_w1(op.vals.col(0), cloud);
}

std::vector<int> restrict_eps(const PointCloud& cloud, double eps) {
  if (!cloud.spec || !cloud.spec->has_boundary())
    throw Error("restrict_eps: manifold has no boundary");
  const Vector bd = boundary_distances(cloud);
  std::vector<int> keep;
  for (int i = 0; i < cloud.n_points(); ++i)
    if (bd[i] > eps) keep.push_back(i);
  return keep;
}

Vector sparse_solve(const Eigen::SparseMatrix<double>& a, const Vector& b,
                    double* residual_out, int* steps_out) {
  if (a.rows() != a.cols()) throw Error("sparse_solve: matrix not square");
  if (b.size() != a.rows()) throw Error("sparse_solve: rhs length mismatch");
  const int n = static_cast<int>(a.rows());

  // Row equilibration: clustered samples push single weights to ~1e7, which
  // lifts the raw double-precision residual floor above the contract. The
  // scaled system is exactly equivalent and the contract applies to it.
  Vector rn = Vector::Zero(n);
  for (int k = 0; k < a.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
      rn[it.row()] = std::max(rn[it.row()], std::abs(it.value()));
  for (int i = 0; i < n; ++i)
    if (rn[i] == 0.0)
      throw Error("sparse_solve: row " + std::to_string(i) + " is empty");

  Eigen::SparseMatrix<double> as = a;
  for (int k = 0; k < as.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(as, k); it; ++it)
      it.valueRef() /= rn[it.row()];
  const Vector bs = b.cwiseQuotient(rn);

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(as);
  if (lu.info() != Eigen::Success)
    throw Error("sparse_solve: factorization failed (" +
                lu.lastErrorMessage() + ")");

  const double target = 1e-10 * std::max(1.0, bs.cwiseAbs().maxCoeff());
  Vector x = lu.solve(bs);
  Vector r = bs - as * x;
  double res = r.cwiseAbs().maxCoeff();
  int steps = 0;
  std::ostringstream history;
  history << res;
  while (res > target && steps < 5) {
    x += lu.solve(r);
    r = bs - as * x;
    res = r.cwiseAbs().maxCoeff();
    ++steps;
    history << " -> " << res;
  }
  if (res > target)
    throw Error("sparse_solve: residual stuck above contract after " +
                std::to_string(steps) + " refinements (" + history.str() +
                ")");
  if (residual_out) *residual_out = res;
  if (steps_out) *steps_out = steps;
  return x;
}

Solution solve_closed(const SparseOperator& lap, const Vector& a,
                      const Vector& f) {
  const int n = lap.n_points();
  if (a.size() != n || f.size() != n)
    throw Error("solve_closed: field lengths do not match the operator");
  if (a.minCoeff() <= 0.0)
    throw Error("solve_closed: reaction field must be positive");

  Eigen::SparseMatrix<double> sys = -lap.to_sparse();
  for (int i = 0; i < n; ++i) sys.coeffRef(i, i) += a[i];
  sys.makeCompressed();

  Solution sol;
  sol.u = sparse_solve(sys, f, &sol.residual, &sol.refine_steps);
  return sol;
}

Solution solve_dirichlet(const SparseOperator& lap, const std::vector<int>& s,
                         const Vector& f) {
  const int n = lap.n_points();
  if (f.size() != n)
    throw Error("solve_dirichlet: forcing length does not match the operator");
  if (s.empty()) throw Error("solve_dirichlet: empty row set");

  std::vector<int> local(static_cast<size_t>(n), -1);
  for (size_t t = 0; t < s.size(); ++t) {
    if (s[t] < 0 || s[t] >= n)
      throw Error("solve_dirichlet: index out of range");
    if (local[static_cast<size_t>(s[t])] != -1)
      throw Error("solve_dirichlet: duplicate index in row set");
    local[static_cast<size_t>(s[t])] = static_cast<int>(t);
  }

  const int ns = static_cast<int>(s.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(ns) * static_cast<size_t>(lap.k()));
  Vector fs(ns);
  for (int t = 0; t < ns; ++t) {
    const int i = s[static_cast<size_t>(t)];
    fs[t] = f[i];
    for (int j = 0; j < lap.k(); ++j) {
      const int lj = local[static_cast<size_t>(lap.cols(i, j))];
      if (lj >= 0) trips.emplace_back(t, lj, lap.vals(i, j));
    }
  }
  Eigen::SparseMatrix<double> sub(ns, ns);
  sub.setFromTriplets(trips.begin(), trips.end());

  Solution sol;
  Vector us = sparse_solve(sub, fs, &sol.residual, &sol.refine_steps);
  sol.u = Vector::Zero(n);
  for (int t = 0; t < ns; ++t) sol.u[s[static_cast<size_t>(t)]] = us[t];
  return sol;
}

double inv_norm_estimate(const Eigen::SparseMatrix<double>& a) {
  // |A^{-1}|_inf = |A^{-T}|_1, estimated by Hager's method: alternate
  // solves with A^T (applies A^{-T}) and A (applies its transpose).
  const int n = static_cast<int>(a.rows());
  if (n == 0) throw Error("inv_norm_estimate: empty matrix");

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu, lut;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw Error("inv_norm_estimate: factorization failed (" +
                lu.lastErrorMessage() + ")");
  Eigen::SparseMatrix<double> at = a.transpose();
  lut.compute(at);
  if (lut.info() != Eigen::Success)
    throw Error("inv_norm_estimate: transpose factorization failed (" +
                lut.lastErrorMessage() + ")");

  Vector x = Vector::Constant(n, 1.0 / n);
  double est = 0.0;
  for (int iter = 0; iter < 5; ++iter) {
    Vector y = lut.solve(x);
    est = y.cwiseAbs().sum();
    Vector xi(n);
    for (int i = 0; i < n; ++i) xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    Vector z = lu.solve(xi);
    int j = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (zmax <= z.dot(x) + 1e-14 * zmax) break;
    x.setZero();
    x[j] = 1.0;
  }
  return est;
}

MaxPrincipleReport check_discrete_max_principle(const SparseOperator& lap,
                                                const std::vector<int>& s,
                                                const Vector& v,
                                                double tol) {
  const int n = lap.n_points();
  if (v.size() != n)
    throw Error("check_discrete_max_principle: field length mismatch");
  std::vector<char> in_s(static_cast<size_t>(n), 0);
  for (int i : s) in_s[static_cast<size_t>(i)] = 1;

  std::set<int> ring_set;
  for (int i : s)
    for (int j = 0; j < lap.k(); ++j) {
      const int c = lap.cols(i, j);
      if (!in_s[static_cast<size_t>(c)]) ring_set.insert(c);
    }
  if (ring_set.empty())
    throw Error("check_discrete_max_principle: row set has no exterior "
                "neighbors");

  MaxPrincipleReport rep;
  rep.lap_nonneg = true;
  rep.lap_nonpos = true;
  for (int i : s) {
    double acc = 0.0;
    for (int j = 0; j < lap.k(); ++j) acc += lap.vals(i, j) * v[lap.cols(i, j)];
    if (acc < -tol) rep.lap_nonneg = false;
    if (acc > tol) rep.lap_nonpos = false;
  }

  double ring_max = -std::numeric_limits<double>::infinity();
  double ring_min = std::numeric_limits<double>::infinity();
  for (int c : ring_set) {
    ring_max = std::max(ring_max, v[c]);
    ring_min = std::min(ring_min, v[c]);
  }
  for (int i : s) {
    if (v[i] > ring_max + tol) rep.max_violations.push_back(i);
    if (v[i] < ring_min - tol) rep.min_violations.push_back(i);
  }
  rep.max_on_ring = rep.max_violations.empty();
  rep.min_on_ring = rep.min_violations.empty();
  return rep;
}

void save_solution(const std::string& path, const PointCloud& cloud,
                   const Vector& u, const Vector* exact) {
  if (u.size() != cloud.n_points())
    throw Error("save_solution: field length does not match the cloud");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  const bool coords = cloud.has_intrinsic();
  std::fprintf(f, "point");
  if (coords)
    for (int d = 0; d < cloud.intrinsic_dim; ++d) std::fprintf(f, ",t%d", d);
  std::fprintf(f, ",u");
  if (exact) std::fprintf(f, ",u_exact,abs_error");
  std::fprintf(f, "\n");
  for (int i = 0; i < cloud.n_points(); ++i) {
    std::fprintf(f, "%d", i);
    if (coords)
      for (int d = 0; d < cloud.intrinsic_dim; ++d)
        std::fprintf(f, ",%.17g", cloud.intrinsic(i, d));
    std::fprintf(f, ",%.17g", u[i]);
    if (exact)
      std::fprintf(f, ",%.17g,%.17g", (*exact)[i],
                   std::abs(u[i] - (*exact)[i]));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

}  // namespace gfdm
