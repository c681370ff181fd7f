#include "gfdm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <utility>

namespace gfdm {

// phi(r) = (1 + s r) exp(-s r); phi'(r)/r = -s^2 exp(-s r), finite at r = 0.
double rbf_phi(double s, double r) { return (1.0 + s * r) * std::exp(-s * r); }
double rbf_phi_dr_over_r(double s, double r) {
  return -s * s * std::exp(-s * r);
}

RowWeights rbf_fd_row_weights(const Matrix& stencil_coords,
                              const std::vector<Matrix>& stencil_bases,
                              const RbfConfig& cfg, int base_index) {
  const int k = static_cast<int>(stencil_coords.rows());
  if (k < 2) {
    std::ostringstream msg;
    msg << "rbf stencil at point " << base_index << " has " << k
        << " points, need at least 2";
    throw Error(msg.str());
  }
  if (static_cast<int>(stencil_bases.size()) != k) {
    throw Error("rbf stencil bases do not match the stencil size");
  }
  if (!(cfg.s > 0.0)) {
    throw Error("rbf shape parameter must be positive");
  }
  const int d = static_cast<int>(stencil_bases[0].cols());

  Matrix r(k, k);
  for (int i = 0; i < k; ++i) {
    r(i, i) = 0.0;
    for (int j = i + 1; j < k; ++j) {
      const double rij = (stencil_coords.row(i) - stencil_coords.row(j)).norm();
      r(i, j) = rij;
      r(j, i) = rij;
    }
  }
  Matrix a(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = rbf_phi(cfg.s, r(i, j));

  // The kernel matrix flattens toward rank one as the stencil shrinks
  // relative to 1/s; refuse to differentiate noise.
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(k - 1);
  if (!(lmin > 0.0) || lmax / lmin > 1e12) {
    std::ostringstream msg;
    msg << "rbf kernel matrix at point " << base_index
        << " is numerically singular (condition "
        << (lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity())
        << "); try a different shape parameter";
    throw Error(msg.str());
  }
  const Matrix ainv = es.eigenvectors() *
                      es.eigenvalues().cwiseInverse().asDiagonal() *
                      es.eigenvectors().transpose();

  // B_l(j, c) = t_l(x_j) . grad phi(|x - x_c|) at x = x_j.
  Vector w = Vector::Zero(k);
  Matrix bl(k, k);
  for (int l = 0; l < d; ++l) {
    for (int j = 0; j < k; ++j) {
      const Vector tl = stencil_bases[j].col(l);
      for (int c = 0; c < k; ++c) {
        const Vector diff =
            (stencil_coords.row(j) - stencil_coords.row(c)).transpose();
        bl(j, c) = rbf_phi_dr_over_r(cfg.s, r(j, c)) * tl.dot(diff);
      }
    }
    const Matrix g = bl * ainv;
    w += (g.row(0) * g).transpose();
  }

  RowWeights out;
  out.base = base_index;
  out.w = std::move(w);
  out.h_scale = 0.0;
  return out;
}

SparseOperator assemble_rbf_operator(const Matrix& points,
                                     const NeighborTable& knn,
                                     const Frame& frames,
                                     const RbfConfig& cfg) {
  const int n = knn.n_points();
  const int k = knn.k();
  if (static_cast<int>(points.rows()) != n) {
    throw Error("rbf assembly: point count does not match the neighbor table");
  }
  if (static_cast<int>(frames.basis.size()) != n) {
    throw Error("rbf assembly: frame count does not match the neighbor table");
  }
  if (cfg.k > 0 && cfg.k != k) {
    std::ostringstream msg;
    msg << "rbf assembly: configured stencil size " << cfg.k
        << " does not match the neighbor table (" << k << ")";
    throw Error(msg.str());
  }

  SparseOperator op;
  op.cols = knn.idx;
  op.vals.resize(n, k);
  double worst = 0.0;
  Matrix coords(k, points.cols());
  std::vector<Matrix> bases(k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const int j = knn.idx(i, c);
      coords.row(c) = points.row(j);
      bases[c] = frames.basis[j];
    }
    const RowWeights row = rbf_fd_row_weights(coords, bases, cfg, i);
    op.vals.row(i) = row.w.transpose();
    const double asum = row.w.cwiseAbs().sum();
    if (asum > 0.0) worst = std::max(worst, std::abs(row.w.sum()) / asum);
  }
  op.const_residual = worst;
  return op;
}

namespace {

// One directed kernel edge with the bandwidth-free part of the exponent
// already folded in: contribution at bandwidth eps is exp(-arg / eps).
struct TuneArgs {
  std::vector<double> arg;
};

constexpr int kGridLow = -20;
constexpr int kGridHigh = 10;

// log-log slope of T(eps) = sum exp(-arg / eps) across the dyadic grid;
// returns the bandwidth at the geometric midpoint of the steepest interval.
double tune_bandwidth(const TuneArgs& ta, double* slope_out) {
  const int nt = kGridHigh - kGridLow + 1;
  std::vector<double> logt(nt);
  for (int t = 0; t < nt; ++t) {
    const double eps = std::ldexp(1.0, kGridLow + t);
    double sum = 0.0;
    for (double a : ta.arg) sum += std::exp(-a / eps);
    logt[t] = std::log(sum);
  }
  std::vector<double> slope(nt - 1);
  double smax = -std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 < nt; ++t) {
    slope[t] = (logt[t + 1] - logt[t]) / std::log(2.0);
    smax = std::max(smax, slope[t]);
  }
  if (!(smax >= 0.25)) {
    std::ostringstream msg;
    msg << "bandwidth auto-tune found no kernel transition over eps in [2^"
        << kGridLow << ", 2^" << kGridHigh << "] (max criterion slope "
        << smax << ")";
    throw Error(msg.str());
  }
  // Ties within 0.01 resolve to the smallest bandwidth so a flat plateau
  // picks its left edge deterministically.
  int best = 0;
  while (slope[best] < smax - 0.01) ++best;
  if (slope_out != nullptr) *slope_out = slope[best];
  return std::ldexp(std::sqrt(2.0), kGridLow + best);
}

struct VbdmStages {
  NeighborTable knn;
  Vector rho0;
  Vector rho;
  double eps0 = 0.0;
};

TuneArgs directed_args(const NeighborTable& knn, const Vector& rho,
                       double denom) {
  TuneArgs ta;
  const int n = knn.n_points();
  const int k = knn.k();
  ta.arg.reserve(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const int j = knn.idx(i, c);
      const double dist = knn.dist(i, c);
      ta.arg.push_back(dist * dist / (denom * rho[i] * rho[j]));
    }
  }
  return ta;
}

VbdmStages make_stages(const Matrix& points, const VbdmConfig& cfg) {
  const int n = static_cast<int>(points.rows());
  if (cfg.k2 < 2) throw Error("vbdm needs k2 >= 2");
  if (cfg.k1 < cfg.k2) throw Error("vbdm needs k1 >= k2");
  if (cfg.k1 > n) throw Error("vbdm needs k1 <= the number of points");
  if (cfg.d < 1) throw Error("vbdm needs intrinsic dimension >= 1");

  VbdmStages st;
  st.knn = build_knn(points, cfg.k1);

  // Pilot bandwidth: root-mean-square distance to the k2 nearest neighbors.
  st.rho0.resize(n);
  for (int i = 0; i < n; ++i) {
    double ssum = 0.0;
    for (int c = 1; c < cfg.k2; ++c) ssum += st.knn.dist(i, c) * st.knn.dist(i, c);
    st.rho0[i] = std::sqrt(ssum / (cfg.k2 - 1));
    if (!(st.rho0[i] > 0.0)) {
      std::ostringstream msg;
      msg << "vbdm pilot bandwidth vanished at point " << i
          << " (duplicate neighbors)";
      throw Error(msg.str());
    }
  }

  // Density stage: pilot kernel exp(-r^2 / (2 eps0 rho0_i rho0_j)) with its
  // own tuned bandwidth. A fixed cfg.eps bypasses the tune here too.
  st.eps0 = cfg.eps > 0.0
                ? cfg.eps
                : tune_bandwidth(directed_args(st.knn, st.rho0, 2.0), nullptr);
  Vector q = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int c = 0; c < cfg.k1; ++c) {
      const int j = st.knn.idx(i, c);
      const double dist = st.knn.dist(i, c);
      sum += std::exp(-dist * dist / (2.0 * st.eps0 * st.rho0[i] * st.rho0[j]));
    }
    q[i] = sum / std::pow(st.rho0[i], cfg.d);
  }
  // Normalizing the density estimate to mean one keeps rho dimensionless,
  // so the tuned eps carries the full squared-length scale: doubling all
  // coordinates multiplies the selected eps by four.
  q /= q.mean();
  st.rho.resize(n);
  for (int i = 0; i < n; ++i) st.rho[i] = std::pow(q[i], cfg.beta);
  return st;
}

}  // namespace

double vbdm_autotune_eps(const Matrix& points, const VbdmConfig& cfg,
                         double* slope_out) {
  const VbdmStages st = make_stages(points, cfg);
  return tune_bandwidth(directed_args(st.knn, st.rho, 4.0), slope_out);
}

VbdmResult vbdm_laplacian(const Matrix& points, const VbdmConfig& cfg) {
  const VbdmStages st = make_stages(points, cfg);
  const int n = st.knn.n_points();
  const int k1 = st.knn.k();

  VbdmResult out;
  out.eps0 = st.eps0;
  if (cfg.eps > 0.0) {
    out.eps = cfg.eps;
    out.slope = 0.0;
  } else {
    out.eps = tune_bandwidth(directed_args(st.knn, st.rho, 4.0), &out.slope);
  }

  // Symmetrize the support: keep the edge when either endpoint lists the
  // other. The kernel value is a symmetric function of the pair, so one
  // evaluation serves both directions.
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  for (int i = 0; i < n; ++i) rows[i].reserve(2 * k1);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k1; ++c) {
      const int j = st.knn.idx(i, c);
      rows[i].emplace_back(j, st.knn.dist(i, c));
      if (j != i) rows[j].emplace_back(i, st.knn.dist(i, c));
    }
  }
  std::size_t width = 0;
  for (int i = 0; i < n; ++i) {
    auto& row = rows[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end(),
                          [](const auto& a, const auto& b) {
                            return a.first == b.first;
                          }),
              row.end());
    width = std::max(width, row.size());
  }

  // Kernel, sampling-bias correction, then row normalization.
  const double alpha = -0.25 * cfg.d + 0.5;
  std::vector<std::vector<double>> kval(n);
  Vector qrho(n);
  for (int i = 0; i < n; ++i) {
    kval[i].resize(rows[i].size());
    double sum = 0.0;
    for (std::size_t e = 0; e < rows[i].size(); ++e) {
      const auto& [j, dist] = rows[i][e];
      const double v =
          std::exp(-dist * dist / (4.0 * out.eps * st.rho[i] * st.rho[j]));
      kval[i][e] = v;
      sum += v;
    }
    qrho[i] = sum / std::pow(st.rho[i], cfg.d);
  }

  SparseOperator op;
  op.cols.setConstant(n, static_cast<int>(width), 0);
  op.vals.setZero(n, static_cast<int>(width));
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& row = rows[i];
    double dsum = 0.0;
    for (std::size_t e = 0; e < row.size(); ++e) {
      kval[i][e] /= std::pow(qrho[i], alpha) * std::pow(qrho[row[e].first], alpha);
      dsum += kval[i][e];
    }
    // Diagonal = negated off-diagonal sum, so each row annihilates
    // constants to round-off by construction.
    const double fac = 1.0 / (st.rho[i] * st.rho[i] * out.eps);
    double diag = 0.0;
    int slot = 1;
    double asum = 0.0;
    for (std::size_t e = 0; e < row.size(); ++e) {
      const int j = row[e].first;
      if (j == i) continue;
      const double w = kval[i][e] / dsum * fac;
      op.cols(i, slot) = j;
      op.vals(i, slot) = w;
      diag -= w;
      asum += std::abs(w);
      ++slot;
    }
    op.cols(i, 0) = i;
    op.vals(i, 0) = diag;
    asum += std::abs(diag);
    // Pad short rows against the diagonal with zero weight.
    for (; slot < static_cast<int>(width); ++slot) op.cols(i, slot) = i;
    double rsum = 0.0;
    for (int c = 0; c < static_cast<int>(width); ++c) rsum += op.vals(i, c);
    if (asum > 0.0) worst = std::max(worst, std::abs(rsum) / asum);
  }
  op.const_residual = worst;
  out.op = std::move(op);
  return out;
}

}  // namespace gfdm
