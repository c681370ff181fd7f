#include "gfdm/lp.hpp"

#include <cmath>
#include <limits>

namespace gfdm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivTol = 1e-10;   // smallest usable pivot / reduced cost
constexpr double kFeasTol = 1e-9;   // phase-1 objective cutoff per unit of |b|

enum class VarState { Basic, AtLower, AtUpper, FreeZero };

// Full-tableau bounded simplex. Columns 0..nv-1 are structural, nv..nv+m-1
// are the phase-1 artificials (fixed to zero in phase 2). The tableau t is
// B^{-1} [A | A_art] and xb holds the basic variable values.
struct Tableau {
  int m = 0;
  int ntot = 0;
  Matrix t;
  Vector xb;
  std::vector<int> basis;       // basis[i] = column basic in row i
  std::vector<VarState> state;  // per column
  Vector lo, hi;                // working bounds per column
  Vector value_nb;              // value of each nonbasic column
  Matrix a0;                    // pristine constraint system [S A | I]
  Vector b0;                    // pristine rhs S b (S flips rows so the
                                // initial artificial values are nonnegative)

  double nonbasic_value(int j) const {
    switch (state[j]) {
      case VarState::AtLower: return lo[j];
      case VarState::AtUpper: return hi[j];
      default: return 0.0;
    }
  }
};

// Rebuild the tableau from the pristine data for the current basis. Each
// pivot applies a rank-1 update, so a long path (or one small pivot) leaves
// O(iters * eps / |pivot|) drift in t and xb; refactorizing resets that to
// factorization accuracy. Returns false on a singular basis (tableau kept).
bool refactor(Tableau& tb) {
  const int m = tb.m;
  if (m == 0) return true;
  Matrix bmat(m, m);
  for (int i = 0; i < m; ++i) bmat.col(i) = tb.a0.col(tb.basis[i]);
  const Eigen::FullPivLU<Matrix> lu(bmat);
  if (!lu.isInvertible()) return false;
  Vector rhs = tb.b0;
  for (int j = 0; j < tb.ntot; ++j) {
    if (tb.state[j] == VarState::Basic) continue;
    const double v = tb.nonbasic_value(j);
    if (v != 0.0) rhs -= tb.a0.col(j) * v;
  }
  tb.t = lu.solve(tb.a0);
  tb.xb = lu.solve(rhs);
  // One refinement pass: an ill-conditioned basis leaves O(eps / rcond)
  // error in the straight solve, which lands on the equality residual.
  tb.t += lu.solve(Matrix(tb.a0 - bmat * tb.t));
  tb.xb += lu.solve(Vector(rhs - bmat * tb.xb));
  return true;
}

// Infeasibility carried by the artificial columns, measured on the current
// basic values (refactor first for an honest number).
double artificial_sum(const Tableau& tb, int nv) {
  double s = 0.0;
  for (int i = 0; i < tb.m; ++i)
    if (tb.basis[i] >= nv) s += std::abs(tb.xb[i]);
  for (int j = nv; j < tb.ntot; ++j)
    if (tb.state[j] != VarState::Basic) s += tb.nonbasic_value(j);
  return s;
}

// One simplex phase: minimize cost^T x over the current tableau until no
// eligible entering column remains. Returns false when the pivot budget ran
// out. Bland's rule: scan columns in index order, take the first eligible
// one; ties in the ratio test break toward the smallest basic column index.
bool run_phase(Tableau& tb, const Vector& cost, long cap, long& iters,
               bool& unbounded) {
  const int m = tb.m;
  unbounded = false;
  for (;;) {
    if (iters >= cap) return false;
    if (iters > 0 && iters % 64 == 0) refactor(tb);  // cap update drift

    // Reduced costs d_j = c_j - c_B^T t(:,j), computed from the tableau.
    Vector cb(m);
    for (int i = 0; i < m; ++i) cb[i] = cost[tb.basis[i]];

    int enter = -1;
    int dir = 0;
    for (int j = 0; j < tb.ntot; ++j) {
      if (tb.state[j] == VarState::Basic) continue;
      if (tb.hi[j] - tb.lo[j] <= 0.0) continue;  // fixed column
      const double d = cost[j] - (m > 0 ? cb.dot(tb.t.col(j)) : 0.0);
      const bool can_up = tb.state[j] != VarState::AtUpper;
      const bool can_down = tb.state[j] != VarState::AtLower;
      if (can_up && d < -kPivTol) { enter = j; dir = +1; break; }
      if (can_down && d > kPivTol) { enter = j; dir = -1; break; }
    }
    if (enter < 0) return true;  // optimal for this phase

    // Ratio test: entering column moves by step >= 0 in direction dir and
    // each basic value changes by -dir * t(i, enter) * step.
    double step = tb.hi[enter] - tb.lo[enter];  // entering hits its far bound
    int leave_row = -1;
    bool leave_at_upper = false;
    for (int i = 0; i < m; ++i) {
      const double a = dir * tb.t(i, enter);
      double limit;
      bool hits_upper;
      if (a > kPivTol) {  // basic value decreases toward its lower bound
        if (tb.lo[tb.basis[i]] == -kInf) continue;
        limit = (tb.xb[i] - tb.lo[tb.basis[i]]) / a;
        hits_upper = false;
      } else if (a < -kPivTol) {  // basic value increases toward its upper
        if (tb.hi[tb.basis[i]] == kInf) continue;
        limit = (tb.xb[i] - tb.hi[tb.basis[i]]) / a;
        hits_upper = true;
      } else {
        continue;
      }
      if (limit < 0.0) limit = 0.0;  // round-off past a bound
      if (limit < step - kPivTol ||
          (limit < step + kPivTol && leave_row >= 0 &&
           tb.basis[i] < tb.basis[leave_row])) {
        step = limit;
        leave_row = i;
        leave_at_upper = hits_upper;
      }
    }

    if (step == kInf && leave_row < 0) {
      unbounded = true;
      return true;
    }
    ++iters;

    const double delta = dir * step;
    if (leave_row < 0) {
      // Bound flip: the entering column crosses the box to its other bound.
      if (m > 0) tb.xb -= delta * tb.t.col(enter);
      tb.state[enter] =
          dir > 0 ? VarState::AtUpper : VarState::AtLower;
      continue;
    }

    const double enter_value = tb.nonbasic_value(enter) + delta;
    const int leave_col = tb.basis[leave_row];

    // Move all basic values, then eliminate the entering column.
    tb.xb -= delta * tb.t.col(enter);
    const double piv = tb.t(leave_row, enter);
    tb.t.row(leave_row) /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == leave_row) continue;
      const double f = tb.t(i, enter);
      if (f != 0.0) tb.t.row(i) -= f * tb.t.row(leave_row);
    }
    tb.xb[leave_row] = enter_value;
    tb.basis[leave_row] = enter;
    tb.state[enter] = VarState::Basic;
    tb.state[leave_col] =
        leave_at_upper ? VarState::AtUpper : VarState::AtLower;
  }
}

}  // namespace

std::string lp_status_name(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    default: return "stalled";
  }
}

LpSolution lp_solve(const LpProblem& prob) {
  const int nv = static_cast<int>(prob.c.size());
  const int m = static_cast<int>(prob.a.rows());
  if (prob.a.size() > 0 && prob.a.cols() != nv)
    throw Error("lp_solve: constraint matrix has wrong column count");
  if (prob.b.size() != m)
    throw Error("lp_solve: rhs length does not match constraint rows");
  if (prob.lb.size() != nv || prob.ub.size() != nv)
    throw Error("lp_solve: bound vectors must match variable count");
  for (int j = 0; j < nv; ++j)
    if (prob.lb[j] > prob.ub[j])
      throw Error("lp_solve: lower bound exceeds upper bound");

  Tableau tb;
  tb.m = m;
  tb.ntot = nv + m;
  tb.lo.resize(tb.ntot);
  tb.hi.resize(tb.ntot);
  tb.state.assign(tb.ntot, VarState::AtLower);
  for (int j = 0; j < nv; ++j) {
    tb.lo[j] = prob.lb[j];
    tb.hi[j] = prob.ub[j];
    if (prob.lb[j] > -kInf)
      tb.state[j] = VarState::AtLower;
    else if (prob.ub[j] < kInf)
      tb.state[j] = VarState::AtUpper;
    else
      tb.state[j] = VarState::FreeZero;
  }

  // Residual of the nonbasic start decides each artificial's column sign so
  // every artificial starts basic with a nonnegative value.
  Vector x0(nv);
  for (int j = 0; j < nv; ++j) x0[j] = tb.nonbasic_value(j);
  Vector resid = prob.b - (m > 0 ? Vector(prob.a * x0) : Vector::Zero(m));

  tb.t.resize(m, tb.ntot);
  tb.xb.resize(m);
  tb.basis.resize(m);
  tb.b0.resize(m);
  for (int i = 0; i < m; ++i) {
    const double sign = resid[i] < 0.0 ? -1.0 : 1.0;
    tb.t.row(i).head(nv) = sign * prob.a.row(i);
    tb.t.row(i).tail(m).setZero();
    tb.t(i, nv + i) = 1.0;
    tb.xb[i] = sign * resid[i];
    tb.b0[i] = sign * prob.b[i];
    tb.basis[i] = nv + i;
    tb.state[nv + i] = VarState::Basic;
    tb.lo[nv + i] = 0.0;
    tb.hi[nv + i] = kInf;
  }
  tb.a0 = tb.t;  // initial basis is the identity, so t holds [S A | I]

  const long cap = 10000L * static_cast<long>(nv + m);
  const double bscale = 1.0 + (m > 0 ? prob.b.cwiseAbs().maxCoeff() : 0.0);
  long iters = 0;
  bool unbounded = false;

  LpSolution sol;
  if (m > 0) {
    Vector phase1 = Vector::Zero(tb.ntot);
    phase1.tail(m).setOnes();
    // Drive the artificials out until a freshly refactorized tableau prices
    // clean (a round with zero pivots). The tableau's own xb understates
    // infeasibility by exactly the drift the updates accumulated, and that
    // drift also hides profitable columns from the pricing step, so a single
    // pass can stop short of the true phase-1 optimum.
    for (int round = 0; round < 8; ++round) {
      const long before = iters;
      if (!run_phase(tb, phase1, cap, iters, unbounded)) {
        sol.status = LpStatus::Stalled;
        sol.iterations = iters;
        return sol;
      }
      refactor(tb);
      if (iters == before || unbounded) break;
    }
    if (artificial_sum(tb, nv) > kFeasTol * bscale) {
      sol.status = LpStatus::Infeasible;
      sol.iterations = iters;
      return sol;
    }
    // Freeze the artificials for phase 2; a degenerate one may stay basic
    // at zero, where the ratio test keeps it pinned.
    for (int j = nv; j < tb.ntot; ++j) {
      tb.lo[j] = 0.0;
      tb.hi[j] = 0.0;
      if (tb.state[j] == VarState::AtUpper) tb.state[j] = VarState::AtLower;
    }
  }

  Vector phase2 = Vector::Zero(tb.ntot);
  phase2.head(nv) = prob.c;
  // Same fixpoint loop as phase 1: the final answer must be optimal for a
  // refactorized tableau, not for a drifted one.
  for (int round = 0; round < 4; ++round) {
    const long before = iters;
    if (!run_phase(tb, phase2, cap, iters, unbounded)) {
      sol.status = LpStatus::Stalled;
      sol.iterations = iters;
      return sol;
    }
    refactor(tb);
    if (iters == before || unbounded) break;
  }
  if (unbounded) {
    sol.status = LpStatus::Unbounded;
    sol.iterations = iters;
    return sol;
  }

  // Honest terminal equality check: residual the structural system cannot
  // absorb sits on basic artificials.
  if (m > 0 && artificial_sum(tb, nv) > 10.0 * kFeasTol * bscale) {
    sol.status = LpStatus::Stalled;
    sol.iterations = iters;
    return sol;
  }

  sol.x.resize(nv);
  for (int j = 0; j < nv; ++j) sol.x[j] = tb.nonbasic_value(j);
  for (int i = 0; i < m; ++i)
    if (tb.basis[i] < nv) sol.x[tb.basis[i]] = tb.xb[i];
  sol.objective = prob.c.dot(sol.x);
  sol.status = LpStatus::Optimal;
  sol.iterations = iters;
  return sol;
}

}  // namespace gfdm
