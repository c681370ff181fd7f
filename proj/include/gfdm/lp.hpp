#pragma once

#include "gfdm/common.hpp"

namespace gfdm {

enum class LpStatus { Optimal, Infeasible, Unbounded, Stalled };

std::string lp_status_name(LpStatus status);

// min c^T x  subject to  A x = b  and  lb <= x <= ub.
// Bounds may be +-infinity; inequality constraints are the caller's job
// (add slack variables).
struct LpProblem {
  Vector c;
  Matrix a;   // m x nv, m == 0 allowed
  Vector b;
  Vector lb;
  Vector ub;
};

struct LpSolution {
  LpStatus status = LpStatus::Stalled;
  Vector x;
  double objective = 0.0;
  long iterations = 0;
};

// Two-phase bounded-variable primal simplex. Entering and leaving variables
// follow Bland's smallest-index rule, so the pivot path (and the returned
// vertex) is deterministic and cycling is impossible. A run that exceeds
// 10^4 (vars + rows) pivots returns Stalled.
LpSolution lp_solve(const LpProblem& prob);

}  // namespace gfdm
