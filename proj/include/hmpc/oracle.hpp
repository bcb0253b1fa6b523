#pragma once

#include "hmpc/tighten.hpp"

#include <vector>

namespace hmpc {

/// Reference solvers for small instances. Exact up to rounding, by
/// enumeration of active sets with KKT checks; they refuse large inputs.

struct QpSolution {
  Vector u;
  double value = 0.0;
  std::vector<int> active;  // active rows of the enumerated system
  long candidates = 0;      // active sets examined
};

inline constexpr Eigen::Index kBoxOracleMaxDim = 16;
inline constexpr long kConstrainedOracleMaxCandidates = 5'000'000;

/// argmin u'Hu + linear'u over lo <= u <= hi. Throws InstanceTooLarge for
/// more than 16 variables.
QpSolution solve_box_qp_exact(const Matrix& H, const Vector& linear, const Vector& lo,
                              const Vector& hi);

/**
 * min f(u, x) s.t. g(u, x) + c <= 0, lo <= u <= hi. Rows of the enumerated
 * system: the m_c coupled rows, then u_k <= hi_k, then -u_k <= -lo_k. `value`
 * is the full f including x'Wx. Throws Infeasible when no KKT point exists
 * and InstanceTooLarge when the candidate budget runs out.
 */
QpSolution solve_constrained_qp_exact(const CondensedProblem& p, const Vector& x, double c = 0.0,
                                      long max_candidates = kConstrainedOracleMaxCandidates);

QpSolution solve_constrained_qp_exact(const TightenedProblem& tp,
                                      long max_candidates = kConstrainedOracleMaxCandidates);

/// q'(mu) = min over the box of f(u, x) + mu' g'(u, x).
double dual_function_exact(const TightenedProblem& tp, const Vector& mu);

/// Minimiser attaining q'(mu).
Vector dual_argmin_exact(const TightenedProblem& tp, const Vector& mu);

}  // namespace hmpc
