#pragma once

#include "hmpc/condense.hpp"

namespace hmpc {

/// A strictly feasible point of the coupled constraints and its margins.
struct SlaterCertificate {
  Vector u_bar;
  Vector margins;  // -g(u_bar, x)
  double min_margin = 0.0;
};

/// Evaluates margins of `u_bar` at state `x`. Does not throw on a
/// non-positive margin; use choose_margin / build_tightened for that. Throws
/// SlaterViolated if `u_bar` lies outside the input box.
SlaterCertificate make_slater_certificate(const CondensedProblem& p, const Vector& x,
                                          const Vector& u_bar);

/**
 * Problem with the coupled constraints shifted by c: g'(u, x) = g(u, x) + c.
 * The box constraints are left untouched.
 */
struct TightenedProblem {
  const CondensedProblem* base = nullptr;
  Vector x;
  double c = 0.0;       // tightening constant
  double L = 0.0;       // norm bound of g over the box
  double L_prime = 0.0; // norm bound of g', L + c
  double gamma = 0.0;   // Slater margin of the tightened constraints
  SlaterCertificate slater;

  const CondensedProblem& problem() const { return *base; }
};

struct MarginChoice {
  double c = 0.0;
  double gamma = 0.0;
};

/// Upper bound on ||g(u, x0)||_2 over the input box.
double initial_norm_bound(const CondensedProblem& p, const Vector& x0);

double update_norm_bound(double L_prev, const Matrix& Xi, const Vector& x_t,
                         const Vector& x_prev);

/// c = gamma = min_margin / 2. Throws SlaterViolated if min_margin <= 0.
MarginChoice choose_margin(const SlaterCertificate& slater);

TightenedProblem build_tightened(const CondensedProblem& p, const Vector& x,
                                 const SlaterCertificate& slater, double L);

/// g'(u, x_t) of the tightened problem.
Vector eval_tightened_constraints(const TightenedProblem& tp, const Vector& u);

/**
 * Shifts a strictly feasible solution one stage ahead: drops the first stage
 * input of every subsystem and appends K x_N, where x_N is the terminal state
 * predicted from (u, x). Throws PredictedTerminalOutsideXf when x_N is not
 * strictly inside the terminal set.
 */
Vector shift_slater(const CondensedProblem& p, const Vector& u, const Vector& x);

}  // namespace hmpc
