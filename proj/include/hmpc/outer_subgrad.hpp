#pragma once

#include "hmpc/inner_jacobi.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace hmpc {

/// Parameters of one MPC step's outer loop.
struct OuterParams {
  double delta = 0.0;    // cost-decrease budget
  double alpha = 0.0;    // dual step size
  double eps = 0.0;      // inner suboptimality
  long k_bar = 0;        // outer iterations
  double gamma = 0.0;
  double c = 0.0;
  double L_prime = 0.0;
  double f_slater = 0.0; // f(u_bar, x)
};

/// Diagnostics of the primal average after k outer iterations (k >= 1).
struct OuterSummary {
  long k = 0;
  double tight_violation = 0.0;  // ||[g'(u_hat(k))]+||_2
  double f_hat = 0.0;            // f(u_hat(k), x)
  int sweeps = 0;                // inner sweeps of iteration k-1
  double lipschitz = 0.0;
};

/// Full data of outer iteration k, passed to an observer.
struct OuterIterate {
  long k = 0;
  Vector mu;          // mu(k)
  Vector warm_start;  // u(0) of the inner loop
  Vector u;           // u(k)
  Vector d;           // g'(u(k), x)
  int sweeps = 0;
  double lipschitz = 0.0;
  Vector u_hat;       // average of u(0..k)
  std::vector<Vector> sweep_iterates;  // u(1..p_bar), only when requested
};

struct StepSolution {
  Vector u_hat;
  double f_value = 0.0;
  double violation = 0.0;  // ||[g(u_hat, x)]+||_2
  double max_g = 0.0;
  long k_used = 0;
  long total_inner_sweeps = 0;
  bool feasible = false;
  OuterParams params;
  Vector final_mu;
  std::vector<OuterSummary> history;
};

struct StepOptions {
  bool early_exit = false;  // stop once u_hat is strictly feasible
  bool parallel = false;
  bool record_history = false;
  bool record_sweeps = false;
  std::function<void(const OuterIterate&)> observer;
};

/// x'Qx + u'Ru. Throws DegenerateDelta when the result is <= 1e-12.
double compute_delta(const Matrix& Q, const Matrix& R, const Vector& x_prev,
                     const Vector& u_prev);

inline constexpr double kDeltaFloor = 1e-12;

/// alpha = delta / L'^2, eps = delta / 2, plus k_bar.
OuterParams compute_step_params(const TightenedProblem& tp, double delta);

/// ceil((3 f / gamma + alpha L'^2 / (2 gamma) + alpha L') / (alpha c)), at least 1.
long outer_iterations_needed(double f_slater, double gamma, double alpha, double L_prime,
                             double c);

/// Right-hand side of the violation bound at iteration k.
double violation_bound(const OuterParams& params, long k);

/// Right-hand side of the cost bound, given f'*.
double cost_bound(const OuterParams& params, double f_star_tight);

/// max(0, mu + alpha d).
Vector dual_update(const Vector& mu, double alpha, const Vector& d);

/// primal_sum / k.
Vector primal_average(const Vector& primal_sum, long k);

/// Same as build_tightened but with a caller-chosen c. gamma = min_margin - c
/// may come out non-positive; only tests use this.
TightenedProblem build_tightened_with_margin(const CondensedProblem& p, const Vector& x,
                                             const SlaterCertificate& slater, double L,
                                             double c);

/**
 * Runs k_bar outer iterations: an inner Jacobi solve to eps at mu(k), then a
 * projected dual step. The average of the inner solutions is checked against
 * the original constraints; throws FeasibilityCertificateFailed if some row
 * is not strictly negative.
 */
StepSolution solve_tightened_step(const TightenedProblem& tp, const OuterParams& params,
                                  const ContractionCertificate& cert,
                                  const StepOptions& opts = {});

/// Fills the result fields of `sol` for the averaged input and throws
/// FeasibilityCertificateFailed unless every row of g is strictly negative.
void finalize_step(const TightenedProblem& tp, const Vector& u_hat, long k_used,
                   StepSolution& sol);

struct BoundReport {
  long checked = 0;
  double worst_violation_ratio = 0.0;  // lhs / rhs of the violation bound
  double worst_cost_gap = 0.0;         // lhs - rhs of the cost bound
};

/// Checks both bounds at every recorded k; throws BoundViolated on failure.
BoundReport check_bounds(const std::vector<OuterSummary>& history, const OuterParams& params,
                         double f_star_tight, double rel_tol = 1e-8);

}  // namespace hmpc
