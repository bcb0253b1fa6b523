#include "hmpc/outer_subgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hmpc {

namespace {

double positive_part_norm(const Vector& g) { return g.cwiseMax(0.0).norm(); }

bool within(double lhs, double rhs, double rel_tol) {
  return lhs <= rhs + rel_tol * std::max(1.0, std::abs(rhs));
}

}  // namespace

double compute_delta(const Matrix& Q, const Matrix& R, const Vector& x_prev,
                     const Vector& u_prev) {
  if (Q.rows() != x_prev.size() || R.rows() != u_prev.size()) {
    throw Error(ErrorKind::DimensionMismatch, "compute_delta: wrong argument dimensions");
  }
  const double delta = x_prev.dot(Q * x_prev) + u_prev.dot(R * u_prev);
  if (!(delta > kDeltaFloor)) {
    throw Error(ErrorKind::DegenerateDelta, "cost-decrease budget vanished");
  }
  return delta;
}

long outer_iterations_needed(double f_slater, double gamma, double alpha, double L_prime,
                             double c) {
  const double inner = 3.0 / gamma * f_slater + alpha * L_prime * L_prime / (2.0 * gamma) +
                       alpha * L_prime;
  const double k = std::ceil(inner / (alpha * c));
  if (std::isnan(k)) {
    throw Error(ErrorKind::ValidationError, "outer iteration count is undefined");
  }
  if (k >= 1e15) {
    throw Error(ErrorKind::ValidationError, "outer iteration count is too large");
  }
  return std::max(1L, static_cast<long>(k));
}

OuterParams compute_step_params(const TightenedProblem& tp, double delta) {
  if (!(delta > 0.0) || !(tp.L_prime > 0.0)) {
    throw Error(ErrorKind::ValidationError, "step parameters need positive delta and L'");
  }
  OuterParams params;
  params.delta = delta;
  params.alpha = delta / (tp.L_prime * tp.L_prime);
  params.eps = delta / 2.0;
  params.gamma = tp.gamma;
  params.c = tp.c;
  params.L_prime = tp.L_prime;
  params.f_slater = eval_cost(tp.problem(), tp.slater.u_bar, tp.x);
  params.k_bar = outer_iterations_needed(params.f_slater, params.gamma, params.alpha,
                                         params.L_prime, params.c);
  return params;
}

double violation_bound(const OuterParams& params, long k) {
  const double a = params.alpha;
  const double lp = params.L_prime;
  return (3.0 / params.gamma * params.f_slater + a * lp * lp / (2.0 * params.gamma) + a * lp) /
         (static_cast<double>(k) * a);
}

double cost_bound(const OuterParams& params, double f_star_tight) {
  return f_star_tight + params.alpha * params.L_prime * params.L_prime / 2.0 + params.eps;
}

Vector dual_update(const Vector& mu, double alpha, const Vector& d) {
  if (mu.size() != d.size()) {
    throw Error(ErrorKind::DimensionMismatch, "dual_update: mu and d differ in size");
  }
  return (mu + alpha * d).cwiseMax(0.0);
}

Vector primal_average(const Vector& primal_sum, long k) {
  if (k < 1) throw Error(ErrorKind::ValidationError, "primal average needs k >= 1");
  return primal_sum / static_cast<double>(k);
}

TightenedProblem build_tightened_with_margin(const CondensedProblem& p, const Vector& x,
                                             const SlaterCertificate& slater, double L,
                                             double c) {
  TightenedProblem tp;
  tp.base = &p;
  tp.x = x;
  tp.c = c;
  tp.gamma = slater.min_margin - c;
  tp.L = L;
  tp.L_prime = L + c;
  tp.slater = slater;
  return tp;
}

StepSolution solve_tightened_step(const TightenedProblem& tp, const OuterParams& params,
                                  const ContractionCertificate& cert, const StepOptions& opts) {
  const CondensedProblem& p = tp.problem();
  const auto blocks = make_all_block_data(p, cert);

  StepSolution sol;
  sol.params = params;
  Vector mu = Vector::Zero(p.n_constraints());
  Vector warm = Vector::Zero(p.n_u()).cwiseMax(p.box_lo).cwiseMin(p.box_hi);
  Vector sum = Vector::Zero(p.n_u());

  OuterIterate it;
  SweepObserver record_sweep = [&it](int, const Vector& u) { it.sweep_iterates.push_back(u); };
  InnerOptions inner;
  inner.parallel = opts.parallel;
  if (opts.record_sweeps) inner.observer = &record_sweep;

  const bool want_average = opts.record_history || opts.early_exit || opts.observer;
  long k = 0;
  while (k < params.k_bar) {
    it.sweep_iterates.clear();
    const auto terms = block_linear_terms(blocks, mu, tp.x);
    const double lipschitz = lipschitz_from_terms(cert, terms);
    const int sweeps = sweeps_needed(cert, lipschitz, params.eps);
    Vector u = run_jacobi(p, blocks, terms, warm, sweeps, inner);
    const Vector d = eval_tightened_constraints(tp, u);
    sum += u;
    sol.total_inner_sweeps += sweeps;
    ++k;

    bool stop = false;
    if (want_average) {
      const Vector u_hat = primal_average(sum, k);
      if (opts.record_history) {
        OuterSummary s;
        s.k = k;
        s.tight_violation = positive_part_norm(eval_tightened_constraints(tp, u_hat));
        s.f_hat = eval_cost(p, u_hat, tp.x);
        s.sweeps = sweeps;
        s.lipschitz = lipschitz;
        sol.history.push_back(s);
      }
      if (opts.early_exit) stop = eval_constraints(p, u_hat, tp.x).maxCoeff() < 0.0;
      if (opts.observer) {
        it.k = k - 1;
        it.mu = mu;
        it.warm_start = warm;
        it.u = u;
        it.d = d;
        it.sweeps = sweeps;
        it.lipschitz = lipschitz;
        it.u_hat = u_hat;
        opts.observer(it);
      }
    }
    mu = dual_update(mu, params.alpha, d);
    warm = std::move(u);
    if (stop) break;
  }

  sol.final_mu = mu;
  finalize_step(tp, primal_average(sum, k), k, sol);
  return sol;
}

void finalize_step(const TightenedProblem& tp, const Vector& u_hat, long k_used,
                   StepSolution& sol) {
  const CondensedProblem& p = tp.problem();
  sol.k_used = k_used;
  sol.u_hat = u_hat;
  sol.f_value = eval_cost(p, sol.u_hat, tp.x);
  const Vector g = eval_constraints(p, sol.u_hat, tp.x);
  sol.violation = positive_part_norm(g);
  sol.max_g = g.size() > 0 ? g.maxCoeff() : -std::numeric_limits<double>::infinity();
  sol.feasible = sol.max_g < 0.0;
  if (!sol.feasible) {
    Eigen::Index row = 0;
    g.maxCoeff(&row);
    std::ostringstream msg;
    msg.precision(17);
    msg << "averaged input violates constraint row " << row << " with g = " << sol.max_g
        << " after " << k_used << " outer iterations";
    throw Error(ErrorKind::FeasibilityCertificateFailed, msg.str());
  }
}

BoundReport check_bounds(const std::vector<OuterSummary>& history, const OuterParams& params,
                         double f_star_tight, double rel_tol) {
  BoundReport report;
  report.worst_cost_gap = -std::numeric_limits<double>::infinity();
  const double cost_rhs = cost_bound(params, f_star_tight);
  for (const auto& s : history) {
    const double viol_rhs = violation_bound(params, s.k);
    if (!within(s.tight_violation, viol_rhs, rel_tol)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "violation bound fails at k = " << s.k << ": " << s.tight_violation << " > "
          << viol_rhs;
      throw Error(ErrorKind::BoundViolated, msg.str());
    }
    if (!within(s.f_hat, cost_rhs, rel_tol)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "cost bound fails at k = " << s.k << ": " << s.f_hat << " > " << cost_rhs;
      throw Error(ErrorKind::BoundViolated, msg.str());
    }
    report.worst_violation_ratio =
        std::max(report.worst_violation_ratio, viol_rhs > 0.0 ? s.tight_violation / viol_rhs : 0.0);
    report.worst_cost_gap = std::max(report.worst_cost_gap, s.f_hat - cost_rhs);
    ++report.checked;
  }
  return report;
}

}  // namespace hmpc
