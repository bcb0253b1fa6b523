#include "hmpc/mpc_loop.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace hmpc {

namespace {

constexpr double kOriginRadius = 1e-8;

void require_in_X(const NetworkSpec& network, const Vector& x, const char* field) {
  if (x.size() != network.X.dim()) {
    throw Error(ErrorKind::ValidationError, "state has the wrong dimension", field);
  }
  const double worst = network.X.slack(x).minCoeff();
  if (worst < -kInteriorTol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "state lies outside X (slack " << worst << ")";
    throw Error(ErrorKind::ValidationError, msg.str(), field);
  }
}

double audit_norm_bound(const CondensedProblem& p, const Vector& x, double L, int samples,
                        std::uint64_t seed, int t) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  Vector u(p.n_u());
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      u(k) = p.box_lo(k) + unit(rng) * (p.box_hi(k) - p.box_lo(k));
    }
    worst = std::max(worst, eval_constraints(p, u, x).norm());
  }
  if (worst > L) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "sampled ||g(u, x)|| = " << worst << " exceeds the norm bound " << L;
    throw Error(ErrorKind::BoundViolated, msg.str());
  }
  return worst;
}

}  // namespace

MpcContext make_context(const NetworkSpec& network) {
  MpcContext ctx;
  ctx.network = &network;
  ctx.problem = condense(network);
  ctx.cert = certify_contraction(ctx.problem);
  return ctx;
}

MpcState initial_state(const MpcContext& ctx, const Vector& x0, const Vector& u_bar0) {
  const CondensedProblem& p = ctx.problem;
  require_in_X(*ctx.network, x0, "x0");
  if (u_bar0.size() != p.n_u()) {
    throw Error(ErrorKind::ValidationError,
                "expected " + std::to_string(p.n_u()) + " entries, got " +
                    std::to_string(u_bar0.size()),
                "u_bar0");
  }
  SlaterCertificate slater;
  try {
    slater = make_slater_certificate(p, x0, u_bar0);
  } catch (const Error& e) {
    throw Error(ErrorKind::ValidationError, e.detail(), "u_bar0");
  }
  if (!(slater.min_margin > 0.0)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "Slater margin " << slater.min_margin << " <= 0";
    throw Error(ErrorKind::ValidationError, msg.str(), "u_bar0");
  }
  MpcState state;
  state.t = 0;
  state.x = x0;
  state.u_bar = u_bar0;
  state.L = initial_norm_bound(p, x0);
  return state;
}

StepOutcome mpc_step(const MpcContext& ctx, const MpcState& state, const MpcOptions& opts) {
  const CondensedProblem& p = ctx.problem;
  const AggregateModel& model = p.model;
  StepOutcome out;
  out.next = state;

  if (state.x.norm() <= kOriginRadius) {
    out.status = StepStatus::ConvergedToOrigin;
    return out;
  }
  require_in_X(*ctx.network, state.x, "x");

  double delta = 0.0;
  if (state.x_prev.size() == 0) {
    delta = opts.delta0 ? *opts.delta0 : 0.5 * state.x.dot(model.Q * state.x);
    if (!(delta > kDeltaFloor)) {
      out.status = StepStatus::ConvergedToOrigin;
      return out;
    }
  } else {
    try {
      delta = compute_delta(model.Q, model.R, state.x_prev, state.u_prev_applied);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateDelta) throw;
      out.status = StepStatus::ConvergedToOrigin;
      return out;
    }
  }

  const SlaterCertificate slater = make_slater_certificate(p, state.x, state.u_bar);
  const double f_slater = eval_cost(p, state.u_bar, state.x);
  if (state.f_prev && !(*state.f_prev - f_slater > delta)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "step " << state.t << ": f_prev - f(u_bar) = " << *state.f_prev - f_slater
        << " does not exceed delta = " << delta;
    throw Error(ErrorKind::AssumptionFourViolated, msg.str());
  }

  const TightenedProblem tp =
      opts.margin_override
          ? build_tightened_with_margin(p, state.x, slater, state.L, *opts.margin_override)
          : build_tightened(p, state.x, slater, state.L);
  const OuterParams params = compute_step_params(tp, delta);

  StepSolution sol;
  TraceRecord& rec = out.record;
  if (opts.distributed) {
    if (opts.step.early_exit) {
      throw Error(ErrorKind::ValidationError, "early exit is not available in distributed runs",
                  "early_exit");
    }
    HarnessOptions hopts;
    hopts.parallel = opts.step.parallel;
    DistributedResult dist = run_distributed_step(tp, params, ctx.cert, hopts);
    sol = std::move(dist.solution);
    rec.messages = message_stats(dist.log);
  } else {
    sol = solve_tightened_step(tp, params, ctx.cert, opts.step);
  }

  rec.t = state.t;
  rec.x = state.x;
  rec.u_applied = stage_input(p, sol.u_hat, 0);
  rec.f_value = sol.f_value;
  rec.f_prev = state.f_prev ? *state.f_prev : std::numeric_limits<double>::quiet_NaN();
  rec.violation = sol.violation;
  rec.max_g = sol.max_g;
  rec.delta = params.delta;
  rec.alpha = params.alpha;
  rec.eps = params.eps;
  rec.k_bar = params.k_bar;
  rec.k_used = sol.k_used;
  rec.total_inner_sweeps = sol.total_inner_sweeps;
  rec.c = tp.c;
  rec.gamma = tp.gamma;
  rec.L = tp.L;
  rec.L_prime = tp.L_prime;
  rec.slater_margin = slater.min_margin;
  rec.f_slater = f_slater;
  rec.norm_audit_max = audit_norm_bound(p, state.x, state.L, opts.audit_samples, opts.seed, state.t);
  rec.lyapunov_ok = !state.f_prev || sol.f_value < *state.f_prev;
  if (!rec.lyapunov_ok) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "step " << state.t << ": cost " << sol.f_value << " does not decrease from "
        << *state.f_prev;
    throw Error(ErrorKind::AssumptionFourViolated, msg.str());
  }

  const Vector x_next = model.A * state.x + model.B * rec.u_applied;
  out.next.t = state.t + 1;
  out.next.x_prev = state.x;
  out.next.u_prev_applied = rec.u_applied;
  out.next.u_bar = shift_slater(p, sol.u_hat, state.x);
  out.next.L = update_norm_bound(state.L, p.Xi, x_next, state.x);
  out.next.x = x_next;
  out.next.f_prev = sol.f_value;
  return out;
}

SimulationResult simulate(const MpcContext& ctx, const Vector& x0, const Vector& u_bar0,
                          int steps, const MpcOptions& opts, const TraceSink& sink) {
  SimulationResult result;
  MpcState state = initial_state(ctx, x0, u_bar0);
  for (int t = 0; t < steps; ++t) {
    StepOutcome out = mpc_step(ctx, state, opts);
    if (out.status == StepStatus::ConvergedToOrigin) {
      result.converged = true;
      break;
    }
    if (sink) sink(out.record);
    result.records.push_back(std::move(out.record));
    state = std::move(out.next);
  }
  return result;
}

CostDecreaseReport check_cost_decrease(const std::vector<TraceRecord>& trace) {
  CostDecreaseReport report;
  report.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const double margin = trace[t - 1].f_value - trace[t].f_value;
    if (!(margin > 0.0)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "cost " << trace[t].f_value << " at record " << t << " does not drop below "
          << trace[t - 1].f_value;
      throw Error(ErrorKind::LyapunovViolation, msg.str());
    }
    report.margins.push_back(margin);
    const auto& r = trace[t];
    report.budget_slack.push_back(r.delta - (r.alpha * r.L_prime * r.L_prime / 2.0 + r.eps));
    report.min_margin = std::min(report.min_margin, margin);
  }
  return report;
}

}  // namespace hmpc
