#include "instances.hpp"

#include <doctest.h>

#include <cmath>

using namespace hmpc;
using hmpc::testing::load_fixture;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::IoError;
}

TraceRecord record_with(double f) {
  TraceRecord r;
  r.f_value = f;
  r.delta = 1.0;
  r.alpha = 0.5;
  r.L_prime = 1.0;
  r.eps = 0.5;
  return r;
}

}  // namespace

TEST_CASE("origin start converges immediately") {
  const ConfigDocument doc = load_fixture("twin.json");
  const MpcContext ctx = make_context(doc.network);
  const MpcState state = initial_state(ctx, Vector::Zero(2), Vector::Zero(ctx.problem.n_u()));
  const StepOutcome out = mpc_step(ctx, state, {});
  CHECK(out.status == StepStatus::ConvergedToOrigin);
  const SimulationResult sim = simulate(ctx, Vector::Zero(2), Vector::Zero(ctx.problem.n_u()), 5, {});
  CHECK(sim.converged);
  CHECK(sim.records.empty());
}

TEST_CASE("twin step applies the first stage of the averaged input") {
  const ConfigDocument doc = load_fixture("twin.json");
  const MpcContext ctx = make_context(doc.network);
  const MpcState state = initial_state(ctx, doc.x0, doc.u_bar0);
  CHECK(state.L == doctest::Approx(initial_norm_bound(ctx.problem, doc.x0)));
  const StepOutcome out = mpc_step(ctx, state, {});
  REQUIRE(out.status == StepStatus::Solved);
  const AggregateModel& m = ctx.problem.model;
  const Vector expected = m.A * doc.x0 + m.B * out.record.u_applied;
  CHECK((out.next.x - expected).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(out.next.t == 1);
  CHECK(out.record.violation == 0.0);
  CHECK(out.record.max_g < 0.0);
  CHECK(out.record.delta == doctest::Approx(0.5 * doc.x0.dot(m.Q * doc.x0)));
  CHECK(std::isnan(out.record.f_prev));
  CHECK(out.next.L == doctest::Approx(update_norm_bound(state.L, ctx.problem.Xi, out.next.x, doc.x0)));
  CHECK(out.next.u_bar.size() == ctx.problem.n_u());
}

TEST_CASE("twin closed loop decreases the cost at every step") {
  const ConfigDocument doc = load_fixture("twin.json");
  const MpcContext ctx = make_context(doc.network);
  MpcOptions opts;
  opts.seed = doc.solver.seed;
  const SimulationResult sim = simulate(ctx, doc.x0, doc.u_bar0, 10, opts);
  REQUIRE(sim.records.size() == 10);
  for (const auto& r : sim.records) CHECK(r.lyapunov_ok);
  const CostDecreaseReport report = check_cost_decrease(sim.records);
  CHECK(report.min_margin > 0.0);
  CHECK(report.margins.size() == 9);
  for (double s : report.budget_slack) CHECK(s >= -1e-12);
  for (const auto& r : sim.records) CHECK(r.norm_audit_max <= r.L * (1 + 1e-12));
}

TEST_CASE("distributed and parallel closed loops reproduce the monolithic one") {
  const ConfigDocument doc = load_fixture("twin.json");
  const MpcContext ctx = make_context(doc.network);
  const SimulationResult mono = simulate(ctx, doc.x0, doc.u_bar0, 3, {});
  MpcOptions dist;
  dist.distributed = true;
  const SimulationResult d = simulate(ctx, doc.x0, doc.u_bar0, 3, dist);
  MpcOptions par;
  par.step.parallel = true;
  const SimulationResult pr = simulate(ctx, doc.x0, doc.u_bar0, 3, par);
  REQUIRE(d.records.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK((d.records[t].u_applied - mono.records[t].u_applied).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(pr.records[t].u_applied == mono.records[t].u_applied);
    REQUIRE(d.records[t].messages.has_value());
    CHECK(d.records[t].messages->consistent);
  }
  dist.step.early_exit = true;
  CHECK(kind_of([&] { simulate(ctx, doc.x0, doc.u_bar0, 1, dist); }) == ErrorKind::ValidationError);
}

TEST_CASE("terminal weight too small breaks the decrease condition") {
  const ConfigDocument doc = load_fixture("negative/twin_small_p.json");
  const MpcContext ctx = make_context(doc.network);
  CHECK(kind_of([&] { simulate(ctx, doc.x0, doc.u_bar0, 10, {}); }) ==
        ErrorKind::AssumptionFourViolated);
}

TEST_CASE("simulation edge cases") {
  const ConfigDocument doc = load_fixture("twin.json");
  const MpcContext ctx = make_context(doc.network);
  CHECK(simulate(ctx, doc.x0, doc.u_bar0, 0, {}).records.empty());
  const Vector outside = (Vector(2) << 3.0, 0.0).finished();
  CHECK(kind_of([&] { simulate(ctx, outside, doc.u_bar0, 3, {}); }) == ErrorKind::ValidationError);

  int seen = 0;
  simulate(ctx, doc.x0, doc.u_bar0, 2, {}, [&](const TraceRecord& r) { CHECK(r.t == seen++); });
  CHECK(seen == 2);
}

TEST_CASE("oversized tightening constant fails the feasibility certificate") {
  const NetworkSpec net = hmpc::testing::heavy_input_network();
  const MpcContext ctx = make_context(net);
  const Vector x0 = Vector::Constant(1, 1.5);
  const Vector u_bar0 = Vector::Constant(1, -0.5);
  const MpcState state = initial_state(ctx, x0, u_bar0);
  CHECK(mpc_step(ctx, state, {}).record.max_g < 0.0);
  MpcOptions opts;
  opts.margin_override = 2.0 * make_slater_certificate(ctx.problem, x0, u_bar0).min_margin;
  CHECK(kind_of([&] { mpc_step(ctx, state, opts); }) == ErrorKind::FeasibilityCertificateFailed);
}

TEST_CASE("cost decrease check") {
  const CostDecreaseReport r = check_cost_decrease({record_with(5.0), record_with(4.2)});
  CHECK(r.min_margin == doctest::Approx(0.8));
  CHECK(kind_of([] { check_cost_decrease({record_with(5.0), record_with(5.0)}); }) ==
        ErrorKind::LyapunovViolation);
}
