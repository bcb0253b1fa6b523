// Command-line front end: validate, certify, solve, simulate, oracle.

#include "hmpc/cli_io.hpp"
#include "hmpc/oracle.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace hmpc;

struct Args {
  std::string config;
  int steps = 10;
  std::string out;
  std::string log_out;
  bool distributed = false;
  std::optional<std::uint64_t> seed;
  bool single_thread = false;
  bool early_exit = false;
  std::vector<double> state;
};

void print_vector(std::ostream& out, const char* name, const Vector& v) {
  out << name << " = [";
  for (Eigen::Index k = 0; k < v.size(); ++k) out << (k ? ", " : "") << format_number(v(k));
  out << "]\n";
}

MpcOptions options_from(const ConfigDocument& doc, const Args& args) {
  MpcOptions opts;
  opts.step.early_exit = args.early_exit || doc.solver.early_exit;
  opts.step.parallel = !args.single_thread;
  opts.distributed = args.distributed;
  opts.delta0 = doc.delta0;
  opts.seed = args.seed ? *args.seed : doc.solver.seed;
  opts.audit_samples = doc.solver.audit_samples;
  return opts;
}

int require_certified(const ConfigDocument& doc) {
  const CertifyReport report = certify(doc);
  if (report.all_pass) return 0;
  print_certify_report(report, std::cerr);
  std::cerr << "error: certification failed\n";
  return 3;
}

int cmd_validate(const Args& args) {
  const ConfigDocument doc = load_config(args.config);
  std::cout << "valid: " << doc.network.size() << " subsystems, horizon " << doc.network.horizon
            << ", instance " << instance_hash(doc) << "\n";
  return 0;
}

int cmd_certify(const Args& args) {
  const ConfigDocument doc = load_config(args.config);
  const CertifyReport report = certify(doc);
  print_certify_report(report, std::cout);
  return report.all_pass ? 0 : 3;
}

int cmd_solve(const Args& args) {
  const ConfigDocument doc = load_config(args.config);
  if (int rc = require_certified(doc)) return rc;
  const MpcContext ctx = make_context(doc.network);
  MpcState state = initial_state(ctx, doc.x0, doc.u_bar0);
  if (!args.state.empty()) {
    Vector x(static_cast<Eigen::Index>(args.state.size()));
    for (std::size_t k = 0; k < args.state.size(); ++k) x(static_cast<Eigen::Index>(k)) = args.state[k];
    if (x.size() != ctx.problem.n_x()) {
      throw Error(ErrorKind::ValidationError, "state override has the wrong dimension", "--state");
    }
    if (x.norm() > 1e-8) {
      try {
        state = initial_state(ctx, x, doc.u_bar0);
      } catch (const Error& e) {
        if (e.field() != "x0") throw;
        throw Error(e.kind(), e.detail(), "--state");
      }
    } else {
      state.x = x;
    }
  }
  const MpcOptions opts = options_from(doc, args);
  const StepOutcome out = mpc_step(ctx, state, opts);
  std::cout << std::setprecision(17);
  if (out.status == StepStatus::ConvergedToOrigin) {
    std::cout << "status = ConvergedToOrigin\n";
    return 0;
  }
  const TraceRecord& r = out.record;
  std::cout << "status = Solved\n";
  print_vector(std::cout, "u_applied", r.u_applied);
  std::cout << "f = " << format_number(r.f_value) << "\n"
            << "violation = " << format_number(r.violation) << "\n"
            << "max_g = " << format_number(r.max_g) << "\n"
            << "k_bar = " << r.k_bar << "\n"
            << "total_inner_sweeps = " << r.total_inner_sweeps << "\n";
  if (args.distributed) {
    // Rerun through the harness to report the message log as well.
    const CondensedProblem& p = ctx.problem;
    const SlaterCertificate slater = make_slater_certificate(p, state.x, state.u_bar);
    const TightenedProblem tp = build_tightened(p, state.x, slater, state.L);
    const OuterParams params = compute_step_params(tp, r.delta);
    HarnessOptions hopts;
    hopts.parallel = opts.step.parallel;
    const DistributedResult dist = run_distributed_step(tp, params, ctx.cert, hopts);
    print_vector(std::cout, "u_hat", dist.solution.u_hat);
    const MessageStats stats = message_stats(dist.log);
    for (const auto& [kind, n] : stats.counts) std::cout << to_string(kind) << " = " << n << "\n";
    std::cout << "messages = " << stats.total << "\nbytes = " << stats.bytes
              << "\ncounts_consistent = " << (stats.consistent ? "true" : "false") << "\n";
    if (!args.log_out.empty()) write_log(dist.log, args.log_out);
  }
  return 0;
}

int cmd_simulate(const Args& args) {
  const ConfigDocument doc = load_config(args.config);
  if (int rc = require_certified(doc)) return rc;
  const MpcContext ctx = make_context(doc.network);
  const MpcOptions opts = options_from(doc, args);
  std::unique_ptr<TraceWriter> writer;
  if (!args.out.empty()) writer = std::make_unique<TraceWriter>(args.out, doc, ctx, opts);
  TraceSink sink = [&](const TraceRecord& r) {
    if (writer) writer->write(r);
    else std::cout << TraceWriter::record_line(r) << "\n";
  };
  if (!writer) std::cout << TraceWriter::header_line(doc, ctx, opts) << "\n";
  const SimulationResult result = simulate(ctx, doc.x0, doc.u_bar0, args.steps, opts, sink);
  std::cerr << result.records.size() << " steps"
            << (result.converged ? ", converged to the origin" : "") << "\n";
  return 0;
}

int cmd_oracle(const Args& args) {
  const ConfigDocument doc = load_config(args.config);
  const CondensedProblem p = condense(doc.network);
  const SlaterCertificate slater = make_slater_certificate(p, doc.x0, doc.u_bar0);
  const TightenedProblem tp = build_tightened(p, doc.x0, slater, initial_norm_bound(p, doc.x0));
  std::cout << std::setprecision(17);
  const QpSolution box = solve_box_qp_exact(p.H, p.G * doc.x0, p.box_lo, p.box_hi);
  print_vector(std::cout, "box_argmin", box.u);
  std::cout << "box_min_f = " << format_number(box.value + doc.x0.dot(p.W * doc.x0)) << "\n";
  const QpSolution full = solve_constrained_qp_exact(p, doc.x0);
  print_vector(std::cout, "u_star", full.u);
  std::cout << "f_star = " << format_number(full.value) << "\n";
  const QpSolution tight = solve_constrained_qp_exact(tp);
  print_vector(std::cout, "u_star_tightened", tight.u);
  std::cout << "f_star_tightened = " << format_number(tight.value) << "\n"
            << "c = " << format_number(tp.c) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical MPC by dual decomposition with constraint tightening"};
  app.require_subcommand(1);
  Args args;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("config", args.config, "config file (JSON)")->required();
  };
  auto* validate = app.add_subcommand("validate", "parse and validate a config");
  add_config(validate);
  auto* cert = app.add_subcommand("certify", "check the structural assumptions");
  add_config(cert);
  auto* solve = app.add_subcommand("solve", "solve a single step");
  add_config(solve);
  solve->add_option("--state", args.state, "state override x")->delimiter(',');
  solve->add_flag("--distributed", args.distributed, "also run the coordinator/agent harness");
  solve->add_option("--log", args.log_out, "binary message log of the harness run");
  auto* sim = app.add_subcommand("simulate", "closed-loop simulation");
  add_config(sim);
  sim->add_option("--steps", args.steps, "number of MPC steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--out", args.out, "trace file (JSON Lines)");
  sim->add_flag("--distributed", args.distributed, "run every step through the harness");
  auto* oracle = app.add_subcommand("oracle", "reference solutions at x0");
  add_config(oracle);
  for (auto* sub : {solve, sim}) {
    sub->add_option("--seed", args.seed, "seed of the sampled norm-bound audit");
    sub->add_flag("--single-thread", args.single_thread, "run agents sequentially");
    sub->add_flag("--early-exit", args.early_exit, "stop the outer loop once feasible");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(args);
    if (*cert) return cmd_certify(args);
    if (*solve) return cmd_solve(args);
    if (*sim) return cmd_simulate(args);
    if (*oracle) return cmd_oracle(args);
  } catch (const Error& e) {
    std::cerr << "error: ";
    if (!e.field().empty()) std::cerr << "[" << e.field() << "] ";
    std::cerr << e.what() << "\n";
    return exit_code_for(e.kind());
  }
  return 0;
}
