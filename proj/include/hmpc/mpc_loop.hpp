#pragma once

#include "hmpc/coord_harness.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace hmpc {

/// Problem data shared by every step of a closed-loop run.
struct MpcContext {
  const NetworkSpec* network = nullptr;
  CondensedProblem problem;
  ContractionCertificate cert;
};

/// Condenses the network and certifies the Jacobi contraction; throws
/// WeakCouplingViolated when it fails.
MpcContext make_context(const NetworkSpec& network);

struct MpcState {
  int t = 0;
  Vector x;
  Vector x_prev;          // empty at t = 0
  Vector u_prev_applied;  // empty at t = 0
  Vector u_bar;           // Slater vector for step t
  double L = 0.0;
  std::optional<double> f_prev;
};

enum class StepStatus { Solved, ConvergedToOrigin };

struct TraceRecord {
  int t = 0;
  Vector x;
  Vector u_applied;
  double f_value = 0.0;
  double f_prev = 0.0;   // NaN at t = 0
  double violation = 0.0;
  double max_g = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  double eps = 0.0;
  long k_bar = 0;
  long k_used = 0;
  long total_inner_sweeps = 0;
  double c = 0.0;
  double gamma = 0.0;
  double L = 0.0;
  double L_prime = 0.0;
  double slater_margin = 0.0;
  double f_slater = 0.0;
  double norm_audit_max = 0.0;  // largest sampled ||g(u, x_t)||_2
  bool lyapunov_ok = false;
  std::optional<MessageStats> messages;
};

struct MpcOptions {
  StepOptions step;
  bool distributed = false;
  std::optional<double> delta0;        // default x0'Q x0 / 2
  std::optional<double> margin_override;  // test hook: fixed c instead of min_margin / 2
  std::uint64_t seed = 0;              // drives the sampled norm-bound audit
  int audit_samples = 200;
};

struct StepOutcome {
  StepStatus status = StepStatus::Solved;
  MpcState next;
  TraceRecord record;
};

/// Initial state: checks x0 against X, evaluates the Slater margins of
/// u_bar0 and computes L0. Throws ValidationError with the field name.
MpcState initial_state(const MpcContext& ctx, const Vector& x0, const Vector& u_bar0);

/**
 * One closed-loop step: tightened problem from the current Slater vector,
 * outer/inner iteration, plant update with the first stage input, shifted
 * Slater vector and updated norm bound. Assumption 4 is checked from t = 1
 * on; a failure, or a cost that does not decrease, throws
 * AssumptionFourViolated.
 */
StepOutcome mpc_step(const MpcContext& ctx, const MpcState& state, const MpcOptions& opts);

struct SimulationResult {
  std::vector<TraceRecord> records;
  bool converged = false;  // stopped early at the origin
};

using TraceSink = std::function<void(const TraceRecord&)>;

/// Runs up to `steps` steps. Each record is passed to `sink` as soon as it
/// exists, so a failing run leaves its prefix behind.
SimulationResult simulate(const MpcContext& ctx, const Vector& x0, const Vector& u_bar0,
                          int steps, const MpcOptions& opts, const TraceSink& sink = {});

struct CostDecreaseReport {
  std::vector<double> margins;       // f_{t-1} - f_t
  std::vector<double> budget_slack;  // delta_t - (alpha L'^2 / 2 + eps)
  double min_margin = 0.0;
};

/// Strict decrease of f over consecutive records; throws LyapunovViolation.
CostDecreaseReport check_cost_decrease(const std::vector<TraceRecord>& trace);

}  // namespace hmpc
