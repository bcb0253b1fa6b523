#pragma once

#include "hmpc/model.hpp"

#include <vector>

namespace hmpc {

/**
 * @brief Dense input-only form of the finite-horizon problem.
 *
 * Cost:        f(u, x) = u'Hu + (Gx)'u + x'Wx      (gradient 2Hu + Gx)
 * Constraints: g(u, x) = Xi x + Theta u + tau <= 0,  lo <= u <= hi
 *
 * `u` is ordered subsystem-major: the N stage inputs of the first subsystem,
 * then the N stage inputs of the second one, and so on. `blocks[i]` is the
 * slice of subsystem position i. Constraint rows are ordered as the X rows
 * for predicted states k = 1..N-1 (time-major), then the Xf rows for x_N,
 * then the U rows for stage inputs k = 0..N-1.
 */
struct CondensedProblem {
  Matrix H;
  Matrix G;
  Matrix W;
  Matrix Xi;
  Matrix Theta;
  Vector tau;
  Vector box_lo;
  Vector box_hi;
  std::vector<BlockRange> blocks;

  int horizon = 0;
  AggregateModel model;
  Eigen::Index x_rows = 0;   // rows contributed by X
  Eigen::Index xf_rows = 0;  // rows contributed by Xf
  Eigen::Index u_rows = 0;   // rows contributed by U

  Eigen::Index n_u() const { return H.rows(); }
  Eigen::Index n_x() const { return G.cols(); }
  Eigen::Index n_constraints() const { return Theta.rows(); }
  std::size_t n_blocks() const { return blocks.size(); }

  /// Per-subsystem slice of a stacked vector.
  Vector block(const Vector& u, std::size_t i) const {
    return u.segment(blocks[i].offset, blocks[i].size);
  }
  Matrix H_block(std::size_t i, std::size_t j) const {
    return H.block(blocks[i].offset, blocks[j].offset, blocks[i].size, blocks[j].size);
  }
};

CondensedProblem condense(const NetworkSpec& network);

double eval_cost(const CondensedProblem& p, const Vector& u, const Vector& x);

/// Xi x + tau + sum_i Theta_i u^i, accumulated block by block in subsystem
/// order. The distributed coordinator reproduces exactly this summation.
Vector eval_constraints(const CondensedProblem& p, const Vector& u, const Vector& x);

/// Stage input k (aggregate ordering) extracted from a subsystem-major u.
Vector stage_input(const CondensedProblem& p, const Vector& u, int k);

/// Inverse of stage_input over all k: time-major stage inputs -> stacked u.
Vector stack_inputs(const CondensedProblem& p, const std::vector<Vector>& stages);

/// States x_0..x_N produced by x_{k+1} = A x_k + B u_k.
std::vector<Vector> rollout(const AggregateModel& model, const Vector& x0,
                            const std::vector<Vector>& inputs);

/// Rollout of a stacked (subsystem-major) input vector over the horizon.
std::vector<Vector> rollout(const CondensedProblem& p, const Vector& x0, const Vector& u);

}  // namespace hmpc
