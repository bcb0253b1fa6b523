#include "hmpc/condense.hpp"

#include <string>

namespace hmpc {

namespace {

// Maps a subsystem-major stacked input to the time-major stack
// [u_0; u_1; ...; u_{N-1}] of aggregate stage inputs.
Matrix time_major_permutation(const CondensedProblem& p, Eigen::Index nu) {
  const Eigen::Index nus = p.model.n_u();
  Matrix perm = Matrix::Zero(nu, nu);
  for (std::size_t i = 0; i < p.n_blocks(); ++i) {
    const BlockRange stage = p.model.input_blocks[i];
    for (int k = 0; k < p.horizon; ++k) {
      for (Eigen::Index r = 0; r < stage.size; ++r) {
        perm(k * nus + stage.offset + r, p.blocks[i].offset + k * stage.size + r) = 1.0;
      }
    }
  }
  return perm;
}

}  // namespace

CondensedProblem condense(const NetworkSpec& network) {
  if (network.horizon < 1) {
    throw Error(ErrorKind::HorizonTooSmall, "horizon must be at least 1", "horizon");
  }
  CondensedProblem p;
  p.horizon = network.horizon;
  p.model = assemble_aggregate(network);
  const int N = network.horizon;
  const Eigen::Index nx = p.model.n_x();
  const Eigen::Index nus = p.model.n_u();
  const Eigen::Index nu = N * nus;

  Eigen::Index offset = 0;
  p.box_lo.resize(nu);
  p.box_hi.resize(nu);
  for (std::size_t i = 0; i < network.size(); ++i) {
    const auto& s = network.subsystems[i];
    p.blocks.push_back({offset, N * s.m});
    for (int k = 0; k < N; ++k) {
      p.box_lo.segment(offset + k * s.m, s.m) = s.input_box.lower;
      p.box_hi.segment(offset + k * s.m, s.m) = s.input_box.upper;
    }
    offset += N * s.m;
  }

  // Predicted states X = Phi x + Gamma U_tm for k = 1..N.
  Matrix Phi(N * nx, nx);
  Matrix Gamma = Matrix::Zero(N * nx, nu);
  std::vector<Matrix> powers(static_cast<std::size_t>(N) + 1);
  powers[0] = Matrix::Identity(nx, nx);
  for (int k = 1; k <= N; ++k) powers[k] = p.model.A * powers[k - 1];
  for (int k = 1; k <= N; ++k) {
    Phi.middleRows((k - 1) * nx, nx) = powers[k];
    for (int l = 0; l < k; ++l) {
      Gamma.block((k - 1) * nx, l * nus, nx, nus) = powers[k - 1 - l] * p.model.B;
    }
  }
  Matrix Qbar = Matrix::Zero(N * nx, N * nx);
  for (int k = 1; k < N; ++k) Qbar.block((k - 1) * nx, (k - 1) * nx, nx, nx) = p.model.Q;
  Qbar.block((N - 1) * nx, (N - 1) * nx, nx, nx) = p.model.P;
  Matrix Rbar = Matrix::Zero(nu, nu);
  for (int k = 0; k < N; ++k) Rbar.block(k * nus, k * nus, nus, nus) = p.model.R;

  const Matrix QG = Qbar * Gamma;
  const Matrix H_tm = Gamma.transpose() * QG + Rbar;
  const Matrix G_tm = 2.0 * QG.transpose() * Phi;
  p.W = p.model.Q + Phi.transpose() * Qbar * Phi;
  p.W = 0.5 * (p.W + p.W.transpose()).eval();

  p.x_rows = (N - 1) * network.X.rows();
  p.xf_rows = network.Xf.rows();
  p.u_rows = N * network.U.rows();
  const Eigen::Index mc = p.x_rows + p.xf_rows + p.u_rows;
  p.Xi = Matrix::Zero(mc, nx);
  Matrix Theta_tm = Matrix::Zero(mc, nu);
  p.tau = Vector::Zero(mc);
  Eigen::Index row = 0;
  for (int k = 1; k < N; ++k) {
    const Eigen::Index r = network.X.rows();
    p.Xi.middleRows(row, r) = network.X.E * Phi.middleRows((k - 1) * nx, nx);
    Theta_tm.middleRows(row, r) = network.X.E * Gamma.middleRows((k - 1) * nx, nx);
    p.tau.segment(row, r) = -network.X.f;
    row += r;
  }
  {
    const Eigen::Index r = network.Xf.rows();
    p.Xi.middleRows(row, r) = network.Xf.E * Phi.middleRows((N - 1) * nx, nx);
    Theta_tm.middleRows(row, r) = network.Xf.E * Gamma.middleRows((N - 1) * nx, nx);
    p.tau.segment(row, r) = -network.Xf.f;
    row += r;
  }
  for (int k = 0; k < N; ++k) {
    const Eigen::Index r = network.U.rows();
    Theta_tm.block(row, k * nus, r, nus) = network.U.E;
    p.tau.segment(row, r) = -network.U.f;
    row += r;
  }

  const Matrix perm = time_major_permutation(p, nu);
  p.H = perm.transpose() * H_tm * perm;
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.G = perm.transpose() * G_tm;
  p.Theta = Theta_tm * perm;
  return p;
}

double eval_cost(const CondensedProblem& p, const Vector& u, const Vector& x) {
  if (u.size() != p.n_u() || x.size() != p.n_x()) {
    throw Error(ErrorKind::DimensionMismatch, "eval_cost: wrong argument dimensions");
  }
  return u.dot(p.H * u) + (p.G * x).dot(u) + x.dot(p.W * x);
}

Vector eval_constraints(const CondensedProblem& p, const Vector& u, const Vector& x) {
  if (u.size() != p.n_u() || x.size() != p.n_x()) {
    throw Error(ErrorKind::DimensionMismatch, "eval_constraints: wrong argument dimensions");
  }
  Vector g = p.Xi * x + p.tau;
  for (const auto& blk : p.blocks) {
    const Matrix theta_i = p.Theta.middleCols(blk.offset, blk.size);
    const Vector u_i = u.segment(blk.offset, blk.size);
    const Vector contribution = theta_i * u_i;
    g += contribution;
  }
  return g;
}

Vector stage_input(const CondensedProblem& p, const Vector& u, int k) {
  Vector out(p.model.n_u());
  for (std::size_t i = 0; i < p.n_blocks(); ++i) {
    const BlockRange stage = p.model.input_blocks[i];
    out.segment(stage.offset, stage.size) =
        u.segment(p.blocks[i].offset + k * stage.size, stage.size);
  }
  return out;
}

Vector stack_inputs(const CondensedProblem& p, const std::vector<Vector>& stages) {
  if (static_cast<int>(stages.size()) != p.horizon) {
    throw Error(ErrorKind::DimensionMismatch, "stack_inputs: need one input per stage");
  }
  Vector u(p.n_u());
  for (std::size_t i = 0; i < p.n_blocks(); ++i) {
    const BlockRange stage = p.model.input_blocks[i];
    for (int k = 0; k < p.horizon; ++k) {
      u.segment(p.blocks[i].offset + k * stage.size, stage.size) =
          stages[static_cast<std::size_t>(k)].segment(stage.offset, stage.size);
    }
  }
  return u;
}

std::vector<Vector> rollout(const AggregateModel& model, const Vector& x0,
                            const std::vector<Vector>& inputs) {
  if (x0.size() != model.n_x()) {
    throw Error(ErrorKind::DimensionMismatch, "rollout: initial state has the wrong size");
  }
  std::vector<Vector> states{x0};
  states.reserve(inputs.size() + 1);
  for (const auto& u : inputs) {
    if (u.size() != model.n_u()) {
      throw Error(ErrorKind::DimensionMismatch, "rollout: input has the wrong size");
    }
    states.push_back(model.A * states.back() + model.B * u);
  }
  return states;
}

std::vector<Vector> rollout(const CondensedProblem& p, const Vector& x0, const Vector& u) {
  if (u.size() != p.n_u()) {
    throw Error(ErrorKind::DimensionMismatch, "rollout: stacked input has the wrong size");
  }
  std::vector<Vector> inputs;
  for (int k = 0; k < p.horizon; ++k) inputs.push_back(stage_input(p, u, k));
  return rollout(p.model, x0, inputs);
}

}  // namespace hmpc
