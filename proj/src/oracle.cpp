#include "hmpc/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

namespace hmpc {

namespace {

// Stack storage up to the oracle's size cap.
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kBoxOracleMaxDim, 1>;
using SmallMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kBoxOracleMaxDim, kBoxOracleMaxDim>;

struct BoxSearch {
  const Matrix& H;
  const Vector& lin;
  const Vector& lo;
  const Vector& hi;
  double tol;
  std::vector<int> state;  // -1 lower, 0 free, +1 upper
  long candidates = 0;
  Vector best;

  bool check() {
    ++candidates;
    const Eigen::Index n = H.rows();
    SmallVector u(n);
    std::array<Eigen::Index, kBoxOracleMaxDim> free_idx{};
    Eigen::Index nf = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (state[k] == 0) free_idx[nf++] = k;
      else u(k) = state[k] < 0 ? lo(k) : hi(k);
    }
    if (nf > 0) {
      SmallMatrix hff(nf, nf);
      SmallVector rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        double acc = lin(free_idx[a]);
        for (Eigen::Index k = 0; k < n; ++k) {
          if (state[k] != 0) acc += 2.0 * H(free_idx[a], k) * u(k);
        }
        rhs(a) = -acc;
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = 2.0 * H(free_idx[a], free_idx[b]);
      }
      const SmallVector y = Eigen::LLT<SmallMatrix>(hff).solve(rhs);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index k = free_idx[a];
        if (y(a) < lo(k) - tol || y(a) > hi(k) + tol) return false;
        u(k) = std::clamp(y(a), lo(k), hi(k));
      }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (state[k] == 0) continue;
      const double grad = 2.0 * H.row(k).dot(u.transpose()) + lin(k);
      if (state[k] < 0 && grad < -tol) return false;
      if (state[k] > 0 && grad > tol) return false;
    }
    best = u;
    return true;
  }

  // Places `remaining` more active coordinates at indices >= from.
  bool place(Eigen::Index from, int remaining) {
    if (remaining == 0) return check();
    const Eigen::Index n = H.rows();
    for (Eigen::Index k = from; k <= n - remaining; ++k) {
      for (int side : {-1, 1}) {
        state[k] = side;
        if (place(k + 1, remaining - 1)) return true;
      }
      state[k] = 0;
    }
    return false;
  }
};

double kkt_tolerance(const Matrix& H, const Vector& lin, const Vector& lo, const Vector& hi) {
  const double bound = std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff());
  const double scale = 1.0 + (lin.size() ? lin.cwiseAbs().maxCoeff() : 0.0) +
                       2.0 * H.cwiseAbs().maxCoeff() * bound;
  return 1e-10 * scale;
}

}  // namespace

QpSolution solve_box_qp_exact(const Matrix& H, const Vector& linear, const Vector& lo,
                              const Vector& hi) {
  const Eigen::Index n = H.rows();
  if (H.cols() != n || linear.size() != n || lo.size() != n || hi.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "box oracle: inconsistent dimensions");
  }
  if (n > kBoxOracleMaxDim) {
    throw Error(ErrorKind::InstanceTooLarge,
                "box oracle handles at most 16 variables, got " + std::to_string(n));
  }
  if (n == 0) return QpSolution{Vector(0), 0.0, {}, 1};
  BoxSearch search{H, linear, lo, hi, kkt_tolerance(H, linear, lo, hi),
                   std::vector<int>(static_cast<std::size_t>(n), 0), 0, Vector()};
  // Strict convexity makes any KKT pattern the optimum, so try the pattern a
  // short projected-gradient run lands on before the full enumeration.
  bool found = false;
  {
    double lip = 0.0;  // Gershgorin bound on lambda_max(2H)
    for (Eigen::Index r = 0; r < n; ++r) lip = std::max(lip, 2.0 * H.row(r).cwiseAbs().sum());
    SmallVector u = 0.5 * (lo + hi);
    SmallVector grad(n);
    for (int it = 0; it < 20; ++it) {
      grad.noalias() = H * u;
      u = (u - (2.0 * grad + linear) / lip).cwiseMax(lo).cwiseMin(hi);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      search.state[k] = u(k) <= lo(k) ? -1 : (u(k) >= hi(k) ? 1 : 0);
    }
    found = search.check();
  }
  for (int active = 0; !found && active <= n; ++active) {
    std::fill(search.state.begin(), search.state.end(), 0);
    found = search.place(0, active);
  }
  if (search.best.size() != n) {
    throw Error(ErrorKind::Infeasible, "box oracle found no KKT point");
  }
  QpSolution sol;
  sol.u = search.best;
  sol.value = sol.u.dot(H * sol.u) + linear.dot(sol.u);
  sol.candidates = search.candidates;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (search.state[k] != 0) sol.active.push_back(static_cast<int>(k));
  }
  return sol;
}

QpSolution solve_constrained_qp_exact(const CondensedProblem& p, const Vector& x, double c,
                                      long max_candidates) {
  const Eigen::Index n = p.n_u();
  const Eigen::Index mc = p.n_constraints();
  const Eigen::Index rows = mc + 2 * n;
  Matrix A(rows, n);
  Vector b(rows);
  A.topRows(mc) = p.Theta;
  b.head(mc) = -(p.Xi * x + p.tau) - Vector::Constant(mc, c);
  A.middleRows(mc, n) = Matrix::Identity(n, n);
  b.segment(mc, n) = p.box_hi;
  A.bottomRows(n) = -Matrix::Identity(n, n);
  b.tail(n) = -p.box_lo;

  const Matrix H2 = 2.0 * p.H;
  const Vector q = p.G * x;
  const double scale = 1.0 + q.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff() +
                       H2.cwiseAbs().maxCoeff() *
                           std::max(p.box_lo.cwiseAbs().maxCoeff(), p.box_hi.cwiseAbs().maxCoeff());
  const double tol = 1e-10 * scale;

  std::vector<int> active;
  long candidates = 0;
  Vector best;

  // Box rows k (upper) and k + n (lower) never appear together.
  auto conflicts = [&](int row) {
    if (row < mc) return false;
    const int partner = row < mc + n ? row + static_cast<int>(n) : row - static_cast<int>(n);
    return std::find(active.begin(), active.end(), partner) != active.end();
  };

  auto check = [&]() -> bool {
    if (++candidates > max_candidates) {
      throw Error(ErrorKind::InstanceTooLarge, "constrained oracle exceeded its candidate budget");
    }
    const auto s = static_cast<Eigen::Index>(active.size());
    Matrix kkt = Matrix::Zero(n + s, n + s);
    Vector rhs(n + s);
    kkt.topLeftCorner(n, n) = H2;
    rhs.head(n) = -q;
    for (Eigen::Index a = 0; a < s; ++a) {
      kkt.block(0, n + a, n, 1) = A.row(active[a]).transpose();
      kkt.block(n + a, 0, 1, n) = A.row(active[a]);
      rhs(n + a) = b(active[a]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) return false;
    const Vector sol = lu.solve(rhs);
    const Vector u = sol.head(n);
    for (Eigen::Index a = 0; a < s; ++a) {
      if (sol(n + a) < -tol) return false;
    }
    if (((A * u - b).array() > tol).any()) return false;
    best = u;
    return true;
  };

  std::function<bool(int, int)> place = [&](int from, int remaining) -> bool {
    if (remaining == 0) return check();
    for (int row = from; row <= rows - remaining; ++row) {
      if (conflicts(row)) continue;
      active.push_back(row);
      if (place(row + 1, remaining - 1)) return true;
      active.pop_back();
    }
    return false;
  };

  for (int size = 0; size <= n; ++size) {
    active.clear();
    if (place(0, size)) break;
  }
  if (best.size() != n) {
    throw Error(ErrorKind::Infeasible, "constrained oracle found no feasible KKT point");
  }
  QpSolution out;
  out.u = best;
  out.value = eval_cost(p, best, x);
  out.active = active;
  out.candidates = candidates;
  return out;
}

QpSolution solve_constrained_qp_exact(const TightenedProblem& tp, long max_candidates) {
  return solve_constrained_qp_exact(tp.problem(), tp.x, tp.c, max_candidates);
}

Vector dual_argmin_exact(const TightenedProblem& tp, const Vector& mu) {
  const CondensedProblem& p = tp.problem();
  const Vector linear = p.G * tp.x + p.Theta.transpose() * mu;
  return solve_box_qp_exact(p.H, linear, p.box_lo, p.box_hi).u;
}

double dual_function_exact(const TightenedProblem& tp, const Vector& mu) {
  const CondensedProblem& p = tp.problem();
  if (mu.size() != p.n_constraints()) {
    throw Error(ErrorKind::DimensionMismatch, "dual function: mu has the wrong size");
  }
  const Vector linear = p.G * tp.x + p.Theta.transpose() * mu;
  const QpSolution box = solve_box_qp_exact(p.H, linear, p.box_lo, p.box_hi);
  const Vector constant = p.Xi * tp.x + p.tau + Vector::Constant(p.n_constraints(), tp.c);
  return box.value + tp.x.dot(p.W * tp.x) + mu.dot(constant);
}

}  // namespace hmpc
