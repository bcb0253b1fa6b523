#include "hmpc/box_qp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

namespace hmpc {

namespace {

// Scratch buffers reused across calls; the solver runs millions of times on
// small blocks and would otherwise spend most of its time in the allocator.
struct Workspace {
  std::vector<Matrix> hff;  // indexed by free count
  std::vector<Vector> rhs;
  Vector x;
  Vector grad;
  std::vector<int> state;
  std::vector<Eigen::Index> free_idx;

  void prepare(Eigen::Index n) {
    if (static_cast<Eigen::Index>(hff.size()) <= n) {
      const auto old = static_cast<Eigen::Index>(hff.size());
      hff.resize(static_cast<std::size_t>(n + 1));
      rhs.resize(static_cast<std::size_t>(n + 1));
      for (Eigen::Index k = old; k <= n; ++k) {
        hff[k].resize(k, k);
        rhs[k].resize(k);
      }
    }
    x.resize(n);
    grad.resize(n);
    state.assign(static_cast<std::size_t>(n), 0);
    free_idx.reserve(static_cast<std::size_t>(n));
  }
};

thread_local Workspace workspace;

}  // namespace

BoxQpResult solve_box_qp(const Matrix& H, const Vector& lin, const Vector& lo, const Vector& hi,
                         const Vector& start) {
  const Eigen::Index n = H.rows();
  if (H.cols() != n || lin.size() != n || lo.size() != n || hi.size() != n ||
      start.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "solve_box_qp: inconsistent dimensions");
  }
  BoxQpResult result;
  Workspace& ws = workspace;
  ws.prepare(n);
  Vector& x = ws.x;
  x = start.cwiseMax(lo).cwiseMin(hi);
  // -1: fixed at lower, +1: fixed at upper, 0: free
  std::vector<int>& state = ws.state;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (x(k) == lo(k)) state[k] = -1;
    else if (x(k) == hi(k)) state[k] = 1;
  }
  const double scale = 1.0 + lin.cwiseAbs().maxCoeff() +
                       2.0 * H.cwiseAbs().maxCoeff() *
                           std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff());
  const double tol = 1e-13 * (std::isfinite(scale) ? scale : 1.0);
  const int cap = 100 + 20 * static_cast<int>(n * n);

  std::vector<Eigen::Index>& free_idx = ws.free_idx;
  for (int iter = 0; iter < cap; ++iter) {
    result.iterations = iter + 1;
    free_idx.clear();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (state[k] == 0) free_idx.push_back(k);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    Vector& y = ws.rhs[nf];
    if (nf > 0) {
      Matrix& hff = ws.hff[nf];
      Vector& rhs = y;
      for (Eigen::Index a = 0; a < nf; ++a) {
        double acc = lin(free_idx[a]);
        for (Eigen::Index k = 0; k < n; ++k) {
          if (state[k] != 0) acc += 2.0 * H(free_idx[a], k) * x(k);
        }
        rhs(a) = -acc;
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = 2.0 * H(free_idx[a], free_idx[b]);
      }
      // In-place factorisation of the scratch block.
      Eigen::LLT<Eigen::Ref<Matrix>> llt(hff);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::LocalSolveFailed, "box QP Hessian is not positive definite");
      }
      llt.solveInPlace(y);
    }

    double step = 1.0;
    Eigen::Index blocking = -1;
    int blocking_side = 0;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index k = free_idx[a];
      const double d = y(a) - x(k);
      if (y(a) < lo(k) && d < 0.0) {
        const double t = (lo(k) - x(k)) / d;
        if (t < step) {
          step = t;
          blocking = k;
          blocking_side = -1;
        }
      } else if (y(a) > hi(k) && d > 0.0) {
        const double t = (hi(k) - x(k)) / d;
        if (t < step) {
          step = t;
          blocking = k;
          blocking_side = 1;
        }
      }
    }

    if (blocking < 0) {
      for (Eigen::Index a = 0; a < nf; ++a) x(free_idx[a]) = y(a);
      Vector& grad = ws.grad;
      grad.noalias() = H * x;
      grad = 2.0 * grad + lin;
      Eigen::Index release = -1;
      double worst = tol;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double violation = state[k] == -1 ? -grad(k) : (state[k] == 1 ? grad(k) : 0.0);
        if (violation > worst) {
          worst = violation;
          release = k;
        }
      }
      if (release < 0) {
        result.u = x;
        result.value = x.dot(H * x) + lin.dot(x);
        return result;
      }
      state[release] = 0;
      continue;
    }

    step = std::max(step, 0.0);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index k = free_idx[a];
      x(k) += step * (y(a) - x(k));
    }
    x = x.cwiseMax(lo).cwiseMin(hi);
    x(blocking) = blocking_side < 0 ? lo(blocking) : hi(blocking);
    state[blocking] = blocking_side;
  }
  throw Error(ErrorKind::LocalSolveFailed, "box QP active set did not settle");
}

}  // namespace hmpc
