#include "hmpc/tighten.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <cstdint>

namespace hmpc {

namespace {

constexpr Eigen::Index kExactVertexLimit = 20;

}  // namespace

SlaterCertificate make_slater_certificate(const CondensedProblem& p, const Vector& x,
                                          const Vector& u_bar) {
  if (u_bar.size() != p.n_u()) {
    throw Error(ErrorKind::DimensionMismatch, "Slater vector has the wrong size");
  }
  for (Eigen::Index k = 0; k < u_bar.size(); ++k) {
    if (u_bar(k) < p.box_lo(k) || u_bar(k) > p.box_hi(k)) {
      throw Error(ErrorKind::SlaterViolated,
                  "Slater vector leaves the input box at coordinate " + std::to_string(k));
    }
  }
  SlaterCertificate cert;
  cert.u_bar = u_bar;
  cert.margins = -eval_constraints(p, u_bar, x);
  cert.min_margin = cert.margins.size() > 0 ? cert.margins.minCoeff()
                                            : std::numeric_limits<double>::infinity();
  return cert;
}

double initial_norm_bound(const CondensedProblem& p, const Vector& x0) {
  if (!p.box_lo.allFinite() || !p.box_hi.allFinite()) {
    throw Error(ErrorKind::UnboundedBox, "norm bound needs a finite input box");
  }
  const Vector base = p.Xi * x0 + p.tau;
  const Eigen::Index n = p.n_u();
  if (n <= kExactVertexLimit) {
    // Gray-code walk over the box vertices, resynchronised periodically so
    // the accumulated rounding stays at the level of a direct evaluation.
    const std::uint64_t count = std::uint64_t{1} << n;
    std::uint64_t state = 0;
    Vector g = base + p.Theta * p.box_lo;
    double best = g.norm();
    const Vector width = p.box_hi - p.box_lo;
    for (std::uint64_t step = 1; step < count; ++step) {
      const int bit = std::countr_zero(step);
      state ^= std::uint64_t{1} << bit;
      if ((step & 255u) == 0) {
        Vector v = p.box_lo;
        for (Eigen::Index k = 0; k < n; ++k) {
          if ((state >> k) & 1u) v(k) = p.box_hi(k);
        }
        g = base + p.Theta * v;
      } else if ((state >> bit) & 1u) {
        g += p.Theta.col(bit) * width(bit);
      } else {
        g -= p.Theta.col(bit) * width(bit);
      }
      best = std::max(best, g.norm());
    }
    return best;
  }
  double bound = base.norm();
  for (Eigen::Index k = 0; k < n; ++k) {
    bound += p.Theta.col(k).norm() * std::max(std::abs(p.box_lo(k)), std::abs(p.box_hi(k)));
  }
  return bound;
}

double update_norm_bound(double L_prev, const Matrix& Xi, const Vector& x_t,
                         const Vector& x_prev) {
  return L_prev + (Xi * (x_t - x_prev)).norm();
}

MarginChoice choose_margin(const SlaterCertificate& slater) {
  if (!(slater.min_margin > 0.0)) {
    throw Error(ErrorKind::SlaterViolated,
                "Slater margin " + std::to_string(slater.min_margin) + " is not positive");
  }
  MarginChoice choice;
  choice.c = 0.5 * slater.min_margin;
  choice.gamma = slater.min_margin - choice.c;
  return choice;
}

TightenedProblem build_tightened(const CondensedProblem& p, const Vector& x,
                                 const SlaterCertificate& slater, double L) {
  const MarginChoice choice = choose_margin(slater);
  TightenedProblem tp;
  tp.base = &p;
  tp.x = x;
  tp.c = choice.c;
  tp.gamma = choice.gamma;
  tp.L = L;
  tp.L_prime = L + choice.c;
  tp.slater = slater;
  return tp;
}

Vector eval_tightened_constraints(const TightenedProblem& tp, const Vector& u) {
  Vector g = eval_constraints(tp.problem(), u, tp.x);
  g.array() += tp.c;
  return g;
}

Vector shift_slater(const CondensedProblem& p, const Vector& u, const Vector& x) {
  const Vector g = eval_constraints(p, u, x);
  const Eigen::Index first = p.x_rows;
  for (Eigen::Index r = first; r < first + p.xf_rows; ++r) {
    if (!(g(r) < -kInteriorTol)) {
      throw Error(ErrorKind::PredictedTerminalOutsideXf,
                  "predicted terminal state has slack " + std::to_string(-g(r)) +
                      " on terminal row " + std::to_string(r - first));
    }
  }
  const std::vector<Vector> states = rollout(p, x, u);
  std::vector<Vector> stages;
  for (int k = 1; k < p.horizon; ++k) stages.push_back(stage_input(p, u, k));
  stages.push_back(p.model.K * states.back());
  return stack_inputs(p, stages);
}

}  // namespace hmpc
