#pragma once

#include "hmpc/common.hpp"

namespace hmpc {

struct BoxQpResult {
  Vector u;
  double value = 0.0;
  int iterations = 0;
};

/**
 * Minimises u'Hu + lin'u over lo <= u <= hi for symmetric positive definite H
 * with a primal active-set method. Each iteration solves the equality
 * problem on the free coordinates exactly, so termination yields the exact
 * minimiser up to rounding of the final Cholesky solve. `start` is projected
 * onto the box and used as the initial working set.
 *
 * Throws LocalSolveFailed if the working set cycles past the iteration cap.
 */
BoxQpResult solve_box_qp(const Matrix& H, const Vector& lin, const Vector& lo, const Vector& hi,
                         const Vector& start);

}  // namespace hmpc
