#pragma once

#include "hmpc/condense.hpp"

namespace hmpc::testing {

/// Condensed problem built straight from H, one state, no coupled rows,
/// with every coordinate its own block unless `block_sizes` says otherwise.
inline CondensedProblem raw_problem(const Matrix& H, const Vector& lo, const Vector& hi,
                                    std::vector<Eigen::Index> block_sizes = {}) {
  CondensedProblem p;
  const Eigen::Index n = H.rows();
  p.H = H;
  p.G = Matrix::Zero(n, 1);
  p.W = Matrix::Zero(1, 1);
  p.Xi = Matrix::Zero(0, 1);
  p.Theta = Matrix::Zero(0, n);
  p.tau = Vector::Zero(0);
  p.box_lo = lo;
  p.box_hi = hi;
  p.horizon = 1;
  if (block_sizes.empty()) block_sizes.assign(static_cast<std::size_t>(n), 1);
  Eigen::Index offset = 0;
  for (Eigen::Index s : block_sizes) {
    p.blocks.push_back({offset, s});
    offset += s;
  }
  return p;
}

}  // namespace hmpc::testing
