#include "hmpc/inner_jacobi.hpp"

#include "hmpc/box_qp.hpp"
#include "hmpc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

namespace hmpc {

namespace {

double box_radius(const CondensedProblem& p) {
  return p.box_lo.cwiseAbs().cwiseMax(p.box_hi.cwiseAbs()).norm();
}


}  // namespace

std::vector<std::vector<std::size_t>> coupling_sets(const CondensedProblem& p) {
  const std::size_t M = p.n_blocks();
  std::vector<std::vector<std::size_t>> sets(M);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < M; ++j) {
      if (i != j && p.H_block(i, j).cwiseAbs().maxCoeff() != 0.0) sets[i].push_back(j);
    }
  }
  return sets;
}

std::vector<double> block_diameters(const CondensedProblem& p) {
  std::vector<double> d;
  for (const auto& blk : p.blocks) {
    d.push_back((p.box_hi.segment(blk.offset, blk.size) - p.box_lo.segment(blk.offset, blk.size)).norm());
  }
  return d;
}

double contraction_modulus(const ContractionCertificate& cert, double gamma) {
  double phi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cert.lambda_min.size(); ++i) {
    const double s = cert.offdiag_sigma_sum[i];
    phi = std::max(phi, 2.0 * gamma * (cert.lambda_max[i] + s) - 1.0);
    phi = std::max(phi, 1.0 - 2.0 * gamma * (cert.lambda_min[i] - s));
  }
  return phi;
}

ContractionCertificate compute_contraction_certificate(const CondensedProblem& p) {
  ContractionCertificate cert;
  const std::size_t M = p.n_blocks();
  double worst_gap = std::numeric_limits<double>::infinity();
  double denom = 0.0;
  cert.pass = true;
  for (std::size_t i = 0; i < M; ++i) {
    const Matrix hii = p.H_block(i, i);
    cert.lambda_min.push_back(min_eigenvalue(hii));
    cert.lambda_max.push_back(max_eigenvalue(hii));
    double s = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      if (j != i) s += max_singular_value(p.H_block(i, j));
    }
    cert.offdiag_sigma_sum.push_back(s);
    const double gap = cert.lambda_min[i] - s;
    if (gap < worst_gap) {
      worst_gap = gap;
      cert.worst_block = i;
    }
    if (!(gap > 0.0)) cert.pass = false;
    denom = std::max(denom, cert.lambda_max[i] + s);
  }
  cert.gamma = 0.5 / denom;
  cert.phi = cert.pass ? std::max(0.0, contraction_modulus(cert, cert.gamma)) : 1.0;
  cert.two_h_norm = 2.0 * max_singular_value(p.H);
  cert.box_radius = box_radius(p);
  cert.diameters = block_diameters(p);
  cert.couplings = coupling_sets(p);
  return cert;
}

ContractionCertificate certify_contraction(const CondensedProblem& p) {
  ContractionCertificate cert = compute_contraction_certificate(p);
  if (!cert.pass) {
    const std::size_t i = cert.worst_block;
    std::ostringstream msg;
    msg.precision(17);
    msg << "block " << i << ": lambda_min(H_ii) = " << cert.lambda_min[i]
        << " does not exceed sum of coupling norms " << cert.offdiag_sigma_sum[i];
    throw Error(ErrorKind::WeakCouplingViolated, msg.str());
  }
  return cert;
}

Vector lagrangian_linear_term(const CondensedProblem& p, const Vector& mu, const Vector& x) {
  return p.G * x + p.Theta.transpose() * mu;
}

double lipschitz_bound(const CondensedProblem& p, const Vector& mu, const Vector& x) {
  return 2.0 * max_singular_value(p.H) * box_radius(p) + lagrangian_linear_term(p, mu, x).norm();
}

double lagrangian_value(const TightenedProblem& tp, const Vector& u, const Vector& mu) {
  return eval_cost(tp.problem(), u, tp.x) + mu.dot(eval_tightened_constraints(tp, u));
}

int inner_iterations_needed(double phi, double lambda, double eps, double max_diameter,
                            std::size_t M) {
  const double scale = lambda * static_cast<double>(M) * max_diameter;
  if (!(eps > 0.0)) {
    throw Error(ErrorKind::ValidationError, "inner suboptimality must be positive");
  }
  if (scale <= eps || phi <= 0.0) return 1;
  if (!(phi < 1.0)) {
    throw Error(ErrorKind::WeakCouplingViolated, "contraction modulus must be below one");
  }
  const auto ok = [&](int p) { return scale * std::pow(phi, p) <= eps; };
  int p = std::max(1, static_cast<int>(std::ceil(std::log(eps / scale) / std::log(phi))));
  while (p > 1 && ok(p - 1)) --p;
  while (!ok(p)) ++p;
  return p;
}

BlockData make_block_data(const CondensedProblem& p, std::size_t i,
                          const std::vector<std::size_t>& neighbours) {
  BlockData b;
  b.index = i;
  b.H_ii = p.H_block(i, i);
  b.neighbours = neighbours;
  for (std::size_t j : neighbours) b.H_ij.push_back(p.H_block(i, j));
  const BlockRange r = p.blocks[i];
  b.G_i = p.G.middleRows(r.offset, r.size);
  b.Theta_i = p.Theta.middleCols(r.offset, r.size);
  b.ThetaT_i = b.Theta_i.transpose();
  b.lo = p.box_lo.segment(r.offset, r.size);
  b.hi = p.box_hi.segment(r.offset, r.size);
  return b;
}

Vector block_linear_term(const BlockData& block, const Vector& mu, const Vector& x) {
  const Vector gx = block.G_i * x;
  const Vector tm = block.ThetaT_i * mu;
  return gx + tm;
}

Vector solve_local(const BlockData& block, const Vector& linear_i,
                   const std::vector<Vector>& neighbour_values, const Vector& start) {
  if (neighbour_values.size() != block.neighbours.size()) {
    throw Error(ErrorKind::DimensionMismatch, "solve_local: one value per neighbour expected");
  }
  Vector lin = linear_i;
  for (std::size_t k = 0; k < block.neighbours.size(); ++k) {
    const Vector coupling = block.H_ij[k] * neighbour_values[k];
    lin += 2.0 * coupling;
  }
  return solve_box_qp(block.H_ii, lin, block.lo, block.hi, start).u;
}

Vector local_argmin(const CondensedProblem& p, const Vector& linear, const Vector& u,
                    std::size_t i) {
  const auto sets = coupling_sets(p);
  const BlockData block = make_block_data(p, i, sets[i]);
  std::vector<Vector> values;
  for (std::size_t j : block.neighbours) values.push_back(p.block(u, j));
  return solve_local(block, p.block(linear, i), values, p.block(u, i));
}

Vector jacobi_sweep(const CondensedProblem& p, const std::vector<BlockData>& blocks,
                    const std::vector<Vector>& linear_blocks, const Vector& u, bool parallel) {
  const std::size_t M = p.n_blocks();
  std::vector<Vector> out(M);
  auto work = [&](std::size_t i) {
    std::vector<Vector> values;
    for (std::size_t j : blocks[i].neighbours) values.push_back(p.block(u, j));
    out[i] = solve_local(blocks[i], linear_blocks[i], values, p.block(u, i));
  };
  if (parallel && M > 1) {
    std::vector<std::future<void>> tasks;
    for (std::size_t i = 1; i < M; ++i) tasks.push_back(std::async(std::launch::async, work, i));
    work(0);
    for (auto& t : tasks) t.get();
  } else {
    for (std::size_t i = 0; i < M; ++i) work(i);
  }
  Vector next(u.size());
  for (std::size_t i = 0; i < M; ++i) next.segment(p.blocks[i].offset, p.blocks[i].size) = out[i];
  return next;
}

std::vector<BlockData> make_all_block_data(const CondensedProblem& p,
                                           const ContractionCertificate& cert) {
  std::vector<BlockData> blocks;
  for (std::size_t i = 0; i < p.n_blocks(); ++i) {
    blocks.push_back(make_block_data(p, i, cert.couplings.at(i)));
  }
  return blocks;
}

std::vector<Vector> block_linear_terms(const std::vector<BlockData>& blocks, const Vector& mu,
                                       const Vector& x) {
  std::vector<Vector> out;
  for (const auto& b : blocks) out.push_back(block_linear_term(b, mu, x));
  return out;
}

double lipschitz_from_terms(const ContractionCertificate& cert,
                            const std::vector<Vector>& linear_blocks) {
  double sq = 0.0;
  for (const auto& b : linear_blocks) sq += b.squaredNorm();
  return cert.two_h_norm * cert.box_radius + std::sqrt(sq);
}

int sweeps_needed(const ContractionCertificate& cert, double lipschitz, double eps) {
  if (!cert.pass) {
    throw Error(ErrorKind::WeakCouplingViolated, "Jacobi iteration needs a passing certificate");
  }
  const double max_d = *std::max_element(cert.diameters.begin(), cert.diameters.end());
  return inner_iterations_needed(cert.phi, lipschitz, eps, max_d, cert.diameters.size());
}

Vector run_jacobi(const CondensedProblem& p, const std::vector<BlockData>& blocks,
                  const std::vector<Vector>& linear_blocks, const Vector& start, int sweeps,
                  const InnerOptions& opts) {
  Vector u = start;
  for (int sweep = 1; sweep <= sweeps; ++sweep) {
    u = jacobi_sweep(p, blocks, linear_blocks, u, opts.parallel);
    if (opts.observer != nullptr && *opts.observer) (*opts.observer)(sweep, u);
  }
  return u;
}

InnerResult solve_lagrangian(const TightenedProblem& tp, const Vector& mu, double eps,
                             const ContractionCertificate& cert, const Vector& warm_start,
                             const InnerOptions& opts) {
  const CondensedProblem& p = tp.problem();
  const auto blocks = make_all_block_data(p, cert);
  const auto linear_blocks = block_linear_terms(blocks, mu, tp.x);
  InnerResult result;
  result.lipschitz = lipschitz_from_terms(cert, linear_blocks);
  result.sweeps = sweeps_needed(cert, result.lipschitz, eps);
  const Vector start = warm_start.cwiseMax(p.box_lo).cwiseMin(p.box_hi);
  result.u = run_jacobi(p, blocks, linear_blocks, start, result.sweeps, opts);
  return result;
}

}  // namespace hmpc
