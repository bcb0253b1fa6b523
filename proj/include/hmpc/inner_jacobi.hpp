#pragma once

#include "hmpc/tighten.hpp"

#include <functional>
#include <vector>

namespace hmpc {

/**
 * Block spectral data of H and the Jacobi contraction parameters derived
 * from it. Since g' is affine in u, the quadratic part of the Lagrangian does
 * not depend on the multipliers and one certificate serves a whole MPC step.
 */
struct ContractionCertificate {
  std::vector<double> lambda_min;         // lambda_min(H_ii)
  std::vector<double> lambda_max;         // lambda_max(H_ii)
  std::vector<double> offdiag_sigma_sum;  // sum_{j != i} sigma_max(H_ij)
  double gamma = 0.0;  // gradient step coefficient of the contraction mapping
  double phi = 1.0;    // contraction modulus in the block-maximum norm
  bool pass = false;
  std::size_t worst_block = 0;  // block with the smallest lambda_min - sigma sum

  // Problem constants reused by every inner solve.
  double two_h_norm = 0.0;           // ||2H||_2
  double box_radius = 0.0;           // ||v_far||_2, v_far = max(|lo|, |hi|)
  std::vector<double> diameters;     // D_i
  std::vector<std::vector<std::size_t>> couplings;
};

/// Computes the certificate without throwing; `pass` reports the weak
/// coupling condition.
ContractionCertificate compute_contraction_certificate(const CondensedProblem& p);

/// As above, but throws WeakCouplingViolated when the condition fails.
ContractionCertificate certify_contraction(const CondensedProblem& p);

/// Modulus max_i max{2 gamma (lmax_i + s_i) - 1, 1 - 2 gamma (lmin_i - s_i)}.
double contraction_modulus(const ContractionCertificate& cert, double gamma);

/// Lipschitz constant of u -> L'(u, mu) over the input box.
double lipschitz_bound(const CondensedProblem& p, const Vector& mu, const Vector& x);

/// Smallest p >= 1 with Lambda * M * phi^p * max_D <= eps.
int inner_iterations_needed(double phi, double lambda, double eps, double max_diameter,
                            std::size_t M);

/// Euclidean diameter of each subsystem's input box over the horizon.
std::vector<double> block_diameters(const CondensedProblem& p);

/// For each block i, the blocks j != i with H_ij not identically zero, in
/// ascending order. These are the agents i exchanges iterates with.
std::vector<std::vector<std::size_t>> coupling_sets(const CondensedProblem& p);

/// Linear term Gx + Theta' mu of the Lagrangian in u.
Vector lagrangian_linear_term(const CondensedProblem& p, const Vector& mu, const Vector& x);

/// L'(u, mu) = f(u, x) + mu' g'(u, x).
double lagrangian_value(const TightenedProblem& tp, const Vector& u, const Vector& mu);

/**
 * Everything block i needs for its local minimisation: its own Hessian
 * block, the coupling blocks H_ij for j in its coupling set, its rows of G
 * and columns of Theta, and its box. Copies, so an agent can own them.
 */
struct BlockData {
  std::size_t index = 0;
  Matrix H_ii;
  std::vector<std::size_t> neighbours;
  std::vector<Matrix> H_ij;  // aligned with `neighbours`
  Matrix G_i;                // rows of G
  Matrix Theta_i;            // columns of Theta
  Matrix ThetaT_i;           // Theta_i transposed
  Vector lo;
  Vector hi;
};

BlockData make_block_data(const CondensedProblem& p, std::size_t i,
                          const std::vector<std::size_t>& neighbours);

/// b_i = G_i x + Theta_i' mu.
Vector block_linear_term(const BlockData& block, const Vector& mu, const Vector& x);

/// argmin over the block box of u'H_ii u + (b_i + 2 sum_j H_ij u^j)' u, with
/// `neighbour_values[k]` the current iterate of block `neighbours[k]`.
Vector solve_local(const BlockData& block, const Vector& linear_i,
                   const std::vector<Vector>& neighbour_values, const Vector& start);

/// Exact block minimiser of the Lagrangian with the other blocks of `u`
/// fixed; `linear` is the full Gx + Theta' mu.
Vector local_argmin(const CondensedProblem& p, const Vector& linear, const Vector& u,
                    std::size_t i);

/// Block data for every block, with coupling sets taken from `cert`.
std::vector<BlockData> make_all_block_data(const CondensedProblem& p,
                                           const ContractionCertificate& cert);

/// b_i for every block.
std::vector<Vector> block_linear_terms(const std::vector<BlockData>& blocks, const Vector& mu,
                                       const Vector& x);

/// Lambda = ||2H|| rho + ||b||, with b given blockwise.
double lipschitz_from_terms(const ContractionCertificate& cert,
                            const std::vector<Vector>& linear_blocks);

/// p_bar for the given Lipschitz constant, using the certificate's phi and D_i.
int sweeps_needed(const ContractionCertificate& cert, double lipschitz, double eps);

/// Called after each sweep with the sweep index p (1-based) and u(p).
using SweepObserver = std::function<void(int, const Vector&)>;

struct InnerResult {
  Vector u;
  int sweeps = 0;
  double lipschitz = 0.0;
};

struct InnerOptions {
  bool parallel = false;
  const SweepObserver* observer = nullptr;
};

/**
 * Jacobi iteration on the Lagrangian at fixed mu. Runs the a-priori sweep
 * count from `warm_start` (projected onto the box) and returns u(p_bar), whose
 * Lagrangian value is within eps of the minimum over the box.
 */
InnerResult solve_lagrangian(const TightenedProblem& tp, const Vector& mu, double eps,
                             const ContractionCertificate& cert, const Vector& warm_start,
                             const InnerOptions& opts = {});

/// Runs `sweeps` Jacobi sweeps from `start` (assumed inside the box).
Vector run_jacobi(const CondensedProblem& p, const std::vector<BlockData>& blocks,
                  const std::vector<Vector>& linear_blocks, const Vector& start, int sweeps,
                  const InnerOptions& opts = {});

/// One synchronous sweep: every block minimises against the blocks of `u`.
/// `linear_blocks[i]` is b_i.
Vector jacobi_sweep(const CondensedProblem& p, const std::vector<BlockData>& blocks,
                    const std::vector<Vector>& linear_blocks, const Vector& u, bool parallel);

}  // namespace hmpc
