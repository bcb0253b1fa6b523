#pragma once

#include "hmpc/cli_io.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace hmpc::testing {

std::string fixture_path(const std::string& name);
ConfigDocument load_fixture(const std::string& name);

/// Scalar plant x+ = 0.5 x + u, N = 1, Q = R = P = 1, box [-1, 1],
/// X = [-2, 2], Xf = [-0.5, 0.5], U = [-1, 1].
NetworkSpec scalar_network(int horizon = 1);

/// scalar_network() with R = 10: from x = 1.5 the cheapest input leaves
/// the terminal set, so the coupled rows matter.
NetworkSpec heavy_input_network();

/// Box polytope |x_k| <= r_k with its vertex list.
Polytope box_polytope(const Vector& radius);

/**
 * Seeded random instance that passes every certificate: chain-coupled
 * subsystems (M in 1..3, n_i = m_i in 1..2, N in 1..4, at most 6 inputs,
 * contraction modulus at most 0.85), box X and Xf, U with
 * an extra coupled row, and a Slater vector with a comfortable margin.
 */
ConfigDocument random_instance(std::uint64_t seed);

/// Uniform sample of the input box.
Vector sample_box(const CondensedProblem& p, std::mt19937_64& rng);

}  // namespace hmpc::testing
