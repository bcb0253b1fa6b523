#pragma once

#include "hmpc/common.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <vector>

namespace hmpc {

/// Bounded polytope {x : E x <= f} together with its vertex list.
struct Polytope {
  Matrix E;
  Vector f;
  std::vector<Vector> vertices;

  Eigen::Index dim() const { return E.cols(); }
  Eigen::Index rows() const { return E.rows(); }

  /// f - E x; every entry positive means x is strictly inside.
  Vector slack(const Vector& x) const { return f - E * x; }
};

/// Axis-aligned box describing the local input set of one subsystem.
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return lower.size(); }
};

struct SubsystemSpec {
  int id = 0;
  Eigen::Index n = 0;  // state dimension
  Eigen::Index m = 0;  // input dimension
  std::map<int, Matrix> A_blocks;  // neighbor id -> n x n_j
  std::map<int, Matrix> B_blocks;  // neighbor id -> n x m_j
  Matrix Q;
  Matrix R;
  Matrix P;
  Matrix K;  // m x n, local feedback of the decentralized terminal law
  Box input_box;
};

struct NetworkSpec {
  std::vector<SubsystemSpec> subsystems;
  int horizon = 0;
  Polytope X;
  Polytope Xf;
  Polytope U;

  std::size_t size() const { return subsystems.size(); }

  /// Position of subsystem `id` in `subsystems`; throws UnknownSubsystem.
  std::size_t position_of(int id) const;
};

struct AggregateModel {
  Matrix A;
  Matrix B;
  Matrix Q;
  Matrix R;
  Matrix P;
  Matrix K;
  std::vector<BlockRange> state_blocks;
  std::vector<BlockRange> input_blocks;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B.cols(); }

  /// Closed loop A + B K of the decentralized terminal law.
  Matrix closed_loop() const { return A + B * K; }
};

/// Direct neighbourhoods N^i (subsystems whose state or input enters x^i).
struct CouplingGraph {
  std::map<int, std::set<int>> neighbors;
};

struct SchurCertificate {
  double radius = 0.0;
  bool pass = false;
};

struct InvarianceCertificate {
  double worst_margin = 0.0;  // min slack of (A+BK)v over vertices v of Xf
  bool pass = false;
  /// K v for every vertex v of Xf lies strictly inside U and inside the
  /// local boxes; required for the shifted Slater vector to stay admissible.
  double worst_input_margin = 0.0;
  bool inputs_admissible = false;
};

/// Checks shapes, definiteness, boxes, polytopes and vertex lists. Missing
/// vertex lists are enumerated from the inequalities (subject to
/// `vertex_cap`). Throws Error(ValidationError) naming the offending field.
void validate_network(NetworkSpec& network, std::size_t vertex_cap = 100000);

AggregateModel assemble_aggregate(const NetworkSpec& network);

CouplingGraph build_coupling_graph(const NetworkSpec& network);

/// N^i_r per the union recursion with N^i_1 = N^i.
std::set<int> extended_neighborhood(const CouplingGraph& graph, int id, int r);

SchurCertificate check_schur(const AggregateModel& model);
SchurCertificate check_schur(const NetworkSpec& network);

InvarianceCertificate check_terminal_invariance(const NetworkSpec& network,
                                                std::size_t vertex_cap = 100000);

/// Vertices of a bounded polytope by brute-force enumeration of row subsets.
/// Throws VertexEnumerationTooLarge when the subset count exceeds `cap`.
std::vector<Vector> enumerate_vertices(const Polytope& poly, std::size_t cap);

}  // namespace hmpc
