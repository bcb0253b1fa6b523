#include "hmpc/model.hpp"

#include "hmpc/linalg.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hmpc {

namespace {

std::string subsystem_path(std::size_t pos, const std::string& leaf) {
  return "subsystems[" + std::to_string(pos) + "]." + leaf;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

// Number of d-subsets of m rows, saturating at `limit + 1`.
std::size_t binomial_capped(std::size_t m, std::size_t d, std::size_t limit) {
  if (d > m) return 0;
  d = std::min(d, m - d);
  double acc = 1.0;
  for (std::size_t i = 1; i <= d; ++i) {
    acc = acc * static_cast<double>(m - d + i) / static_cast<double>(i);
    if (acc > static_cast<double>(limit)) return limit + 1;
  }
  return static_cast<std::size_t>(std::llround(acc));
}

double row_tol(const Polytope& poly, Eigen::Index row, const Vector& x) {
  const double scale = 1.0 + std::abs(poly.f(row)) + poly.E.row(row).cwiseAbs().dot(x.cwiseAbs());
  return 1e-9 * scale;
}

void validate_polytope(Polytope& poly, Eigen::Index dim, const std::string& name,
                       std::size_t vertex_cap) {
  if (poly.E.cols() != dim || poly.E.rows() != poly.f.size() || poly.E.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch,
                name + ": inequality matrix must be rows x " + std::to_string(dim) +
                    " with a matching right-hand side",
                name);
  }
  if (!all_finite(poly.E) || !poly.f.allFinite()) {
    throw Error(ErrorKind::ValidationError, name + ": non-finite entries", name);
  }
  if (poly.vertices.empty()) {
    poly.vertices = enumerate_vertices(poly, vertex_cap);
    if (poly.vertices.empty()) {
      throw Error(ErrorKind::ValidationError, name + ": empty or unbounded polytope", name);
    }
  }
  if (poly.vertices.size() > vertex_cap) {
    throw Error(ErrorKind::VertexEnumerationTooLarge,
                name + ": vertex list exceeds cap " + std::to_string(vertex_cap), name);
  }
  for (std::size_t k = 0; k < poly.vertices.size(); ++k) {
    const Vector& v = poly.vertices[k];
    const std::string path = name + ".vertices[" + std::to_string(k) + "]";
    if (v.size() != dim) {
      throw Error(ErrorKind::DimensionMismatch, path + ": wrong dimension", path);
    }
    const Vector slack = poly.slack(v);
    std::vector<Eigen::Index> active;
    for (Eigen::Index r = 0; r < poly.rows(); ++r) {
      if (slack(r) < -row_tol(poly, r, v)) {
        throw Error(ErrorKind::ValidationError, path + ": violates row " + std::to_string(r),
                    path);
      }
      if (slack(r) <= row_tol(poly, r, v)) active.push_back(r);
    }
    Matrix tight(static_cast<Eigen::Index>(active.size()), dim);
    for (std::size_t a = 0; a < active.size(); ++a) tight.row(static_cast<Eigen::Index>(a)) = poly.E.row(active[a]);
    if (active.empty() || Eigen::FullPivLU<Matrix>(tight).rank() < dim) {
      throw Error(ErrorKind::ValidationError, path + ": not a vertex of the inequality system",
                  path);
    }
  }
  Vector centroid = Vector::Zero(dim);
  for (const auto& v : poly.vertices) centroid += v;
  centroid /= static_cast<double>(poly.vertices.size());
  if (poly.slack(centroid).minCoeff() <= kInteriorTol) {
    throw Error(ErrorKind::ValidationError, name + ": no interior point (empty interior)", name);
  }
}

}  // namespace

std::size_t NetworkSpec::position_of(int id) const {
  for (std::size_t k = 0; k < subsystems.size(); ++k) {
    if (subsystems[k].id == id) return k;
  }
  throw Error(ErrorKind::UnknownSubsystem, "no subsystem with id " + std::to_string(id));
}

std::vector<Vector> enumerate_vertices(const Polytope& poly, std::size_t cap) {
  const auto m = static_cast<std::size_t>(poly.rows());
  const auto d = static_cast<std::size_t>(poly.dim());
  if (d == 0 || m < d) return {};
  if (binomial_capped(m, d, cap) > cap) {
    throw Error(ErrorKind::VertexEnumerationTooLarge,
                "row subsets exceed vertex enumeration cap " + std::to_string(cap));
  }
  std::vector<Vector> vertices;
  std::vector<std::size_t> idx(d);
  for (std::size_t k = 0; k < d; ++k) idx[k] = k;
  Matrix sub(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Vector rhs(static_cast<Eigen::Index>(d));
  while (true) {
    for (std::size_t k = 0; k < d; ++k) {
      sub.row(static_cast<Eigen::Index>(k)) = poly.E.row(static_cast<Eigen::Index>(idx[k]));
      rhs(static_cast<Eigen::Index>(k)) = poly.f(static_cast<Eigen::Index>(idx[k]));
    }
    Eigen::FullPivLU<Matrix> lu(sub);
    if (lu.rank() == static_cast<Eigen::Index>(d)) {
      const Vector v = lu.solve(rhs);
      const Vector slack = poly.slack(v);
      bool feasible = true;
      for (Eigen::Index r = 0; r < poly.rows(); ++r) {
        if (slack(r) < -row_tol(poly, r, v)) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        const bool duplicate = std::any_of(vertices.begin(), vertices.end(), [&](const Vector& w) {
          return (w - v).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + v.cwiseAbs().maxCoeff());
        });
        if (!duplicate) vertices.push_back(v);
      }
    }
    // next combination
    std::size_t k = d;
    while (k > 0 && idx[k - 1] == m - d + (k - 1)) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t j = k; j < d; ++j) idx[j] = idx[j - 1] + 1;
  }
  return vertices;
}

void validate_network(NetworkSpec& network, std::size_t vertex_cap) {
  if (network.horizon < 1) {
    throw Error(ErrorKind::ValidationError, "horizon must be a positive integer", "horizon");
  }
  if (network.subsystems.empty()) {
    throw Error(ErrorKind::ValidationError, "at least one subsystem required", "subsystems");
  }
  std::set<int> ids;
  for (std::size_t pos = 0; pos < network.size(); ++pos) {
    const auto& s = network.subsystems[pos];
    if (!ids.insert(s.id).second) {
      throw Error(ErrorKind::ValidationError, "duplicate subsystem id", subsystem_path(pos, "id"));
    }
  }
  for (std::size_t pos = 0; pos < network.size(); ++pos) {
    auto& s = network.subsystems[pos];
    if (s.n < 1 || s.m < 1) {
      throw Error(ErrorKind::ValidationError, "state and input dimensions must be positive",
                  subsystem_path(pos, "n"));
    }
    auto check_spd = [&](const Matrix& mat, Eigen::Index dim, const char* leaf) {
      if (mat.rows() != dim || mat.cols() != dim) {
        throw Error(ErrorKind::DimensionMismatch, std::string(leaf) + " has the wrong shape",
                    subsystem_path(pos, leaf));
      }
      if (!all_finite(mat) || !is_positive_definite(mat)) {
        throw Error(ErrorKind::ValidationError,
                    std::string(leaf) + " must be symmetric positive definite",
                    subsystem_path(pos, leaf));
      }
    };
    check_spd(s.Q, s.n, "Q");
    check_spd(s.R, s.m, "R");
    check_spd(s.P, s.n, "P");
    if (s.K.size() == 0) {
      throw Error(ErrorKind::ValidationError, "terminal feedback gain K is required",
                  subsystem_path(pos, "K"));
    }
    if (s.K.rows() != s.m || s.K.cols() != s.n || !all_finite(s.K)) {
      throw Error(ErrorKind::DimensionMismatch, "K must be m x n", subsystem_path(pos, "K"));
    }
    if (s.input_box.lower.size() != s.m || s.input_box.upper.size() != s.m) {
      throw Error(ErrorKind::DimensionMismatch, "input box must have m entries",
                  subsystem_path(pos, "input_box"));
    }
    for (Eigen::Index k = 0; k < s.m; ++k) {
      const double lo = s.input_box.lower(k);
      const double hi = s.input_box.upper(k);
      if (std::isnan(lo) || std::isnan(hi) || !(lo < hi)) {
        throw Error(ErrorKind::ValidationError, "input box needs lower < upper in every coordinate",
                    subsystem_path(pos, "input_box"));
      }
    }
    if (!s.A_blocks.count(s.id)) {
      throw Error(ErrorKind::ValidationError, "A blocks must contain the self block",
                  subsystem_path(pos, "A"));
    }
    for (const auto& [nid, blk] : s.A_blocks) {
      if (!ids.count(nid)) {
        throw Error(ErrorKind::ValidationError, "unknown neighbor id " + std::to_string(nid),
                    subsystem_path(pos, "A"));
      }
      if (!all_finite(blk)) {
        throw Error(ErrorKind::ValidationError, "non-finite coupling block",
                    subsystem_path(pos, "A"));
      }
    }
    for (const auto& [nid, blk] : s.B_blocks) {
      if (!ids.count(nid)) {
        throw Error(ErrorKind::ValidationError, "unknown neighbor id " + std::to_string(nid),
                    subsystem_path(pos, "B"));
      }
      if (!all_finite(blk)) {
        throw Error(ErrorKind::ValidationError, "non-finite coupling block",
                    subsystem_path(pos, "B"));
      }
    }
  }
  // Shapes of coupling blocks are checked during assembly.
  const AggregateModel model = assemble_aggregate(network);
  validate_polytope(network.X, model.n_x(), "X", vertex_cap);
  validate_polytope(network.Xf, model.n_x(), "Xf", vertex_cap);
  validate_polytope(network.U, model.n_u(), "U", vertex_cap);
  for (std::size_t k = 0; k < network.Xf.vertices.size(); ++k) {
    const Vector& v = network.Xf.vertices[k];
    const Vector slack = network.X.slack(v);
    for (Eigen::Index r = 0; r < slack.size(); ++r) {
      if (slack(r) < -row_tol(network.X, r, v)) {
        throw Error(ErrorKind::ValidationError, "Xf is not contained in X",
                    "Xf.vertices[" + std::to_string(k) + "]");
      }
    }
  }
}

AggregateModel assemble_aggregate(const NetworkSpec& network) {
  AggregateModel model;
  Eigen::Index nx = 0;
  Eigen::Index nu = 0;
  for (const auto& s : network.subsystems) {
    model.state_blocks.push_back({nx, s.n});
    model.input_blocks.push_back({nu, s.m});
    nx += s.n;
    nu += s.m;
  }
  model.A = Matrix::Zero(nx, nx);
  model.B = Matrix::Zero(nx, nu);
  std::vector<Matrix> qs, rs, ps, ks;
  for (std::size_t pos = 0; pos < network.size(); ++pos) {
    const auto& s = network.subsystems[pos];
    const BlockRange rows = model.state_blocks[pos];
    for (const auto& [nid, blk] : s.A_blocks) {
      const std::size_t j = network.position_of(nid);
      const BlockRange cols = model.state_blocks[j];
      if (blk.rows() != rows.size || blk.cols() != cols.size) {
        throw Error(ErrorKind::DimensionMismatch,
                    "A block (" + std::to_string(s.id) + "," + std::to_string(nid) +
                        ") must be " + std::to_string(rows.size) + "x" + std::to_string(cols.size),
                    subsystem_path(pos, "A"));
      }
      model.A.block(rows.offset, cols.offset, rows.size, cols.size) = blk;
    }
    for (const auto& [nid, blk] : s.B_blocks) {
      const std::size_t j = network.position_of(nid);
      const BlockRange cols = model.input_blocks[j];
      if (blk.rows() != rows.size || blk.cols() != cols.size) {
        throw Error(ErrorKind::DimensionMismatch,
                    "B block (" + std::to_string(s.id) + "," + std::to_string(nid) +
                        ") must be " + std::to_string(rows.size) + "x" + std::to_string(cols.size),
                    subsystem_path(pos, "B"));
      }
      model.B.block(rows.offset, cols.offset, rows.size, cols.size) = blk;
    }
    qs.push_back(s.Q);
    rs.push_back(s.R);
    ps.push_back(s.P);
    ks.push_back(s.K);
  }
  model.Q = block_diagonal(qs);
  model.R = block_diagonal(rs);
  model.P = block_diagonal(ps);
  model.K = block_diagonal(ks);
  if (model.K.rows() != nu || model.K.cols() != nx) {
    throw Error(ErrorKind::DimensionMismatch, "K blocks do not match subsystem dimensions", "K");
  }
  return model;
}

CouplingGraph build_coupling_graph(const NetworkSpec& network) {
  CouplingGraph graph;
  for (const auto& s : network.subsystems) {
    auto& set = graph.neighbors[s.id];
    set.insert(s.id);
    for (const auto& entry : s.A_blocks) set.insert(entry.first);
    for (const auto& entry : s.B_blocks) set.insert(entry.first);
  }
  return graph;
}

std::set<int> extended_neighborhood(const CouplingGraph& graph, int id, int r) {
  if (r < 1) {
    throw Error(ErrorKind::ValidationError, "neighbourhood radius must be >= 1");
  }
  const auto it = graph.neighbors.find(id);
  if (it == graph.neighbors.end()) {
    throw Error(ErrorKind::UnknownSubsystem, "no subsystem with id " + std::to_string(id));
  }
  std::set<int> current = it->second;
  for (int step = 2; step <= r; ++step) {
    std::set<int> next;
    for (int j : current) {
      const auto jt = graph.neighbors.find(j);
      if (jt == graph.neighbors.end()) {
        throw Error(ErrorKind::UnknownSubsystem, "no subsystem with id " + std::to_string(j));
      }
      next.insert(jt->second.begin(), jt->second.end());
    }
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

SchurCertificate check_schur(const AggregateModel& model) {
  const auto M = model.state_blocks.size();
  for (std::size_t a = 0; a < M; ++a) {
    for (std::size_t b = 0; b < M; ++b) {
      if (a == b) continue;
      const auto& rows = model.input_blocks[a];
      const auto& cols = model.state_blocks[b];
      if (model.K.block(rows.offset, cols.offset, rows.size, cols.size).cwiseAbs().maxCoeff() != 0.0) {
        throw Error(ErrorKind::NotBlockDiagonalK,
                    "K has a nonzero block (" + std::to_string(a) + "," + std::to_string(b) + ")");
      }
    }
  }
  SchurCertificate cert;
  cert.radius = spectral_radius(model.closed_loop());
  cert.pass = cert.radius < 1.0 - kInteriorTol;
  return cert;
}

SchurCertificate check_schur(const NetworkSpec& network) {
  return check_schur(assemble_aggregate(network));
}

InvarianceCertificate check_terminal_invariance(const NetworkSpec& network,
                                                std::size_t vertex_cap) {
  const AggregateModel model = assemble_aggregate(network);
  std::vector<Vector> vertices = network.Xf.vertices;
  if (vertices.empty()) vertices = enumerate_vertices(network.Xf, vertex_cap);
  if (vertices.size() > vertex_cap) {
    throw Error(ErrorKind::VertexEnumerationTooLarge, "Xf vertex count exceeds cap");
  }
  const Matrix closed = model.closed_loop();
  InvarianceCertificate cert;
  cert.worst_margin = std::numeric_limits<double>::infinity();
  cert.worst_input_margin = std::numeric_limits<double>::infinity();
  double worst_u_slack = std::numeric_limits<double>::infinity();
  double worst_box_slack = std::numeric_limits<double>::infinity();
  for (const auto& v : vertices) {
    cert.worst_margin = std::min(cert.worst_margin, network.Xf.slack(closed * v).minCoeff());
    const Vector u = model.K * v;
    if (network.U.rows() > 0) worst_u_slack = std::min(worst_u_slack, network.U.slack(u).minCoeff());
    for (std::size_t pos = 0; pos < network.size(); ++pos) {
      const auto& box = network.subsystems[pos].input_box;
      const auto blk = model.input_blocks[pos];
      const Vector ui = u.segment(blk.offset, blk.size);
      worst_box_slack = std::min(worst_box_slack, (ui - box.lower).minCoeff());
      worst_box_slack = std::min(worst_box_slack, (box.upper - ui).minCoeff());
    }
  }
  cert.pass = cert.worst_margin > kInteriorTol;
  cert.worst_input_margin = std::min(worst_u_slack, worst_box_slack);
  cert.inputs_admissible = worst_u_slack > kInteriorTol && worst_box_slack >= -kInteriorTol;
  return cert;
}

}  // namespace hmpc
