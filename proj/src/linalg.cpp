#include "hmpc/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace hmpc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotBlockDiagonalK: return "NotBlockDiagonalK";
    case ErrorKind::VertexEnumerationTooLarge: return "VertexEnumerationTooLarge";
    case ErrorKind::UnknownSubsystem: return "UnknownSubsystem";
    case ErrorKind::HorizonTooSmall: return "HorizonTooSmall";
    case ErrorKind::UnboundedBox: return "UnboundedBox";
    case ErrorKind::SlaterViolated: return "SlaterViolated";
    case ErrorKind::PredictedTerminalOutsideXf: return "PredictedTerminalOutsideXf";
    case ErrorKind::WeakCouplingViolated: return "WeakCouplingViolated";
    case ErrorKind::LocalSolveFailed: return "LocalSolveFailed";
    case ErrorKind::DegenerateDelta: return "DegenerateDelta";
    case ErrorKind::FeasibilityCertificateFailed: return "FeasibilityCertificateFailed";
    case ErrorKind::BoundViolated: return "BoundViolated";
    case ErrorKind::AssumptionFourViolated: return "AssumptionFourViolated";
    case ErrorKind::LyapunovViolation: return "LyapunovViolation";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "spectral_radius needs a square matrix");
  }
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

double max_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_positive_definite(const Matrix& m) {
  return m.size() > 0 && is_symmetric(m) && min_eigenvalue(m) > 0.0;
}

Matrix block_diagonal(const std::vector<Matrix>& blocks) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace hmpc
