#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerance used for every "strict interior" test.
inline constexpr double kInteriorTol = 1e-9;

enum class ErrorKind {
  DimensionMismatch,
  NotBlockDiagonalK,
  VertexEnumerationTooLarge,
  UnknownSubsystem,
  HorizonTooSmall,
  UnboundedBox,
  SlaterViolated,
  PredictedTerminalOutsideXf,
  WeakCouplingViolated,
  LocalSolveFailed,
  DegenerateDelta,
  FeasibilityCertificateFailed,
  BoundViolated,
  AssumptionFourViolated,
  LyapunovViolation,
  ProtocolViolation,
  InstanceTooLarge,
  Infeasible,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/**
 * @brief Library-wide exception.
 *
 * Every failure raised by hmpc carries an ErrorKind so callers (and tests)
 * can dispatch on the failure class. `field` is set for validation errors and
 * holds the config path of the offending entry.
 */
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        field_(std::move(field)),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string field_;
  std::string detail_;
};

/// Half-open index range [offset, offset + size) inside an aggregate vector.
struct BlockRange {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;

  Eigen::Index end() const { return offset + size; }
};

}  // namespace hmpc
