#pragma once

#include "hmpc/mpc_loop.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace hmpc {

inline constexpr int kSchemaVersion = 1;

struct SolverSettings {
  bool early_exit = false;
  std::uint64_t seed = 0;
  std::size_t vertex_cap = 100000;
  int audit_samples = 200;
};

struct ConfigDocument {
  int schema_version = kSchemaVersion;
  NetworkSpec network;
  Vector x0;
  Vector u_bar0;
  std::optional<double> delta0;
  SolverSettings solver;
};

/// Parses and validates a config. ParseError for malformed JSON,
/// ValidationError(field, reason) for everything else.
ConfigDocument parse_config(const std::string& text);

/// Reads `path` (IoError if unreadable) and parses it.
ConfigDocument load_config(const std::string& path);

std::string serialize_config(const ConfigDocument& doc);

bool same_document(const ConfigDocument& a, const ConfigDocument& b);

/// 64-bit FNV-1a of the serialized config, as 16 hex digits.
std::string instance_hash(const ConfigDocument& doc);

struct CertifyReport {
  SchurCertificate schur;
  InvarianceCertificate invariance;
  double slater_margin = 0.0;
  bool slater_pass = false;
  double L0 = 0.0;
  bool norm_bound_pass = false;
  ContractionCertificate contraction;
  bool all_pass = false;
};

/// Checks every certificate without throwing on a failed one.
CertifyReport certify(const ConfigDocument& doc);

void print_certify_report(const CertifyReport& report, std::ostream& out);

/// `v` with 17 significant digits (round-trip safe), or
/// "null" when `v` is not finite.
std::string format_number(double v);

/// JSON Lines trace: one header line, then one line per record.
class TraceWriter {
 public:
  /// Opens `path` for writing; throws IoError.
  TraceWriter(const std::string& path, const ConfigDocument& doc, const MpcContext& ctx,
              const MpcOptions& opts);
  void write(const TraceRecord& record);

  static std::string header_line(const ConfigDocument& doc, const MpcContext& ctx,
                                 const MpcOptions& opts);
  static std::string record_line(const TraceRecord& record);

 private:
  std::string path_;
  std::unique_ptr<std::ostream> out_;
};

/// Process exit code for an error kind: 2 validation, 3 certification,
/// 4 runtime assumption violation, 5 I/O.
int exit_code_for(ErrorKind kind);

}  // namespace hmpc
