#include "hmpc/cli_io.hpp"

#include "hmpc/linalg.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

namespace hmpc {

namespace {

using json = nlohmann::json;

[[noreturn]] void invalid(const std::string& field, const std::string& reason) {
  throw Error(ErrorKind::ValidationError, reason, field);
}

const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) invalid(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) invalid(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) invalid(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(path, "expected a finite number");
  return v;
}

long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) invalid(path, "expected an integer");
  return j.get<long>();
}

Vector vector_field(const json& j, const std::string& path) {
  if (!j.is_array()) invalid(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    v(static_cast<Eigen::Index>(k)) = number(j[k], path + "[" + std::to_string(k) + "]");
  }
  return v;
}

Matrix matrix_field(const json& j, const std::string& path) {
  const long rows = integer(member(j, "rows", path), join(path, "rows"));
  const long cols = integer(member(j, "cols", path), join(path, "cols"));
  if (rows < 0 || cols < 0) invalid(path, "negative dimension");
  const json& data = member(j, "data", path);
  const std::string dpath = join(path, "data");
  if (!data.is_array() || static_cast<long>(data.size()) != rows) {
    invalid(dpath, "expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    const std::string rpath = dpath + "[" + std::to_string(r) + "]";
    const Vector row = vector_field(data[static_cast<std::size_t>(r)], rpath);
    if (row.size() != cols) invalid(rpath, "expected " + std::to_string(cols) + " columns");
    m.row(r) = row.transpose();
  }
  return m;
}

std::map<int, Matrix> coupling_blocks(const json& j, const std::string& path) {
  if (!j.is_array()) invalid(path, "expected an array of blocks");
  std::map<int, Matrix> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string bpath = path + "[" + std::to_string(k) + "]";
    const int id = static_cast<int>(integer(member(j[k], "neighbor", bpath), join(bpath, "neighbor")));
    if (out.count(id)) invalid(join(bpath, "neighbor"), "duplicate neighbor block");
    out[id] = matrix_field(member(j[k], "matrix", bpath), join(bpath, "matrix"));
  }
  return out;
}

Polytope polytope_field(const json& j, const std::string& path) {
  Polytope poly;
  poly.E = matrix_field(member(j, "E", path), join(path, "E"));
  poly.f = vector_field(member(j, "f", path), join(path, "f"));
  if (poly.f.size() != poly.E.rows()) invalid(join(path, "f"), "length differs from rows of E");
  if (j.contains("vertices")) {
    const json& verts = j["vertices"];
    const std::string vpath = join(path, "vertices");
    if (!verts.is_array()) invalid(vpath, "expected an array of points");
    for (std::size_t k = 0; k < verts.size(); ++k) {
      const std::string ppath = vpath + "[" + std::to_string(k) + "]";
      Vector v = vector_field(verts[k], ppath);
      if (v.size() != poly.E.cols()) invalid(ppath, "wrong dimension");
      poly.vertices.push_back(std::move(v));
    }
  }
  return poly;
}

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    data.push_back(row);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json polytope_json(const Polytope& p) {
  json verts = json::array();
  for (const auto& v : p.vertices) verts.push_back(vector_json(v));
  return json{{"E", matrix_json(p.E)}, {"f", vector_json(p.f)}, {"vertices", verts}};
}

json blocks_json(const std::map<int, Matrix>& blocks) {
  json out = json::array();
  for (const auto& [id, m] : blocks) out.push_back(json{{"neighbor", id}, {"matrix", matrix_json(m)}});
  return out;
}

SubsystemSpec subsystem_field(const json& j, const std::string& path) {
  SubsystemSpec s;
  s.id = static_cast<int>(integer(member(j, "id", path), join(path, "id")));
  s.n = integer(member(j, "n", path), join(path, "n"));
  s.m = integer(member(j, "m", path), join(path, "m"));
  if (s.n < 1) invalid(join(path, "n"), "state dimension must be positive");
  if (s.m < 1) invalid(join(path, "m"), "input dimension must be positive");
  s.A_blocks = coupling_blocks(member(j, "A", path), join(path, "A"));
  s.B_blocks = coupling_blocks(member(j, "B", path), join(path, "B"));
  s.Q = matrix_field(member(j, "Q", path), join(path, "Q"));
  s.R = matrix_field(member(j, "R", path), join(path, "R"));
  s.P = matrix_field(member(j, "P", path), join(path, "P"));
  s.K = matrix_field(member(j, "K", path), join(path, "K"));
  const json& box = member(j, "input_box", path);
  const std::string bpath = join(path, "input_box");
  s.input_box.lower = vector_field(member(box, "lower", bpath), join(bpath, "lower"));
  s.input_box.upper = vector_field(member(box, "upper", bpath), join(bpath, "upper"));
  return s;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_polytope(const Polytope& a, const Polytope& b) {
  if (!same_matrix(a.E, b.E) || !same_matrix(a.f, b.f) || a.vertices.size() != b.vertices.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.vertices.size(); ++k) {
    if (!same_matrix(a.vertices[k], b.vertices[k])) return false;
  }
  return true;
}

bool same_blocks(const std::map<int, Matrix>& a, const std::map<int, Matrix>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [id, m] : a) {
    const auto it = b.find(id);
    if (it == b.end() || !same_matrix(m, it->second)) return false;
  }
  return true;
}

void field(std::ostringstream& out, const char* name, double v) {
  out << ",\"" << name << "\":" << format_number(v);
}

void field(std::ostringstream& out, const char* name, long v) {
  out << ",\"" << name << "\":" << v;
}

void field(std::ostringstream& out, const char* name, const Vector& v) {
  out << ",\"" << name << "\":[";
  for (Eigen::Index k = 0; k < v.size(); ++k) out << (k ? "," : "") << format_number(v(k));
  out << "]";
}

}  // namespace

ConfigDocument parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  ConfigDocument doc;
  doc.schema_version = static_cast<int>(integer(member(root, "schema_version", ""), "schema_version"));
  if (doc.schema_version != kSchemaVersion) {
    invalid("schema_version", "unsupported version " + std::to_string(doc.schema_version));
  }
  const json& subs = member(root, "subsystems", "");
  if (!subs.is_array() || subs.empty()) invalid("subsystems", "expected a nonempty array");
  for (std::size_t k = 0; k < subs.size(); ++k) {
    doc.network.subsystems.push_back(subsystem_field(subs[k], "subsystems[" + std::to_string(k) + "]"));
  }
  doc.network.horizon = static_cast<int>(integer(member(root, "horizon", ""), "horizon"));
  if (doc.network.horizon < 1) invalid("horizon", "horizon must be at least 1");
  doc.network.X = polytope_field(member(root, "X", ""), "X");
  doc.network.Xf = polytope_field(member(root, "Xf", ""), "Xf");
  doc.network.U = polytope_field(member(root, "U", ""), "U");
  doc.x0 = vector_field(member(root, "x0", ""), "x0");
  doc.u_bar0 = vector_field(member(root, "u_bar0", ""), "u_bar0");
  if (root.contains("delta0") && !root["delta0"].is_null()) {
    doc.delta0 = number(root["delta0"], "delta0");
    if (!(*doc.delta0 > 0.0)) invalid("delta0", "must be positive");
  }
  if (root.contains("solver")) {
    const json& s = root["solver"];
    if (!s.is_object()) invalid("solver", "expected an object");
    if (s.contains("early_exit")) {
      if (!s["early_exit"].is_boolean()) invalid("solver.early_exit", "expected a boolean");
      doc.solver.early_exit = s["early_exit"].get<bool>();
    }
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned()) invalid("solver.seed", "expected a nonnegative integer");
      doc.solver.seed = s["seed"].get<std::uint64_t>();
    }
    if (s.contains("vertex_cap")) {
      const long cap = integer(s["vertex_cap"], "solver.vertex_cap");
      if (cap < 1) invalid("solver.vertex_cap", "must be positive");
      doc.solver.vertex_cap = static_cast<std::size_t>(cap);
    }
    if (s.contains("audit_samples")) {
      const long n = integer(s["audit_samples"], "solver.audit_samples");
      if (n < 0) invalid("solver.audit_samples", "must be nonnegative");
      doc.solver.audit_samples = static_cast<int>(n);
    }
  }

  validate_network(doc.network, doc.solver.vertex_cap);

  const AggregateModel model = assemble_aggregate(doc.network);
  if (doc.x0.size() != model.n_x()) {
    invalid("x0", "expected " + std::to_string(model.n_x()) + " entries");
  }
  if (doc.network.X.slack(doc.x0).minCoeff() < -kInteriorTol) invalid("x0", "state lies outside X");
  const CondensedProblem p = condense(doc.network);
  if (doc.u_bar0.size() != p.n_u()) {
    invalid("u_bar0", "expected " + std::to_string(p.n_u()) + " entries");
  }
  SlaterCertificate slater;
  try {
    slater = make_slater_certificate(p, doc.x0, doc.u_bar0);
  } catch (const Error& e) {
    invalid("u_bar0", e.detail());
  }
  if (!(slater.min_margin > 0.0)) invalid("u_bar0", "Slater margin <= 0");
  return doc;
}

ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ConfigDocument& doc) {
  json root;
  root["schema_version"] = doc.schema_version;
  root["horizon"] = doc.network.horizon;
  json subs = json::array();
  for (const auto& s : doc.network.subsystems) {
    subs.push_back(json{{"id", s.id},
                        {"n", s.n},
                        {"m", s.m},
                        {"A", blocks_json(s.A_blocks)},
                        {"B", blocks_json(s.B_blocks)},
                        {"Q", matrix_json(s.Q)},
                        {"R", matrix_json(s.R)},
                        {"P", matrix_json(s.P)},
                        {"K", matrix_json(s.K)},
                        {"input_box", json{{"lower", vector_json(s.input_box.lower)},
                                           {"upper", vector_json(s.input_box.upper)}}}});
  }
  root["subsystems"] = subs;
  root["X"] = polytope_json(doc.network.X);
  root["Xf"] = polytope_json(doc.network.Xf);
  root["U"] = polytope_json(doc.network.U);
  root["x0"] = vector_json(doc.x0);
  root["u_bar0"] = vector_json(doc.u_bar0);
  if (doc.delta0) root["delta0"] = *doc.delta0;
  root["solver"] = json{{"early_exit", doc.solver.early_exit},
                        {"seed", doc.solver.seed},
                        {"vertex_cap", doc.solver.vertex_cap},
                        {"audit_samples", doc.solver.audit_samples}};
  return root.dump(2) + "\n";
}

bool same_document(const ConfigDocument& a, const ConfigDocument& b) {
  if (a.schema_version != b.schema_version || a.network.horizon != b.network.horizon ||
      a.network.size() != b.network.size() || a.delta0 != b.delta0 ||
      a.solver.early_exit != b.solver.early_exit || a.solver.seed != b.solver.seed ||
      a.solver.vertex_cap != b.solver.vertex_cap ||
      a.solver.audit_samples != b.solver.audit_samples || !same_matrix(a.x0, b.x0) ||
      !same_matrix(a.u_bar0, b.u_bar0)) {
    return false;
  }
  for (std::size_t i = 0; i < a.network.size(); ++i) {
    const auto& s = a.network.subsystems[i];
    const auto& t = b.network.subsystems[i];
    if (s.id != t.id || s.n != t.n || s.m != t.m || !same_blocks(s.A_blocks, t.A_blocks) ||
        !same_blocks(s.B_blocks, t.B_blocks) || !same_matrix(s.Q, t.Q) || !same_matrix(s.R, t.R) ||
        !same_matrix(s.P, t.P) || !same_matrix(s.K, t.K) ||
        !same_matrix(s.input_box.lower, t.input_box.lower) ||
        !same_matrix(s.input_box.upper, t.input_box.upper)) {
      return false;
    }
  }
  return same_polytope(a.network.X, b.network.X) && same_polytope(a.network.Xf, b.network.Xf) &&
         same_polytope(a.network.U, b.network.U);
}

std::string instance_hash(const ConfigDocument& doc) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : serialize_config(doc)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

CertifyReport certify(const ConfigDocument& doc) {
  CertifyReport r;
  r.schur = check_schur(doc.network);
  r.invariance = check_terminal_invariance(doc.network, doc.solver.vertex_cap);
  const CondensedProblem p = condense(doc.network);
  const SlaterCertificate slater = make_slater_certificate(p, doc.x0, doc.u_bar0);
  r.slater_margin = slater.min_margin;
  r.slater_pass = slater.min_margin > 0.0;
  r.L0 = initial_norm_bound(p, doc.x0);
  r.norm_bound_pass = std::isfinite(r.L0) && r.L0 > 0.0;
  r.contraction = compute_contraction_certificate(p);
  r.all_pass = r.schur.pass && r.invariance.pass && r.invariance.inputs_admissible &&
               r.slater_pass && r.norm_bound_pass && r.contraction.pass;
  return r;
}

void print_certify_report(const CertifyReport& r, std::ostream& out) {
  const auto verdict = [](bool ok) { return ok ? "PASS" : "FAIL"; };
  out << std::setprecision(17);
  out << "schur stability of A+BK:        " << verdict(r.schur.pass)
      << "  spectral radius " << r.schur.radius << "\n";
  out << "terminal set invariance:        " << verdict(r.invariance.pass)
      << "  worst slack " << r.invariance.worst_margin << "\n";
  out << "terminal inputs admissible:     " << verdict(r.invariance.inputs_admissible)
      << "  worst slack " << r.invariance.worst_input_margin << "\n";
  out << "slater point at t=0:            " << verdict(r.slater_pass)
      << "  min margin " << r.slater_margin << "\n";
  out << "constraint norm bound L0:       " << verdict(r.norm_bound_pass) << "  L0 " << r.L0
      << "\n";
  out << "cost decrease (Delta_t budget): runtime-checked\n";
  const auto& c = r.contraction;
  out << "weak coupling of H blocks:      " << verdict(c.pass);
  if (c.pass) {
    out << "  gamma " << c.gamma << "  phi " << c.phi << "\n";
  } else {
    const std::size_t i = c.worst_block;
    out << "  block " << i << ": lambda_min " << c.lambda_min[i] << " <= coupling sum "
        << c.offdiag_sigma_sum[i] << "\n";
  }
  for (std::size_t i = 0; i < c.lambda_min.size(); ++i) {
    out << "  block " << i << ": lambda_min " << c.lambda_min[i] << "  lambda_max "
        << c.lambda_max[i] << "  coupling sum " << c.offdiag_sigma_sum[i] << "\n";
  }
  out << "overall:                        " << verdict(r.all_pass) << "\n";
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TraceWriter::TraceWriter(const std::string& path, const ConfigDocument& doc, const MpcContext& ctx,
                         const MpcOptions& opts)
    : path_(path) {
  auto file = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
  if (!*file) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  out_ = std::move(file);
  *out_ << header_line(doc, ctx, opts) << "\n";
  out_->flush();
  if (!*out_) throw Error(ErrorKind::IoError, "failed writing " + path);
}

void TraceWriter::write(const TraceRecord& record) {
  *out_ << record_line(record) << "\n";
  out_->flush();
  if (!*out_) throw Error(ErrorKind::IoError, "failed writing " + path_);
}

std::string TraceWriter::header_line(const ConfigDocument& doc, const MpcContext& ctx,
                                     const MpcOptions& opts) {
  const CondensedProblem& p = ctx.problem;
  std::ostringstream out;
  out << "{\"type\":\"header\",\"schema_version\":" << kSchemaVersion << ",\"instance_hash\":\""
      << instance_hash(doc) << "\"";
  field(out, "subsystems", static_cast<long>(p.n_blocks()));
  field(out, "horizon", static_cast<long>(p.horizon));
  field(out, "n_x", static_cast<long>(p.n_x()));
  field(out, "n_u", static_cast<long>(p.n_u()));
  field(out, "x_rows", static_cast<long>(p.x_rows));
  field(out, "xf_rows", static_cast<long>(p.xf_rows));
  field(out, "u_rows", static_cast<long>(p.u_rows));
  field(out, "jacobi_gamma", ctx.cert.gamma);
  field(out, "jacobi_phi", ctx.cert.phi);
  field(out, "delta0", opts.delta0 ? *opts.delta0 : std::numeric_limits<double>::quiet_NaN());
  out << ",\"seed\":" << opts.seed << ",\"distributed\":" << (opts.distributed ? "true" : "false")
      << ",\"early_exit\":" << (opts.step.early_exit ? "true" : "false") << "}";
  return out.str();
}

std::string TraceWriter::record_line(const TraceRecord& r) {
  std::ostringstream out;
  out << "{\"type\":\"step\",\"t\":" << r.t;
  field(out, "x", r.x);
  field(out, "u_applied", r.u_applied);
  field(out, "f_value", r.f_value);
  field(out, "f_prev", r.f_prev);
  field(out, "violation", r.violation);
  field(out, "max_g", r.max_g);
  field(out, "delta", r.delta);
  field(out, "alpha", r.alpha);
  field(out, "eps", r.eps);
  field(out, "k_bar", r.k_bar);
  field(out, "k_used", r.k_used);
  field(out, "total_inner_sweeps", r.total_inner_sweeps);
  field(out, "c", r.c);
  field(out, "gamma", r.gamma);
  field(out, "L", r.L);
  field(out, "L_prime", r.L_prime);
  field(out, "slater_margin", r.slater_margin);
  field(out, "f_slater", r.f_slater);
  field(out, "norm_audit_max", r.norm_audit_max);
  out << ",\"lyapunov_ok\":" << (r.lyapunov_ok ? "true" : "false");
  if (r.messages) {
    out << ",\"messages\":{";
    bool first = true;
    for (const auto& [kind, n] : r.messages->counts) {
      out << (first ? "" : ",") << "\"" << to_string(kind) << "\":" << n;
      first = false;
    }
    out << ",\"bytes\":" << r.messages->bytes
        << ",\"consistent\":" << (r.messages->consistent ? "true" : "false") << "}";
  }
  out << "}";
  return out.str();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError: return 5;
    case ErrorKind::NotBlockDiagonalK:
    case ErrorKind::WeakCouplingViolated:
    case ErrorKind::VertexEnumerationTooLarge: return 3;
    case ErrorKind::DegenerateDelta:
    case ErrorKind::FeasibilityCertificateFailed:
    case ErrorKind::BoundViolated:
    case ErrorKind::AssumptionFourViolated:
    case ErrorKind::LyapunovViolation:
    case ErrorKind::PredictedTerminalOutsideXf:
    case ErrorKind::SlaterViolated:
    case ErrorKind::LocalSolveFailed:
    case ErrorKind::ProtocolViolation: return 4;
    default: return 2;
  }
}

}  // namespace hmpc
