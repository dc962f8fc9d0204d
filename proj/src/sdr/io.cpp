#include "sdr/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdr/errors.hpp"

namespace sdr {

namespace fs = std::filesystem;

std::string format_number(double v) {
  if (!std::isfinite(v)) fail(ErrorCode::invalid_argument, "cannot format a non-finite number");
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_row(const std::string& line, const std::string& where) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) fail(ErrorCode::parse, where + ": stray quote");
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) fail(ErrorCode::parse, where + ": unterminated quoted field");
  fields.push_back(cur);
  return fields;
}

double parse_field(const std::string& raw, const std::string& where) {
  size_t b = 0, e = raw.size();
  while (b < e && (raw[b] == ' ' || raw[b] == '\t')) ++b;
  while (e > b && (raw[e - 1] == ' ' || raw[e - 1] == '\t')) --e;
  if (b == e) fail(ErrorCode::parse, where + ": empty field");
  const char* first = raw.data() + b;
  if (*first == '+') ++first;
  double v = 0.0;
  const auto res = std::from_chars(first, raw.data() + e, v);
  if (res.ec != std::errc() || res.ptr != raw.data() + e)
    fail(ErrorCode::parse, where + ": not a number: '" + raw.substr(b, e - b) + "'");
  return v;
}

}  // namespace

Mat parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_row(line, where);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_field(f, where));
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorCode::parse, where + ": expected " + std::to_string(rows.front().size()) + " fields, found " +
                                 std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::parse, source + ": no data rows");
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
  return out;
}

Mat read_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

std::string format_csv(const Mat& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_number(m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const Mat& m) { write_text_file(path, format_csv(m)); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::io, "error reading '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::io, "error writing '" + path + "'");
}

json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void ensure_directory(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) fail(ErrorCode::io, "cannot create directory '" + path + "'");
}

// ---------------------------------------------------------------------------

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

namespace {

double number(const json& j, const std::string& what) {
  if (!j.is_number()) fail(ErrorCode::parse, what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(ErrorCode::parse, what + ": non-finite number");
  return v;
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) fail(ErrorCode::parse, what + ": expected an integer");
  return j.get<int>();
}

const json& field(const json& obj, const char* key, const std::string& what) {
  if (!obj.contains(key)) fail(ErrorCode::parse, what + ": missing '" + key + "'");
  return obj.at(key);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& what) {
  if (!obj.is_object()) fail(ErrorCode::parse, what + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) fail(ErrorCode::parse, what + ": unknown key '" + item.key() + "'");
  }
}

}  // namespace

Mat matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) fail(ErrorCode::parse, what + ": expected a non-empty array of rows");
  const size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) fail(ErrorCode::parse, what + ": rows must be non-empty arrays");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(ErrorCode::parse, what + ": ragged rows");
    for (size_t c = 0; c < cols; ++c) m(i, c) = number(j[i][c], what);
  }
  return m;
}

Vec vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorCode::parse, what + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], what);
  return v;
}

json to_json(const ManifoldSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind == ManifoldKind::flat) j["dim"] = spec.flat_dim;
  if (spec.kind == ManifoldKind::landmarks) {
    j["num_landmarks"] = spec.num_landmarks;
    j["kernel_sigma"] = spec.kernel_sigma;
  }
  return j;
}

ManifoldSpec manifold_spec_from_json(const json& j) {
  reject_unknown(j, {"kind", "dim", "num_landmarks", "kernel_sigma"}, "manifold");
  const json& kind = field(j, "kind", "manifold");
  if (!kind.is_string()) fail(ErrorCode::parse, "manifold.kind: expected a string");
  ManifoldSpec spec;
  try {
    spec.kind = manifold_kind_from_string(kind.get<std::string>());
  } catch (const Error& e) {
    fail(ErrorCode::parse, std::string("manifold.kind: ") + e.what());
  }
  if (spec.kind == ManifoldKind::flat) spec.flat_dim = integer(field(j, "dim", "manifold"), "manifold.dim");
  if (spec.kind == ManifoldKind::landmarks) {
    spec.num_landmarks = integer(field(j, "num_landmarks", "manifold"), "manifold.num_landmarks");
    spec.kernel_sigma = number(field(j, "kernel_sigma", "manifold"), "manifold.kernel_sigma");
  }
  return spec;
}

json to_json(const CovariateSpec& spec) {
  json kinds = json::array();
  for (auto k : spec.kinds) kinds.push_back(k == CovariateKind::fixed ? "fixed" : "random");
  return json{{"kinds", kinds}};
}

CovariateSpec covariate_spec_from_json(const json& j) {
  reject_unknown(j, {"kinds"}, "covariate spec");
  const json& kinds = field(j, "kinds", "covariate spec");
  if (!kinds.is_array() || kinds.empty()) fail(ErrorCode::parse, "covariate spec: 'kinds' must be a non-empty array");
  CovariateSpec spec;
  for (const auto& k : kinds) {
    if (k == "fixed") spec.kinds.push_back(CovariateKind::fixed);
    else if (k == "random") spec.kinds.push_back(CovariateKind::random);
    else fail(ErrorCode::parse, "covariate spec: kinds must be 'fixed' or 'random'");
  }
  return spec;
}

json to_json(const ModelParameters& theta, const ManifoldSpec* manifold) {
  json j;
  if (manifold) j["manifold"] = to_json(*manifold);
  j["y0"] = to_json(theta.y0);
  j["U"] = to_json(theta.U);
  j["W_tilde"] = to_json(theta.W_tilde);
  j["beta"] = to_json(theta.beta);
  j["tau"] = theta.tau;
  return j;
}

ModelParameters parameters_from_json(const json& j) {
  reject_unknown(j, {"manifold", "y0", "U", "W_tilde", "beta", "tau"}, "theta");
  ModelParameters theta;
  theta.y0 = vector_from_json(field(j, "y0", "theta"), "theta.y0");
  theta.U = matrix_from_json(field(j, "U", "theta"), "theta.U");
  theta.W_tilde = matrix_from_json(field(j, "W_tilde", "theta"), "theta.W_tilde");
  theta.beta = j.contains("beta") ? vector_from_json(j["beta"], "theta.beta") : Vec::Zero(theta.W_tilde.rows());
  theta.tau = number(field(j, "tau", "theta"), "theta.tau");
  if (theta.W_tilde.rows() != theta.W_tilde.cols()) fail(ErrorCode::parse, "theta.W_tilde must be square");
  if (theta.U.rows() != theta.y0.size() || theta.U.cols() != theta.W_tilde.rows())
    fail(ErrorCode::parse, "theta.U must have dim(y0) rows and m columns");
  if (theta.beta.size() != theta.W_tilde.rows()) fail(ErrorCode::parse, "theta.beta must have m entries");
  return theta;
}

json to_json(const FitSettings& s) {
  const FitConfig& c = s.config;
  json j;
  j["manifold"] = to_json(s.manifold);
  j["n_s"] = c.grid.steps;
  j["T"] = c.grid.total_time;
  j["substeps"] = c.substeps;
  j["fd_step"] = c.fd_step;
  j["hessian_fd_step"] = c.hessian_fd_step;
  j["inner"] = {{"max_iters", c.inner.max_iters}, {"grad_tol", c.inner.grad_tol}, {"step_rule", c.inner.step_rule}};
  j["outer"] = {{"max_iters", c.outer.max_iters}, {"tol", c.outer.tol}, {"algorithm", c.outer.algorithm}};
  json est = json::array();
  if (c.estimate.y0) est.push_back("y0");
  if (c.estimate.U) est.push_back("U");
  if (c.estimate.W_tilde) est.push_back("W_tilde");
  if (c.estimate.beta) est.push_back("beta");
  if (c.estimate.tau) est.push_back("tau");
  j["estimate"] = est;
  j["hessian"] = c.hessian == HessianMethod::gauss_newton ? "gauss_newton" : "finite_difference";
  j["start"] = c.start == StartMode::ols ? "ols" : "given";
  if (s.initial) j["initial_theta"] = to_json(*s.initial);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

FitSettings fit_settings_from_json(const json& j) {
  reject_unknown(j,
                 {"manifold", "n_s", "T", "substeps", "fd_step", "hessian_fd_step", "inner", "outer", "estimate",
                  "hessian", "start", "initial_theta", "seed", "threads"},
                 "config");
  FitSettings s;
  FitConfig& c = s.config;
  s.manifold = manifold_spec_from_json(field(j, "manifold", "config"));
  if (j.contains("n_s")) c.grid.steps = integer(j["n_s"], "config.n_s");
  if (j.contains("T")) c.grid.total_time = number(j["T"], "config.T");
  if (j.contains("substeps")) c.substeps = integer(j["substeps"], "config.substeps");
  if (j.contains("fd_step")) c.fd_step = number(j["fd_step"], "config.fd_step");
  if (j.contains("hessian_fd_step")) c.hessian_fd_step = number(j["hessian_fd_step"], "config.hessian_fd_step");
  if (j.contains("inner")) {
    const json& in = j["inner"];
    reject_unknown(in, {"max_iters", "grad_tol", "step_rule"}, "config.inner");
    if (in.contains("max_iters")) c.inner.max_iters = integer(in["max_iters"], "config.inner.max_iters");
    if (in.contains("grad_tol")) c.inner.grad_tol = number(in["grad_tol"], "config.inner.grad_tol");
    if (in.contains("step_rule") && in["step_rule"] != c.inner.step_rule)
      fail(ErrorCode::parse, "config.inner.step_rule: only 'gauss_newton_armijo' is available");
  }
  if (j.contains("outer")) {
    const json& out = j["outer"];
    reject_unknown(out, {"max_iters", "tol", "algorithm"}, "config.outer");
    if (out.contains("max_iters")) c.outer.max_iters = integer(out["max_iters"], "config.outer.max_iters");
    if (out.contains("tol")) c.outer.tol = number(out["tol"], "config.outer.tol");
    if (out.contains("algorithm") && out["algorithm"] != c.outer.algorithm)
      fail(ErrorCode::parse, "config.outer.algorithm: only 'lm_coordinate' is available");
  }
  if (j.contains("estimate")) {
    const json& est = j["estimate"];
    if (!est.is_array()) fail(ErrorCode::parse, "config.estimate: expected an array of block names");
    c.estimate = {false, false, false, false, false};
    for (const auto& b : est) {
      if (b == "y0") c.estimate.y0 = true;
      else if (b == "U") c.estimate.U = true;
      else if (b == "W_tilde") c.estimate.W_tilde = true;
      else if (b == "beta") c.estimate.beta = true;
      else if (b == "tau") c.estimate.tau = true;
      else fail(ErrorCode::parse, "config.estimate: unknown block " + b.dump());
    }
  }
  if (j.contains("hessian")) {
    if (j["hessian"] == "gauss_newton") c.hessian = HessianMethod::gauss_newton;
    else if (j["hessian"] == "finite_difference") c.hessian = HessianMethod::finite_difference;
    else fail(ErrorCode::parse, "config.hessian: expected 'gauss_newton' or 'finite_difference'");
  }
  if (j.contains("start")) {
    if (j["start"] == "ols") c.start = StartMode::ols;
    else if (j["start"] == "given") c.start = StartMode::given;
    else fail(ErrorCode::parse, "config.start: expected 'ols' or 'given'");
  }
  if (j.contains("initial_theta")) s.initial = parameters_from_json(j["initial_theta"]);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail(ErrorCode::parse, "config.seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("threads")) c.threads = integer(j["threads"], "config.threads");
  if (c.start == StartMode::given && !s.initial)
    fail(ErrorCode::parse, "config: start 'given' requires initial_theta");
  return s;
}

json to_json(const FitDiagnostics& d) {
  json trace = json::array();
  for (const auto& e : d.outer_trace)
    trace.push_back({{"iteration", e.iteration},
                     {"block", e.block},
                     {"log_likelihood", std::isfinite(e.log_likelihood) ? json(e.log_likelihood) : json(nullptr)},
                     {"accepted", e.accepted},
                     {"damping", e.damping}});
  json j;
  j["outer_iterations"] = d.outer_iterations;
  j["converged"] = d.converged;
  j["termination"] = d.termination;
  j["hessian_log_det"] = d.hessian_log_det;
  j["floored_eigenvalues"] = d.floored_eigenvalues;
  j["hessian_flagged"] = d.hessian_flagged;
  j["inner_grad_norms"] = d.inner_grad_norms;
  j["inner_iterations"] = d.inner_iterations;
  j["outer_trace"] = trace;
  return j;
}

json to_json(const IngestSummary& s) {
  return json{{"n", s.n},
              {"m", s.m},
              {"k", s.k},
              {"num_landmarks", s.num_landmarks},
              {"covariate_min", to_json(s.covariate_min)},
              {"covariate_max", to_json(s.covariate_max)}};
}

IngestSummary summarize_dataset(const Dataset& data) {
  IngestSummary s;
  s.n = data.n();
  s.m = data.m();
  s.k = data.k();
  s.num_landmarks = s.k % 2 == 0 ? s.k / 2 : 0;
  s.covariate_min = data.X.colwise().minCoeff().transpose();
  s.covariate_max = data.X.colwise().maxCoeff().transpose();
  return s;
}

Dataset ingest_landmark_dataset(const std::string& shapes_path, const std::string& covariates_path,
                                const std::string& spec_path, IngestSummary* summary) {
  Dataset data;
  data.Y = read_csv(shapes_path);
  data.X = read_csv(covariates_path);
  data.spec = covariate_spec_from_json(read_json_file(spec_path));
  if (!data.Y.allFinite()) fail(ErrorCode::parse, shapes_path + ": non-finite values");
  if (!data.X.allFinite()) fail(ErrorCode::parse, covariates_path + ": non-finite values");
  if (data.X.rows() != data.Y.rows())
    fail(ErrorCode::parse, "row counts differ: " + std::to_string(data.Y.rows()) + " shapes, " +
                               std::to_string(data.X.rows()) + " covariate rows");
  if (data.spec.size() != data.m())
    fail(ErrorCode::parse, spec_path + ": " + std::to_string(data.spec.size()) + " kinds for " +
                               std::to_string(data.m()) + " covariate columns");
  if (summary) *summary = summarize_dataset(data);
  return data;
}

void write_manifest(const std::string& dir, const std::string& command, std::uint64_t seed, const json& config) {
  json j;
  j["tool"] = "sdr";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  write_json_file((fs::path(dir) / "manifest.json").string(), j);
}

}  // namespace sdr
