#include "sdr/sdr.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "sdr/errors.hpp"
#include "sdr/experiments.hpp"
#include "sdr/io.hpp"

struct sdr_manifold {
  std::unique_ptr<sdr::Manifold> model;
};

struct sdr_dataset {
  sdr::Dataset data;
};

struct sdr_fit_result {
  sdr::FitSettings settings;
  sdr::Dataset data;
  sdr::FitResult result;
};

namespace {

namespace fs = std::filesystem;
using sdr::json;

thread_local std::string g_last_error;

sdr_status to_status(sdr::ErrorCode code) {
  switch (code) {
    case sdr::ErrorCode::invalid_argument: return SDR_ERR_INVALID_ARGUMENT;
    case sdr::ErrorCode::singular_geometry: return SDR_ERR_SINGULAR_GEOMETRY;
    case sdr::ErrorCode::degenerate_frame: return SDR_ERR_DEGENERATE_FRAME;
    case sdr::ErrorCode::integration: return SDR_ERR_INTEGRATION;
    case sdr::ErrorCode::rank_deficient: return SDR_ERR_RANK_DEFICIENT;
    case sdr::ErrorCode::ill_conditioned_laplace: return SDR_ERR_ILL_CONDITIONED_LAPLACE;
    case sdr::ErrorCode::bad_initialization: return SDR_ERR_BAD_INITIALIZATION;
    case sdr::ErrorCode::io: return SDR_ERR_IO;
    case sdr::ErrorCode::parse: return SDR_ERR_PARSE;
    case sdr::ErrorCode::study_aborted: return SDR_ERR_STUDY_ABORTED;
  }
  return SDR_ERR_INTERNAL;
}

template <class F>
sdr_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SDR_OK;
  } catch (const sdr::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return SDR_ERR_PARSE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SDR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SDR_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (!p) sdr::fail(sdr::ErrorCode::invalid_argument, std::string("null pointer: ") + name);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json_text(const char* text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    sdr::fail(sdr::ErrorCode::parse, std::string(what) + ": " + e.what());
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

sdr::Mat read_row_major(const double* data, int rows, int cols) {
  return Eigen::Map<const RowMajor>(data, rows, cols);
}

void write_row_major(const sdr::Mat& m, double* out) {
  Eigen::Map<RowMajor>(out, m.rows(), m.cols()) = m;
}

sdr::Vec read_point(const sdr_manifold* m, const double* p) {
  need(m, "manifold");
  need(p, "p");
  sdr::Vec v = Eigen::Map<const sdr::Vec>(p, m->model->dim());
  m->model->validate(v);
  return v;
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

std::unique_ptr<sdr_fit_result> run_fit(const sdr::Dataset& data, const json& config) {
  auto out = std::make_unique<sdr_fit_result>();
  out->settings = sdr::fit_settings_from_json(config);
  out->data = data;
  const auto model = sdr::make_manifold(out->settings.manifold);
  const sdr::ModelParameters* init = out->settings.initial ? &*out->settings.initial : nullptr;
  out->result = sdr::fit(*model, data, out->settings.config, init);
  return out;
}

void write_fit(const sdr_fit_result& r, const std::string& dir) {
  sdr::ensure_directory(dir);
  sdr::write_json_file(join(dir, "theta_hat.json"), sdr::to_json(r.result.theta_hat, &r.settings.manifold));
  json diag = sdr::to_json(r.result.diagnostics);
  diag["log_likelihood"] = r.result.log_likelihood;
  diag["theta_init"] = sdr::to_json(r.result.theta_init);
  sdr::write_json_file(join(dir, "diagnostics.json"), diag);
  sdr::write_csv(join(dir, "residuals.csv"), r.data.Y - r.result.mean_endpoints);
  sdr::write_csv(join(dir, "mode_residuals.csv"), r.data.Y - r.result.mode_endpoints);
}

}  // namespace

extern "C" {

const char* sdr_version(void) { return sdr::kVersion; }

const char* sdr_status_name(sdr_status status) {
  switch (status) {
    case SDR_OK: return "ok";
    case SDR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SDR_ERR_SINGULAR_GEOMETRY: return "singular_geometry";
    case SDR_ERR_DEGENERATE_FRAME: return "degenerate_frame";
    case SDR_ERR_INTEGRATION: return "integration_error";
    case SDR_ERR_RANK_DEFICIENT: return "rank_deficient";
    case SDR_ERR_ILL_CONDITIONED_LAPLACE: return "ill_conditioned_laplace";
    case SDR_ERR_BAD_INITIALIZATION: return "bad_initialization";
    case SDR_ERR_IO: return "io_error";
    case SDR_ERR_PARSE: return "parse_error";
    case SDR_ERR_STUDY_ABORTED: return "study_aborted";
    case SDR_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* sdr_last_error(void) { return g_last_error.c_str(); }

void sdr_string_free(char* s) { std::free(s); }

sdr_status sdr_manifold_create(const char* spec_json, sdr_manifold** out) {
  return guarded([&] {
    need(spec_json, "spec_json");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<sdr_manifold>();
    m->model = sdr::make_manifold(sdr::manifold_spec_from_json(parse_json_text(spec_json, "manifold spec")));
    *out = m.release();
  });
}

void sdr_manifold_destroy(sdr_manifold* m) { delete m; }

sdr_status sdr_manifold_dims(const sdr_manifold* m, int* dim, int* ambient_dim) {
  return guarded([&] {
    need(m, "manifold");
    if (dim) *dim = m->model->dim();
    if (ambient_dim) *ambient_dim = m->model->ambient_dim();
  });
}

sdr_status sdr_manifold_metric(const sdr_manifold* m, const double* p, double* out) {
  return guarded([&] {
    const sdr::Vec v = read_point(m, p);
    need(out, "out");
    write_row_major(m->model->metric(v), out);
  });
}

sdr_status sdr_manifold_cometric(const sdr_manifold* m, const double* p, double* out) {
  return guarded([&] {
    const sdr::Vec v = read_point(m, p);
    need(out, "out");
    write_row_major(m->model->cometric(v), out);
  });
}

sdr_status sdr_manifold_christoffel(const sdr_manifold* m, const double* p, double* out) {
  return guarded([&] {
    const sdr::Vec v = read_point(m, p);
    need(out, "out");
    const sdr::Tensor3 g = m->model->christoffel(v);
    std::copy(g.data().begin(), g.data().end(), out);
  });
}

sdr_status sdr_manifold_embed(const sdr_manifold* m, const double* p, double* out) {
  return guarded([&] {
    const sdr::Vec v = read_point(m, p);
    need(out, "out");
    const sdr::Vec e = m->model->embed(v);
    std::copy(e.data(), e.data() + e.size(), out);
  });
}

sdr_status sdr_develop(const sdr_manifold* m, const double* base, const double* frame, int r,
                       const double* increments, int steps, int substeps, double* out_path) {
  return guarded([&] {
    const sdr::Vec p = read_point(m, base);
    need(frame, "frame");
    need(increments, "increments");
    need(out_path, "out_path");
    sdr::require(r >= 1 && r <= m->model->dim(), "frame rank must be in [1, dim]");
    sdr::require(steps >= 1, "steps must be positive");
    const sdr::FramePoint u0{p, read_row_major(frame, m->model->dim(), r)};
    const sdr::DrivingPath path{read_row_major(increments, steps, r), 1.0};
    const sdr::DevelopedPath dev = sdr::develop(*m->model, u0, path, substeps);
    const int k = m->model->ambient_dim();
    for (size_t t = 0; t < dev.states.size(); ++t) {
      const sdr::Vec e = m->model->embed(dev.states[t].base);
      std::copy(e.data(), e.data() + k, out_path + t * k);
    }
  });
}

sdr_status sdr_dataset_create(int n, int m, int k, const double* X, const double* Y, const int* random_flags,
                              sdr_dataset** out) {
  return guarded([&] {
    need(X, "X");
    need(Y, "Y");
    need(out, "out");
    *out = nullptr;
    sdr::require(n >= 1 && m >= 1 && k >= 1, "dataset dimensions must be positive");
    auto d = std::make_unique<sdr_dataset>();
    d->data.X = read_row_major(X, n, m);
    d->data.Y = read_row_major(Y, n, k);
    d->data.spec = sdr::CovariateSpec::all(m);
    if (random_flags)
      for (int j = 0; j < m; ++j)
        d->data.spec.kinds[j] = random_flags[j] ? sdr::CovariateKind::random : sdr::CovariateKind::fixed;
    sdr::validate_dataset(d->data);
    *out = d.release();
  });
}

sdr_status sdr_dataset_load(const char* shapes_csv, const char* covariates_csv, const char* spec_json,
                            sdr_dataset** out) {
  return guarded([&] {
    need(shapes_csv, "shapes_csv");
    need(covariates_csv, "covariates_csv");
    need(spec_json, "spec_json");
    need(out, "out");
    *out = nullptr;
    auto d = std::make_unique<sdr_dataset>();
    d->data = sdr::ingest_landmark_dataset(shapes_csv, covariates_csv, spec_json);
    *out = d.release();
  });
}

void sdr_dataset_destroy(sdr_dataset* d) { delete d; }

sdr_status sdr_dataset_info(const sdr_dataset* d, int* n, int* m, int* k) {
  return guarded([&] {
    need(d, "dataset");
    if (n) *n = d->data.n();
    if (m) *m = d->data.m();
    if (k) *k = d->data.k();
  });
}

sdr_status sdr_dataset_summary_json(const sdr_dataset* d, char** out_json) {
  return guarded([&] {
    need(d, "dataset");
    need(out_json, "out_json");
    *out_json = dup_string(sdr::to_json(sdr::summarize_dataset(d->data)).dump());
  });
}

sdr_status sdr_fit(const sdr_dataset* d, const char* config_json, sdr_fit_result** out) {
  return guarded([&] {
    need(d, "dataset");
    need(config_json, "config_json");
    need(out, "out");
    *out = nullptr;
    *out = run_fit(d->data, parse_json_text(config_json, "config")).release();
  });
}

void sdr_fit_result_destroy(sdr_fit_result* r) { delete r; }

sdr_status sdr_fit_result_log_likelihood(const sdr_fit_result* r, double* out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    *out = r->result.log_likelihood;
  });
}

sdr_status sdr_fit_result_theta_json(const sdr_fit_result* r, char** out_json) {
  return guarded([&] {
    need(r, "result");
    need(out_json, "out_json");
    *out_json = dup_string(sdr::to_json(r->result.theta_hat, &r->settings.manifold).dump());
  });
}

sdr_status sdr_fit_result_diagnostics_json(const sdr_fit_result* r, char** out_json) {
  return guarded([&] {
    need(r, "result");
    need(out_json, "out_json");
    *out_json = dup_string(sdr::to_json(r->result.diagnostics).dump());
  });
}

sdr_status sdr_fit_result_write(const sdr_fit_result* r, const char* out_dir) {
  return guarded([&] {
    need(r, "result");
    need(out_dir, "out_dir");
    write_fit(*r, out_dir);
  });
}

sdr_status sdr_simulate_study(const char* study, int n, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    need(study, "study");
    need(out_dir, "out_dir");
    sdr::require(n >= 1, "n must be at least 1");
    const sdr::StudySetup setup = sdr::study_setup(study);
    const auto model = sdr::make_study_manifold(setup);
    const sdr::Dataset data = sdr::simulate_study(setup, n, seed);
    const std::string dir = out_dir;
    sdr::ensure_directory(dir);
    sdr::write_csv(join(dir, "shapes.csv"), data.Y);
    sdr::write_csv(join(dir, "covariates.csv"), data.X);
    sdr::write_json_file(join(dir, "spec.json"), sdr::to_json(data.spec));
    sdr::write_json_file(join(dir, "theta_true.json"), sdr::to_json(setup.truth, &setup.manifold));
    sdr::FitSettings settings{setup.manifold, sdr::study_fit_config(setup),
                              sdr::study_fixed_parameters(*model, setup, data)};
    settings.config.seed = seed;
    const json config = sdr::to_json(settings);
    sdr::write_json_file(join(dir, "config.json"), config);
    sdr::write_manifest(dir, "simulate", seed, json{{"study", setup.name}, {"n", n}, {"fit_config", config}});
  });
}

sdr_status sdr_fit_files(const char* shapes_csv, const char* covariates_csv, const char* spec_json,
                         const char* config_json, const char* out_dir) {
  return guarded([&] {
    need(shapes_csv, "shapes_csv");
    need(covariates_csv, "covariates_csv");
    need(spec_json, "spec_json");
    need(config_json, "config_json");
    need(out_dir, "out_dir");
    const sdr::Dataset data = sdr::ingest_landmark_dataset(shapes_csv, covariates_csv, spec_json);
    const auto result = run_fit(data, sdr::read_json_file(config_json));
    write_fit(*result, out_dir);
    sdr::write_manifest(out_dir, "fit", result->settings.config.seed,
                        json{{"shapes", shapes_csv},
                             {"covariates", covariates_csv},
                             {"spec", sdr::to_json(data.spec)},
                             {"fit_config", sdr::to_json(result->settings)}});
  });
}

sdr_status sdr_develop_files(const char* theta_json, const char* path_json, const char* out_csv) {
  return guarded([&] {
    need(theta_json, "theta_json");
    need(path_json, "path_json");
    need(out_csv, "out_csv");
    const json tj = sdr::read_json_file(theta_json);
    if (!tj.contains("manifold")) sdr::fail(sdr::ErrorCode::parse, std::string(theta_json) + ": missing 'manifold'");
    const auto model = sdr::make_manifold(sdr::manifold_spec_from_json(tj["manifold"]));
    const sdr::ModelParameters theta = sdr::parameters_from_json(tj);
    const json pj = sdr::read_json_file(path_json);
    if (!pj.is_object() || !pj.contains("increments"))
      sdr::fail(sdr::ErrorCode::parse, std::string(path_json) + ": missing 'increments'");
    sdr::DrivingPath path{sdr::matrix_from_json(pj["increments"], "path.increments"), 1.0};
    if (pj.contains("T")) path.total_time = pj["T"].get<double>();
    const int substeps = pj.contains("substeps") ? pj["substeps"].get<int>() : sdr::kDefaultSubsteps;
    const sdr::DevelopedPath dev = sdr::develop(*model, theta.frame_point(), path, substeps);
    sdr::Mat out(static_cast<Eigen::Index>(dev.states.size()), model->ambient_dim());
    for (size_t t = 0; t < dev.states.size(); ++t) out.row(t) = model->embed(dev.states[t].base).transpose();
    sdr::write_csv(out_csv, out);
  });
}

sdr_status sdr_check(const char* out_json, int* all_passed) {
  return guarded([&] {
    need(out_json, "out_json");
    const json report = sdr::to_json(sdr::run_checks(1));
    sdr::write_json_file(out_json, report);
    if (all_passed) *all_passed = report["all_passed"].get<bool>() ? 1 : 0;
  });
}

sdr_status sdr_run_study(const char* kind, const char* config_json, const char* out_dir, int replicates) {
  return guarded([&] {
    need(kind, "kind");
    need(config_json, "config_json");
    need(out_dir, "out_dir");
    const json cfg = sdr::read_json_file(config_json);
    const std::string k = kind;
    const std::string dir = out_dir;
    if (cfg.contains("kind") && cfg["kind"] != k)
      sdr::fail(sdr::ErrorCode::invalid_argument, "study kind '" + k + "' does not match the config");
    sdr::ensure_directory(dir);
    if (k == "recovery") {
      sdr::RecoveryStudyConfig c = sdr::recovery_config_from_json(cfg);
      if (replicates > 0) c.replicates = replicates;
      const sdr::RecoveryReport report = sdr::run_recovery_study(c);
      sdr::write_json_file(join(dir, "report.json"), sdr::to_json(report));
      const int m = report.truth.m();
      sdr::Mat table(static_cast<Eigen::Index>(report.replicates.size()), 2 + m * m);
      for (size_t i = 0; i < report.replicates.size(); ++i) {
        const auto& r = report.replicates[i];
        table(i, 0) = r.index;
        table(i, 1) = r.ok ? 1.0 : 0.0;
        for (int e = 0; e < m * m; ++e) table(i, 2 + e) = r.ok ? r.theta_hat.W_tilde(e / m, e % m) : 0.0;
      }
      sdr::write_csv(join(dir, "replicates.csv"), table);
      sdr::write_manifest(dir, "study", c.seed, sdr::to_json(c));
    } else if (k == "frame") {
      sdr::FrameStudyConfig c = sdr::frame_config_from_json(cfg);
      if (replicates > 0) c.replicates = replicates;
      const sdr::FrameReport report = sdr::run_frame_study(c);
      sdr::write_json_file(join(dir, "report.json"), sdr::to_json(report));
      std::vector<sdr::Vec> rows;
      for (const auto& rep : report.replicates)
        for (size_t l = 0; l < rep.angle_hat_deg.size(); ++l) {
          sdr::Vec row(4);
          row << rep.fit.index, static_cast<double>(l), rep.angle_init_deg[l], rep.angle_hat_deg[l];
          rows.push_back(row);
        }
      sdr::Mat table(static_cast<Eigen::Index>(rows.size()), 4);
      for (size_t i = 0; i < rows.size(); ++i) table.row(i) = rows[i].transpose();
      if (!rows.empty()) sdr::write_csv(join(dir, "frame_angles.csv"), table);
      sdr::write_manifest(dir, "study", c.seed, sdr::to_json(c));
    } else {
      sdr::fail(sdr::ErrorCode::invalid_argument, "study kind must be 'recovery' or 'frame'");
    }
  });
}

}  // extern "C"
