#include "sdr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sdr/errors.hpp"
#include "sdr/parallel.hpp"

namespace sdr {

namespace {

constexpr double kPi = 3.14159265358979323846;

ReplicateRecord fit_replicate(const StudySetup& setup, const Manifold& model, int index, int n, std::uint64_t seed,
                              int outer_max_iters, double outer_tol, FitResult* full = nullptr) {
  ReplicateRecord rec;
  rec.index = index;
  rec.n = n;
  rec.seed = seed;
  try {
    const Dataset data = simulate_study(setup, n, seed);
    FitConfig config = study_fit_config(setup);
    config.outer.max_iters = outer_max_iters;
    config.outer.tol = outer_tol;
    config.seed = seed;
    const ModelParameters fixed = study_fixed_parameters(model, setup, data);
    FitResult result = fit(model, data, config, &fixed);
    rec.ok = true;
    rec.theta_hat = result.theta_hat;
    rec.log_likelihood = result.log_likelihood;
    rec.converged = result.diagnostics.converged;
    rec.outer_iterations = result.diagnostics.outer_iterations;
    if (full) *full = std::move(result);
  } catch (const Error& e) {
    rec.error = e.what();
  }
  return rec;
}

void check_failures(int failures, int total, double max_fraction, const std::string& what) {
  if (failures > max_fraction * total)
    fail(ErrorCode::study_aborted, what + ": " + std::to_string(failures) + " of " + std::to_string(total) +
                                       " replicates failed");
}

json record_json(const ReplicateRecord& r) {
  json j;
  j["index"] = r.index;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["W_tilde"] = to_json(r.theta_hat.W_tilde);
  j["y0"] = to_json(r.theta_hat.y0);
  j["U"] = to_json(r.theta_hat.U);
  j["beta"] = to_json(r.theta_hat.beta);
  j["tau"] = r.theta_hat.tau;
  j["log_likelihood"] = r.log_likelihood;
  j["converged"] = r.converged;
  j["outer_iterations"] = r.outer_iterations;
  return j;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RecoveryReport run_recovery_study(const RecoveryStudyConfig& config) {
  require(config.replicates >= 1, "replicates must be at least 1");
  require(config.n >= 1, "n must be at least 1");
  const StudySetup setup = study_setup(config.study);
  const auto model = make_study_manifold(setup);
  RecoveryReport report;
  report.config = config;
  report.truth = setup.truth;

  report.replicates.resize(static_cast<size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](int r) {
    report.replicates[r] = fit_replicate(setup, *model, r, config.n, derive_seed(config.seed, r),
                                         config.outer_max_iters, config.outer_tol);
  });
  for (const auto& r : report.replicates) report.failures += r.ok ? 0 : 1;
  check_failures(report.failures, config.replicates, config.max_failure_fraction, "recovery study");

  const int m = setup.truth.m();
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      std::vector<double> values;
      for (const auto& r : report.replicates)
        if (r.ok) values.push_back(r.theta_hat.W_tilde(a, b));
      EntryBand band;
      band.name = "W_tilde[" + std::to_string(a) + "][" + std::to_string(b) + "]";
      band.truth = setup.truth.W_tilde(a, b);
      band.q05 = quantile(values, 0.05);
      band.q50 = quantile(values, 0.50);
      band.q95 = quantile(values, 0.95);
      band.covered = band.q05 <= band.truth && band.truth <= band.q95;
      report.bands.push_back(band);
    }

  const int sizes = static_cast<int>(config.convergence_sizes.size());
  report.convergence.resize(static_cast<size_t>(sizes));
  parallel_for(sizes, config.threads, [&](int i) {
    const int n = config.convergence_sizes[i];
    report.convergence[i] = fit_replicate(setup, *model, i, n, derive_seed(config.seed, 1000000 + n),
                                          config.outer_max_iters, config.outer_tol);
  });
  if (sizes >= 2 && report.convergence.front().ok && report.convergence.back().ok) {
    const Mat small = (report.convergence.front().theta_hat.W_tilde - setup.truth.W_tilde).cwiseAbs();
    const Mat large = (report.convergence.back().theta_hat.W_tilde - setup.truth.W_tilde).cwiseAbs();
    report.trend_entries = static_cast<int>((large.array() <= small.array()).count());
  }
  return report;
}

double landmark_angle_deg(const Mat& a, const Mat& b, int l) {
  const Eigen::Vector2d u = a.block<2, 1>(2 * l, 0), v = b.block<2, 1>(2 * l, 0);
  const double denom = u.norm() * v.norm();
  require(denom > 0.0, "zero frame vector");
  const double c = std::clamp(u.dot(v) / denom, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

FrameReport run_frame_study(const FrameStudyConfig& config) {
  require(config.replicates >= 1, "replicates must be at least 1");
  const StudySetup setup = study_setup(config.study);
  require(setup.truth.m() == 1 && setup.estimate.U, "frame study needs a one-covariate setup estimating U");
  const auto model = make_study_manifold(setup);
  const int landmarks = setup.manifold.num_landmarks;
  FrameReport report;
  report.config = config;
  report.truth = setup.truth;
  report.replicates.resize(static_cast<size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](int r) {
    FrameReplicate& rep = report.replicates[r];
    FitResult full;
    const std::uint64_t seed = derive_seed(config.seed, r);
    rep.fit = fit_replicate(setup, *model, r, config.n, seed, config.outer_max_iters, config.outer_tol, &full);
    if (!rep.fit.ok) return;
    // Sign convention: W̃ >= 0, the frame column flips with it.
    if (rep.fit.theta_hat.W_tilde(0, 0) < 0.0) {
      rep.fit.theta_hat.W_tilde *= -1.0;
      rep.fit.theta_hat.U *= -1.0;
    }
    rep.U_init = full.theta_init.U;
    if (full.theta_init.W_tilde(0, 0) < 0.0) rep.U_init *= -1.0;
    const Dataset data = simulate_study(setup, config.n, seed);
    rep.ols_slope = ols_coefficients(data).row(1).transpose();
    for (int l = 0; l < landmarks; ++l) {
      rep.angle_init_deg.push_back(landmark_angle_deg(rep.U_init, setup.truth.U, l));
      rep.angle_hat_deg.push_back(landmark_angle_deg(rep.fit.theta_hat.U, setup.truth.U, l));
      rep.max_angle_deg = std::max(rep.max_angle_deg, rep.angle_hat_deg.back());
    }
  });
  for (const auto& r : report.replicates) report.failures += r.fit.ok ? 0 : 1;
  check_failures(report.failures, config.replicates, config.max_failure_fraction, "frame study");
  return report;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const RecoveryStudyConfig& c) {
  return json{{"kind", "recovery"},
              {"study", c.study},
              {"replicates", c.replicates},
              {"n", c.n},
              {"seed", c.seed},
              {"convergence_sizes", c.convergence_sizes},
              {"threads", c.threads},
              {"outer_max_iters", c.outer_max_iters},
              {"outer_tol", c.outer_tol},
              {"max_failure_fraction", c.max_failure_fraction}};
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("study config '") + key + "': " + e.what());
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(ErrorCode::parse, "study config must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) fail(ErrorCode::parse, "study config: unknown key '" + item.key() + "'");
  }
}

}  // namespace

RecoveryStudyConfig recovery_config_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "study", "replicates", "n", "seed", "convergence_sizes", "threads",
                          "outer_max_iters", "outer_tol", "max_failure_fraction"});
  RecoveryStudyConfig c;
  read_opt(j, "study", c.study);
  read_opt(j, "replicates", c.replicates);
  read_opt(j, "n", c.n);
  read_opt(j, "seed", c.seed);
  read_opt(j, "convergence_sizes", c.convergence_sizes);
  read_opt(j, "threads", c.threads);
  read_opt(j, "outer_max_iters", c.outer_max_iters);
  read_opt(j, "outer_tol", c.outer_tol);
  read_opt(j, "max_failure_fraction", c.max_failure_fraction);
  if (c.replicates < 1 || c.n < 1) fail(ErrorCode::parse, "study config: replicates and n must be >= 1");
  for (int n : c.convergence_sizes)
    if (n < 1) fail(ErrorCode::parse, "study config: convergence sizes must be >= 1");
  return c;
}

json to_json(const FrameStudyConfig& c) {
  return json{{"kind", "frame"},
              {"study", c.study},
              {"n", c.n},
              {"replicates", c.replicates},
              {"seed", c.seed},
              {"threads", c.threads},
              {"outer_max_iters", c.outer_max_iters},
              {"outer_tol", c.outer_tol},
              {"max_failure_fraction", c.max_failure_fraction}};
}

FrameStudyConfig frame_config_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "study", "n", "replicates", "seed", "threads", "outer_max_iters", "outer_tol",
                          "max_failure_fraction"});
  FrameStudyConfig c;
  read_opt(j, "study", c.study);
  read_opt(j, "n", c.n);
  read_opt(j, "replicates", c.replicates);
  read_opt(j, "seed", c.seed);
  read_opt(j, "threads", c.threads);
  read_opt(j, "outer_max_iters", c.outer_max_iters);
  read_opt(j, "outer_tol", c.outer_tol);
  read_opt(j, "max_failure_fraction", c.max_failure_fraction);
  if (c.replicates < 1 || c.n < 1) fail(ErrorCode::parse, "study config: replicates and n must be >= 1");
  return c;
}

json to_json(const RecoveryReport& r) {
  json j;
  j["config"] = to_json(r.config);
  j["truth"] = to_json(r.truth);
  j["failures"] = r.failures;
  json bands = json::array();
  for (const auto& b : r.bands)
    bands.push_back({{"entry", b.name},
                     {"truth", b.truth},
                     {"q05", b.q05},
                     {"q50", b.q50},
                     {"q95", b.q95},
                     {"covered", b.covered}});
  j["bands"] = bands;
  json conv = json::array();
  for (const auto& c : r.convergence) {
    json e = record_json(c);
    if (c.ok) e["abs_error"] = to_json(Mat((c.theta_hat.W_tilde - r.truth.W_tilde).cwiseAbs()));
    conv.push_back(e);
  }
  j["convergence"] = conv;
  j["trend_entries"] = r.trend_entries;
  json reps = json::array();
  for (const auto& rec : r.replicates) reps.push_back(record_json(rec));
  j["replicates"] = reps;
  return j;
}

json to_json(const FrameReport& r) {
  json j;
  j["config"] = to_json(r.config);
  j["truth"] = to_json(r.truth);
  j["failures"] = r.failures;
  json reps = json::array();
  for (const auto& rep : r.replicates) {
    json e = record_json(rep.fit);
    if (rep.fit.ok) {
      e["U_init"] = to_json(rep.U_init);
      e["ols_slope"] = to_json(rep.ols_slope);
      e["angle_init_deg"] = rep.angle_init_deg;
      e["angle_hat_deg"] = rep.angle_hat_deg;
      e["max_angle_deg"] = rep.max_angle_deg;
    }
    reps.push_back(e);
  }
  j["replicates"] = reps;
  return j;
}

// ---------------------------------------------------------------------------
// Checks

namespace {

CheckEntry below(const std::string& name, double value, double threshold) {
  return {name, value, threshold, "<", 0.0, value < threshold};
}

CheckEntry above(const std::string& name, double value, double threshold) {
  return {name, value, threshold, ">", 0.0, value > threshold};
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double sphere_christoffel_error(std::mt19937_64& rng) {
  const Sphere2 sphere;
  std::uniform_real_distribution<double> th(0.05, kPi - 0.05), ph(-kPi, kPi);
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const Vec p = vec2(th(rng), ph(rng));
    const Tensor3 g = sphere.christoffel(p);
    Tensor3 ref(2);
    ref(0, 1, 1) = -std::sin(p[0]) * std::cos(p[0]);
    ref(1, 0, 1) = ref(1, 1, 0) = std::cos(p[0]) / std::sin(p[0]);
    for (size_t i = 0; i < g.data().size(); ++i) worst = std::max(worst, std::abs(g.data()[i] - ref.data()[i]));
  }
  return worst;
}

Vec random_landmarks(std::mt19937_64& rng, int n, double min_dist) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec q(2 * n);
  for (int tries = 0;; ++tries) {
    for (int i = 0; i < 2 * n; ++i) q[i] = u(rng);
    double closest = 1e300;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) closest = std::min(closest, (q.segment<2>(2 * a) - q.segment<2>(2 * b)).norm());
    if (closest >= min_dist) return q;
  }
}

double landmark_christoffel_fd_error(std::mt19937_64& rng) {
  const LandmarkManifold model(3, 0.5);
  const int d = model.dim();
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const Vec p = random_landmarks(rng, 3, 0.3);
    std::vector<Mat> dg(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
      Vec pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      dg[i] = (model.metric(pp) - model.metric(pm)) / (2.0 * h);
    }
    const Mat ginv = model.cometric(p);
    const Tensor3 gamma = model.christoffel(p);
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) acc += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
          worst = std::max(worst, std::abs(0.5 * acc - gamma(k, i, j)));
        }
  }
  return worst;
}

FramePoint sphere_frame(const Vec& p) {
  Mat frame(2, 2);
  frame << 1.0, 0.0, 0.0, 1.0 / std::sin(p[0]);
  return {p, frame};
}

double sphere_geodesic_error() {
  const Sphere2 sphere;
  const Vec p0 = vec2(1.2, 0.3);
  const FramePoint u0 = sphere_frame(p0);
  const Vec w = vec2(0.7, -0.9);
  const int steps = 50, substeps = 4;
  DrivingPath path{Mat(steps, 2), 1.0};
  for (int t = 0; t < steps; ++t) path.increments.row(t) = (w / steps).transpose();
  const Vec end = develop_endpoint(sphere, u0, path, substeps);
  const Vec x0 = sphere.embed(p0);
  const Vec v = sphere.embed_differential(p0) * (u0.frame * w);
  const double speed = v.norm();
  const Vec exact = std::cos(speed) * x0 + std::sin(speed) * v / speed;
  return (end - exact).norm();
}

// Smooth planar curve c(t) = (a sin 2t, b (1 - cos 2t)) sampled on [0, 1],
// padded with zeros when width > 2.
DrivingPath smooth_path(int steps, int width, double a, double b) {
  DrivingPath path{Mat::Zero(steps, width), 1.0};
  for (int t = 0; t < steps; ++t) {
    const double t0 = static_cast<double>(t) / steps, t1 = static_cast<double>(t + 1) / steps;
    path.increments(t, 0) = a * (std::sin(2 * t1) - std::sin(2 * t0));
    path.increments(t, 1) = b * (std::cos(2 * t0) - std::cos(2 * t1));
  }
  return path;
}

double isometry_drift(std::mt19937_64& rng) {
  const LandmarkManifold model(3, 0.5);
  const Vec q = random_landmarks(rng, 3, 0.6);
  const FramePoint u0 = orthonormalize(model, FramePoint{q, Mat::Identity(6, 6)});
  const DevelopedPath dev = develop(model, u0, smooth_path(50, 6, 0.6, 0.5), 4);
  double worst = 0.0;
  for (const auto& s : dev.states)
    worst = std::max(worst, (frame_gram(model, s) - Mat::Identity(6, 6)).cwiseAbs().maxCoeff());
  return worst;
}

double swap_order_gap(const Manifold& model, const FramePoint& u0, double size) {
  DrivingPath a{Mat::Zero(2, 2), 1.0}, b{Mat::Zero(2, 2), 1.0};
  a.increments(0, 0) = size;
  a.increments(1, 1) = size;
  b.increments(0, 1) = size;
  b.increments(1, 0) = size;
  return (develop_endpoint(model, u0, a) - develop_endpoint(model, u0, b)).norm();
}

double flat_ols_deviation(std::uint64_t seed) {
  const FlatSpace flat(2);
  ModelParameters truth;
  truth.y0 = vec2(1.0, -0.5);
  truth.U = Mat::Identity(2, 2);
  truth.W_tilde.resize(2, 2);
  truth.W_tilde << 0.8, 0.2, -0.3, 0.5;
  truth.beta = Vec::Zero(2);
  truth.tau = 0.5;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat X(40, 2);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = nd(rng);
  const CovariateSpec spec = CovariateSpec::all(2);
  FitConfig config;
  config.grid = {10, 1.0};
  config.substeps = 1;
  config.estimate = {true, true, true, false, true};
  config.outer.tol = 1e-14;
  const Dataset data = simulate_dataset(flat, truth, X, spec, config.grid, config.substeps, seed);
  const FitResult r = fit(flat, data, config, &truth);
  const Mat coef = ols_coefficients(data);
  const double dy = (r.theta_hat.y0 - coef.row(0).transpose()).cwiseAbs().maxCoeff();
  const double dw = (r.theta_hat.U * r.theta_hat.W_tilde - coef.bottomRows(2).transpose()).cwiseAbs().maxCoeff();
  return std::max(dy, dw);
}

}  // namespace

std::vector<CheckEntry> run_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckEntry> out;
  out.push_back(below("sphere_christoffel_closed_form", sphere_christoffel_error(rng), 1e-10));
  out.push_back(below("landmark_christoffel_fd", landmark_christoffel_fd_error(rng), 1e-4));
  out.push_back(below("sphere_geodesic_endpoint", sphere_geodesic_error(), 1e-4));

  const Sphere2 sphere;
  const ConvergenceEstimate ce = convergence_order(sphere, sphere_frame(vec2(1.4, 0.2)), smooth_path(16, 2, 0.5, 0.4));
  out.push_back({"integrator_order_sphere", ce.order, 1.7, "in", 2.3, ce.order >= 1.7 && ce.order <= 2.3});
  const LandmarkManifold two(2, 0.5);
  Vec q(4);
  q << -0.5, 0.0, 0.5, 0.0;
  const FramePoint u2 = orthonormalize(two, FramePoint{q, Mat::Identity(4, 2)});
  const ConvergenceEstimate cl = convergence_order(two, u2, smooth_path(16, 2, 0.5, 0.4));
  out.push_back({"integrator_order_landmarks", cl.order, 1.7, "in", 2.3, cl.order >= 1.7 && cl.order <= 2.3});

  out.push_back(below("isometry_drift", isometry_drift(rng), 1e-4));
  out.push_back(above("curvature_effect_sphere", swap_order_gap(sphere, sphere_frame(vec2(1.2, 0.0)), 0.5), 1e-3));
  out.push_back(above("curvature_effect_landmarks", swap_order_gap(two, u2, 0.5), 1e-3));
  out.push_back(below("flat_ols_equivalence", flat_ols_deviation(seed), 1e-4));
  return out;
}

json to_json(const std::vector<CheckEntry>& checks) {
  json list = json::array();
  bool all = true;
  for (const auto& c : checks) {
    json e{{"name", c.name}, {"value", c.value}, {"comparison", c.comparison}, {"threshold", c.threshold}};
    if (c.comparison == "in") e["upper"] = c.upper;
    e["passed"] = c.passed;
    list.push_back(e);
    all = all && c.passed;
  }
  return json{{"all_passed", all}, {"checks", list}};
}

}  // namespace sdr
