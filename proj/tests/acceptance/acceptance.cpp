// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdr/development.hpp"
#include "sdr/experiments.hpp"
#include "sdr/inference.hpp"
#include "sdr/sdr.h"
#include "sdr/studies.hpp"

using namespace sdr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------
// 1. Flat reduction

struct FlatOracle {
  Vec intercept;
  Mat slope;  // k × m
  double rss = 0.0;
};

FlatOracle ols_oracle(const Dataset& data) {
  const int n = data.n(), m = data.m();
  Mat A(n, m + 1);
  A.col(0).setOnes();
  A.rightCols(m) = data.X;
  const Mat coef = (A.transpose() * A).ldlt().solve(A.transpose() * data.Y);
  FlatOracle o;
  o.intercept = coef.row(0).transpose();
  o.slope = coef.bottomRows(m).transpose();
  o.rss = (data.Y - A * coef).squaredNorm();
  return o;
}

double gaussian_marginal(const ModelParameters& theta, const Dataset& data, double T) {
  const int k = data.k();
  const Mat S = theta.tau * theta.tau * Mat::Identity(k, k) + T * theta.U * theta.U.transpose();
  const Eigen::LLT<Mat> llt(S);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const Vec r = data.Y.row(i).transpose() - theta.y0 -
                  theta.U * (theta.beta * T + theta.W_tilde * data.X.row(i).transpose());
    total += -0.5 * r.dot(llt.solve(r)) - 0.5 * log_det - 0.5 * k * std::log(2.0 * M_PI);
  }
  return total;
}

Outcome criterion_flat() {
  const FlatSpace flat(2);
  ModelParameters truth;
  truth.y0 = vec2(1.0, -0.5);
  truth.U = Mat::Identity(2, 2);
  truth.W_tilde.resize(2, 2);
  truth.W_tilde << 0.8, 0.2, -0.3, 0.5;
  truth.beta = Vec::Zero(2);
  truth.tau = 0.5;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat X(40, 2);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = nd(rng);
  FitConfig config;
  config.grid = {10, 1.0};
  config.substeps = 1;
  config.outer.tol = 1e-14;
  const Dataset data = simulate_dataset(flat, truth, X, CovariateSpec::all(2), config.grid, 1, 102);
  const FlatOracle ols = ols_oracle(data);
  const double T = config.grid.total_time;

  // Drift held at zero, base point estimated.
  config.estimate = {true, true, true, false, true};
  const FitResult a = fit(flat, data, config, &truth);
  const double err_y0 = max_abs(a.theta_hat.y0 - ols.intercept);
  const double err_w = max_abs(a.theta_hat.U * a.theta_hat.W_tilde - ols.slope);
  const double tau2 = ols.rss / (data.n() * data.k()) - T;
  const double err_tau = std::abs(a.theta_hat.tau * a.theta_hat.tau - tau2);
  const double err_ll_a = std::abs(a.log_likelihood - gaussian_marginal(a.theta_hat, data, T));

  // Base point held at the truth, drift estimated.
  config.estimate = {false, true, true, true, true};
  const FitResult b = fit(flat, data, config, &truth);
  const double err_beta = max_abs(b.theta_hat.U * b.theta_hat.beta - (ols.intercept - truth.y0) / T);
  const double err_w_b = max_abs(b.theta_hat.U * b.theta_hat.W_tilde - ols.slope);
  const double err_ll_b = std::abs(b.log_likelihood - gaussian_marginal(b.theta_hat, data, T));

  const double param_err = std::max({err_y0, err_w, err_tau, err_beta, err_w_b});
  const double ll_err = std::max(err_ll_a, err_ll_b);
  return {param_err < 1e-4 && ll_err < 1e-6,
          "max |theta - OLS| = " + fmt("%.2e", param_err) + " (tol 1e-4), |loglik - marginal| = " +
              fmt("%.2e", ll_err) + " (tol 1e-6)"};
}

// ---------------------------------------------------------------------------
// 2. Geometry oracles

Outcome criterion_geometry() {
  std::mt19937_64 rng(201);
  const Sphere2 sphere;
  std::uniform_real_distribution<double> th(0.2, M_PI - 0.2), ph(-M_PI, M_PI);
  double sphere_err = 0.0;
  for (int s = 0; s < 100; ++s) {
    const double t = th(rng);
    const Tensor3 g = sphere.christoffel(vec2(t, ph(rng)));
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double ref = 0.0;
          if (k == 0 && i == 1 && j == 1) ref = -std::sin(t) * std::cos(t);
          if (k == 1 && i + j == 1) ref = std::cos(t) / std::sin(t);
          sphere_err = std::max(sphere_err, std::abs(g(k, i, j) - ref));
        }
  }

  // Landmark metric from an explicitly assembled kernel matrix, differentiated numerically.
  const int nl = 4;
  const double sigma = 0.5;
  const LandmarkManifold model(nl, sigma);
  auto oracle_metric = [&](const Vec& q) {
    Mat K = Mat::Zero(2 * nl, 2 * nl);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) {
        const double r2 = (q.segment<2>(2 * a) - q.segment<2>(2 * b)).squaredNorm();
        const double k = std::exp(-r2 / (2 * sigma * sigma));
        K(2 * a, 2 * b) = K(2 * a + 1, 2 * b + 1) = k;
      }
    return std::pair<Mat, Mat>(K, K.inverse());
  };
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int d = 2 * nl;
  const double h = 1e-5;
  double landmark_err = 0.0;
  int configs = 0;
  while (configs < 100) {
    Vec q(d);
    for (int i = 0; i < d; ++i) q[i] = u(rng);
    double closest = 1e9;
    for (int a = 0; a < nl; ++a)
      for (int b = a + 1; b < nl; ++b) closest = std::min(closest, (q.segment<2>(2 * a) - q.segment<2>(2 * b)).norm());
    if (closest < 0.3) continue;
    ++configs;
    const Mat cometric = oracle_metric(q).first;
    std::vector<Mat> dg;
    for (int i = 0; i < d; ++i) {
      Vec qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      dg.push_back((oracle_metric(qp).second - oracle_metric(qm).second) / (2 * h));
    }
    const Tensor3 gamma = model.christoffel(q);
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) acc += cometric(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
          landmark_err = std::max(landmark_err, std::abs(0.5 * acc - gamma(k, i, j)));
        }
  }
  return {sphere_err < 1e-10 && landmark_err < 1e-4,
          "sphere closed-form error " + fmt("%.2e", sphere_err) + " (tol 1e-10), landmark FD error " +
              fmt("%.2e", landmark_err) + " over 100 configurations (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 3. Development oracles

FramePoint sphere_orthonormal(double theta, double phi) {
  Mat frame(2, 2);
  frame << 1.0, 0.0, 0.0, 1.0 / std::sin(theta);
  return {vec2(theta, phi), frame};
}

DrivingPath curve(int steps, int width) {
  DrivingPath path{Mat::Zero(steps, width), 1.0};
  for (int t = 0; t < steps; ++t) {
    const double s0 = static_cast<double>(t) / steps, s1 = static_cast<double>(t + 1) / steps;
    path.increments(t, 0) = 0.6 * (std::sin(2.5 * s1) - std::sin(2.5 * s0));
    path.increments(t, 1) = 0.4 * (std::cos(2.0 * s0) - std::cos(2.0 * s1));
  }
  return path;
}

double richardson_order(const Manifold& model, const FramePoint& u0, const DrivingPath& path) {
  const Vec x1 = develop_endpoint(model, u0, path, 1);
  const Vec x2 = develop_endpoint(model, u0, path, 2);
  const Vec x4 = develop_endpoint(model, u0, path, 4);
  return std::log2((x1 - x2).norm() / (x2 - x4).norm());
}

Outcome criterion_development() {
  const Sphere2 sphere;
  const FramePoint u0 = sphere_orthonormal(1.1, 0.4);
  const Vec w = vec2(std::cos(0.7), std::sin(0.7));
  DrivingPath line{Mat(50, 2), 1.0};
  for (int t = 0; t < 50; ++t) line.increments.row(t) = w.transpose() / 50.0;
  const Vec end = develop_endpoint(sphere, u0, line, 4);  // 200 total steps
  const Vec x0 = sphere.embed(u0.base);
  const Vec v = sphere.embed_differential(u0.base) * (u0.frame * w);
  const Vec exact = std::cos(v.norm()) * x0 + std::sin(v.norm()) * v / v.norm();
  const double geodesic_err = (end - exact).norm();

  const double order_sphere = richardson_order(sphere, u0, curve(16, 2));
  const LandmarkManifold two(2, 0.5);
  Vec q(4);
  q << -0.5, 0.0, 0.5, 0.1;
  const FramePoint w0 = orthonormalize(two, FramePoint{q, Mat::Identity(4, 2)});
  const double order_landmarks = richardson_order(two, w0, curve(16, 2));

  const LandmarkManifold three(3, 0.5);
  Vec q3(6);
  q3 << -0.5, 0.0, 0.5, 0.0, 0.0, 0.8;
  const FramePoint f0 = orthonormalize(three, FramePoint{q3, Mat::Identity(6, 6)});
  DrivingPath wide = curve(50, 6);
  wide.increments.col(4) = wide.increments.col(0).reverse();
  double drift = 0.0;
  for (const auto& s : develop(three, f0, wide, 4).states) {
    const Mat gram = s.frame.transpose() * three.metric(s.base) * s.frame;
    drift = std::max(drift, max_abs(gram - Mat::Identity(6, 6)));
  }
  for (const auto& s : develop(sphere, u0, curve(50, 2), 4).states) {
    const Mat gram = s.frame.transpose() * sphere.metric(s.base) * s.frame;
    drift = std::max(drift, max_abs(gram - Mat::Identity(2, 2)));
  }

  const bool orders_ok = order_sphere >= 1.7 && order_sphere <= 2.3 && order_landmarks >= 1.7 && order_landmarks <= 2.3;
  return {geodesic_err < 1e-4 && orders_ok && drift < 1e-4,
          "great-circle error " + fmt("%.2e", geodesic_err) + " (tol 1e-4), order sphere " +
              fmt("%.3f", order_sphere) + " landmarks " + fmt("%.3f", order_landmarks) + " (in [1.7, 2.3]), drift " +
              fmt("%.2e", drift) + " (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 4. Curvature effect

Outcome criterion_curvature() {
  DrivingPath bent{Mat::Zero(2, 2), 1.0}, line{Mat::Constant(2, 2, 0.5), 1.0};
  bent.increments(0, 0) = 1.0;
  bent.increments(1, 1) = 1.0;
  const Sphere2 sphere;
  const FramePoint u0 = sphere_orthonormal(1.2, 0.0);
  const double gap_sphere = (develop_endpoint(sphere, u0, bent) - develop_endpoint(sphere, u0, line)).norm();
  const LandmarkManifold two(2, 0.5);
  Vec q(4);
  q << -0.5, 0.0, 0.5, 0.0;
  const FramePoint w0 = orthonormalize(two, FramePoint{q, Mat::Identity(4, 2)});
  const double gap_landmarks = (develop_endpoint(two, w0, bent) - develop_endpoint(two, w0, line)).norm();
  return {gap_sphere > 1e-3 && gap_landmarks > 1e-3,
          "endpoint gap sphere " + fmt("%.3e", gap_sphere) + ", landmarks " + fmt("%.3e", gap_landmarks) +
              " (need > 1e-3)"};
}

// ---------------------------------------------------------------------------
// 5. Recovery at n = 100

constexpr std::uint64_t kStudySeed = 1;

FitResult study_fit(const StudySetup& setup, int n, std::uint64_t seed) {
  const auto model = make_study_manifold(setup);
  const Dataset data = simulate_study(setup, n, seed);
  FitConfig config = study_fit_config(setup);
  config.seed = seed;
  const ModelParameters fixed = study_fixed_parameters(*model, setup, data);
  return fit(*model, data, config, &fixed);
}

Outcome criterion_recovery() {
  const StudySetup setup = circle8_setup();
  const FitResult r100 = study_fit(setup, 100, derive_seed(kStudySeed, 1000000 + 100));
  const Mat& w = r100.theta_hat.W_tilde;
  const double err = max_abs(w - setup.truth.W_tilde);
  return {err < 0.05, "W_hat_100 = [[" + fmt("%.4f", w(0, 0)) + ", " + fmt("%.4f", w(0, 1)) + "], [" +
                          fmt("%.4f", w(1, 0)) + ", " + fmt("%.4f", w(1, 1)) + "]], max error " + fmt("%.4f", err) +
                          " (tol 0.05), termination " + r100.diagnostics.termination};
}

// ---------------------------------------------------------------------------
// 6. Sampling-distribution coverage

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const size_t lo = static_cast<size_t>(h);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

Outcome criterion_coverage() {
  RecoveryStudyConfig config;
  config.study = "circle8";
  config.replicates = 20;
  config.n = 20;
  config.seed = kStudySeed;
  config.convergence_sizes = {};
  const RecoveryReport report = run_recovery_study(config);
  std::string detail;
  bool all = true;
  int ok = 0;
  for (const auto& r : report.replicates) ok += r.ok ? 1 : 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      std::vector<double> values;
      for (const auto& r : report.replicates)
        if (r.ok) values.push_back(r.theta_hat.W_tilde(a, b));
      const double lo = type7(values, 0.05), hi = type7(values, 0.95);
      const double truth = report.truth.W_tilde(a, b);
      const bool covered = lo <= truth && truth <= hi;
      all = all && covered;
      detail += "W" + std::to_string(a) + std::to_string(b) + " " + fmt("%.3f", truth) + " in [" + fmt("%.3f", lo) +
                ", " + fmt("%.3f", hi) + "]" + (covered ? "" : " MISSED") + "; ";
    }
  detail += std::to_string(ok) + "/20 replicates fitted";
  return {all && ok >= 20, detail};
}

// ---------------------------------------------------------------------------
// 7. Frame study

double vertical_angle_deg(const Mat& U, int l) {
  const Eigen::Vector2d v = U.block<2, 1>(2 * l, 0);
  return std::acos(std::clamp(std::abs(v[1]) / v.norm(), 0.0, 1.0)) * 180.0 / M_PI;
}

double frame_max_angle(const std::string& study, double& init_gap) {
  FrameStudyConfig config;
  config.study = study;
  config.n = 20;
  config.replicates = 1;
  config.seed = kStudySeed;
  const FrameReport report = run_frame_study(config);
  const FrameReplicate& rep = report.replicates.front();
  if (!rep.fit.ok) return 180.0;
  // The starting frame points along the ambient regression slope of each landmark.
  const StudySetup setup = study_setup(study);
  const Dataset data = simulate_study(setup, config.n, derive_seed(config.seed, 0));
  const FlatOracle ols = ols_oracle(data);
  init_gap = 0.0;
  double worst = 0.0;
  for (int l = 0; l < 3; ++l) {
    const Eigen::Vector2d s = ols.slope.block<2, 1>(2 * l, 0), u = rep.U_init.block<2, 1>(2 * l, 0);
    init_gap = std::max(init_gap, std::acos(std::clamp(std::abs(s.dot(u)) / (s.norm() * u.norm()), 0.0, 1.0)) *
                                      180.0 / M_PI);
    worst = std::max(worst, vertical_angle_deg(rep.fit.theta_hat.U, l));
  }
  return worst;
}

Outcome criterion_frame() {
  double gap_exact = 0.0, gap_noisy = 0.0;
  const double exact = frame_max_angle("frame3_exact", gap_exact);
  const double noisy = frame_max_angle("frame3", gap_noisy);
  const double gap = std::max(gap_exact, gap_noisy);
  return {exact < 2.0 && noisy < 15.0 && gap < 1e-4,
          "near-zero noise max angle " + fmt("%.3f", exact) + " deg (tol 2), study noise " + fmt("%.3f", noisy) +
              " deg (tol 15), start vs OLS slope " + fmt("%.1e", gap) + " deg (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 8. Determinism through the library interface

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "sdr_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path recovery = root / "recovery.json", frame = root / "frame.json";
  std::ofstream(recovery) << R"({"study": "circle8", "replicates": 2, "n": 10, "seed": 7, "convergence_sizes": [12]})";
  std::ofstream(frame) << R"({"study": "frame3", "replicates": 2, "n": 10, "seed": 7})";
  int identical = 0, compared = 0;
  std::string note;
  for (const auto& [kind, cfg] : {std::pair<std::string, fs::path>{"recovery", recovery}, {"frame", frame}}) {
    const fs::path a = root / (kind + "_a"), b = root / (kind + "_b");
    if (sdr_run_study(kind.c_str(), cfg.c_str(), a.c_str(), 0) != SDR_OK ||
        sdr_run_study(kind.c_str(), cfg.c_str(), b.c_str(), 0) != SDR_OK)
      return {false, kind + " study failed: " + sdr_last_error()};
    for (const auto& entry : fs::directory_iterator(a)) {
      ++compared;
      const fs::path other = b / entry.path().filename();
      if (fs::exists(other) && file_bytes(entry.path()) == file_bytes(other))
        ++identical;
      else
        note += " differs: " + kind + "/" + entry.path().filename().string();
    }
  }
  return {compared > 0 && identical == compared,
          std::to_string(identical) + "/" + std::to_string(compared) + " output files byte-identical across reruns" +
              note};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"flat-space reduction", criterion_flat},
      {"geometry oracle", criterion_geometry},
      {"development oracle", criterion_development},
      {"curvature effect", criterion_curvature},
      {"parameter recovery n=100", criterion_recovery},
      {"sampling-distribution coverage", criterion_coverage},
      {"frame-study sanity", criterion_frame},
      {"pipeline determinism", criterion_determinism},
  };
  const std::vector<double> budget_s{10, 30, 10, 5, 900, 1800, 600, 0};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[c].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.1f s", secs);
    if (budget_s[c] > 0) {
      timing += fmt(" (budget %.0f s)", budget_s[c]);
      if (secs > budget_s[c]) {
        out.passed = false;
        timing += " OVER BUDGET";
      }
    }
    failures += out.passed ? 0 : 1;
    std::printf("criterion %d %s: %s | %s | %s\n", id, out.passed ? "PASS" : "FAIL", criteria[c].first,
                out.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
