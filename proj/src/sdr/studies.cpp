#include "sdr/studies.hpp"

#include <cmath>
#include <random>

#include "sdr/errors.hpp"

namespace sdr {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec stack(const std::vector<Vec>& points) {
  Vec q(2 * static_cast<Eigen::Index>(points.size()));
  for (size_t i = 0; i < points.size(); ++i) q.segment<2>(2 * static_cast<Eigen::Index>(i)) = points[i];
  return q;
}

Vec point(double x, double y) {
  Vec p(2);
  p << x, y;
  return p;
}

}  // namespace

std::vector<Vec> circle8_landmarks() {
  std::vector<Vec> out;
  for (int i = 0; i < 8; ++i) out.push_back(point(std::cos(i * kPi / 4), std::sin(i * kPi / 4)));
  return out;
}

std::vector<Vec> frame3_landmarks() {
  return {point(-0.5, 0.0), point(0.5, 0.0), point(0.0, std::sqrt(3.0) / 2.0)};
}

StudySetup circle8_setup() {
  StudySetup s;
  s.name = "circle8";
  s.manifold = {ManifoldKind::landmarks, 0, 8, 0.5};
  s.grid = {kDefaultSteps, 0.1};
  s.spec = CovariateSpec::all(2);
  const auto pts = circle8_landmarks();
  s.truth.y0 = stack(pts);
  Mat U(16, 2);
  for (int i = 0; i < 8; ++i) {
    U.block<2, 1>(2 * i, 0) = pts[i];                             // radial
    U.block<2, 1>(2 * i, 1) = point(-pts[i][1], pts[i][0]);        // tangential
  }
  const LandmarkManifold model(8, 0.5);
  s.truth.U = orthonormalize(model, FramePoint{s.truth.y0, U}).frame;
  s.truth.W_tilde.resize(2, 2);
  s.truth.W_tilde << 0.2, 0.1, 0.1, 0.2;
  s.truth.beta = Vec::Zero(2);
  s.truth.tau = 0.1;
  s.estimate = {true, false, true, false, true};
  s.covariate_a = 0.0;
  s.covariate_b = 2.0;
  return s;
}

StudySetup frame3_setup(bool near_deterministic) {
  StudySetup s;
  s.name = near_deterministic ? "frame3_exact" : "frame3";
  s.manifold = {ManifoldKind::landmarks, 0, 3, 0.5};
  s.grid = {kDefaultSteps, 0.1};
  s.spec = CovariateSpec::all(1);
  s.truth.y0 = stack(frame3_landmarks());
  Mat U(6, 1);
  U << 0, 1, 0, 1, 0, 1;
  const LandmarkManifold model(3, 0.5);
  s.truth.U = orthonormalize(model, FramePoint{s.truth.y0, U}).frame;
  s.truth.W_tilde = Mat::Constant(1, 1, 0.5);
  s.truth.beta = Vec::Zero(1);
  s.truth.tau = near_deterministic ? 1e-3 : 0.1;
  s.options.brownian_noise = !near_deterministic;
  s.estimate = {true, true, true, false, true};
  s.covariate_a = 0.0;
  s.covariate_b = 2.0;
  return s;
}

StudySetup cc20_setup() {
  StudySetup s;
  s.name = "cc20";
  s.manifold = {ManifoldKind::landmarks, 0, 20, 0.1};
  s.grid = {kDefaultSteps, 0.1};
  s.spec = CovariateSpec::all(1);
  std::vector<Vec> pts;
  Mat U(40, 1);
  for (int i = 0; i < 20; ++i) {
    const double a = kPi * (0.15 + 0.7 * i / 19.0);
    pts.push_back(point(1.5 * std::cos(a), 1.5 * std::sin(a) - 1.0));
    U.block<2, 1>(2 * i, 0) = point(0.0, std::sin(kPi * i / 19.0));
  }
  s.truth.y0 = stack(pts);
  const LandmarkManifold model(20, 0.1);
  s.truth.U = orthonormalize(model, FramePoint{s.truth.y0, U}).frame;
  s.truth.W_tilde = Mat::Constant(1, 1, 0.01);
  s.truth.beta = Vec::Zero(1);
  s.truth.tau = 0.1;
  s.estimate = {false, true, true, false, false};
  s.uniform_covariates = true;
  s.covariate_a = 22.0;
  s.covariate_b = 78.0;
  return s;
}

StudySetup study_setup(const std::string& name) {
  if (name == "circle8") return circle8_setup();
  if (name == "frame3") return frame3_setup(false);
  if (name == "frame3_exact") return frame3_setup(true);
  if (name == "cc20") return cc20_setup();
  fail(ErrorCode::invalid_argument, "unknown study '" + name + "' (expected circle8, frame3, frame3_exact, cc20)");
}

std::unique_ptr<Manifold> make_study_manifold(const StudySetup& setup) { return make_manifold(setup.manifold); }

Mat sample_covariates(const StudySetup& setup, int n, std::uint64_t seed) {
  require(n >= 1, "n must be at least 1");
  std::mt19937_64 rng(derive_seed(~seed, 0));
  const int m = setup.truth.m();
  Mat X(n, m);
  if (setup.uniform_covariates) {
    std::uniform_real_distribution<double> dist(setup.covariate_a, setup.covariate_b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) X(i, j) = dist(rng);
  } else {
    std::normal_distribution<double> dist(setup.covariate_a, setup.covariate_b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) X(i, j) = dist(rng);
  }
  return X;
}

Dataset simulate_study(const StudySetup& setup, int n, std::uint64_t seed) {
  const auto model = make_study_manifold(setup);
  return simulate_dataset(*model, setup.truth, sample_covariates(setup, n, seed), setup.spec, setup.grid,
                          setup.substeps, seed, setup.options);
}

FitConfig study_fit_config(const StudySetup& setup) {
  FitConfig c;
  c.grid = setup.grid;
  c.substeps = setup.substeps;
  c.estimate = setup.estimate;
  return c;
}

ModelParameters study_fixed_parameters(const Manifold& model, const StudySetup& setup, const Dataset& data) {
  ModelParameters fixed = setup.truth;
  if (!setup.estimate.y0) {
    fixed.y0 = model.chart(data.Y.colwise().mean().transpose());
    fixed.U = orthonormalize(model, FramePoint{fixed.y0, setup.truth.U}).frame;
  }
  return fixed;
}

}  // namespace sdr
