#include "sdr/process_model.hpp"

#include <cmath>
#include <random>

#include "sdr/errors.hpp"

namespace sdr {

bool CovariateSpec::all_fixed() const {
  for (auto k : kinds)
    if (k != CovariateKind::fixed) return false;
  return true;
}

CovariateSpec CovariateSpec::all(int m, CovariateKind kind) {
  return CovariateSpec{std::vector<CovariateKind>(static_cast<size_t>(m), kind)};
}

void TimeGrid::validate() const {
  require(steps >= 1, "number of time steps must be positive");
  require(total_time > 0.0 && std::isfinite(total_time), "total time must be positive");
}

void validate_parameters(const Manifold& model, const ModelParameters& theta, double ortho_tol) {
  const int d = model.dim();
  const int m = theta.m();
  require(m >= 1 && m <= d, "number of covariates must be in [1, dim(M)]");
  require(theta.W_tilde.cols() == m, "W_tilde must be square");
  require(theta.U.rows() == d && theta.U.cols() == m, "U must be dim(M) x m");
  require(theta.beta.size() == m, "beta must have m entries");
  require(theta.tau >= 0.0 && std::isfinite(theta.tau), "tau must be non-negative");
  require(theta.W_tilde.allFinite() && theta.beta.allFinite() && theta.U.allFinite(),
          "parameters must be finite");
  model.validate(theta.y0);
  const Mat gram = frame_gram(model, theta.frame_point());
  const double dev = (gram - Mat::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(dev <= ortho_tol))
    fail(ErrorCode::invalid_argument, "U is not orthonormal under the metric at y0 (deviation " +
                                          std::to_string(dev) + ")");
}

void validate_dataset(const Dataset& data) {
  require(data.n() >= 1, "dataset is empty");
  require(data.X.rows() == data.Y.rows(), "covariate and response row counts differ");
  require(data.spec.size() == data.m(), "covariate spec length must equal the number of covariates");
  require(data.X.allFinite(), "covariates contain non-finite values");
  require(data.Y.allFinite(), "responses contain non-finite values");
}

Mat mean_increments(const ModelParameters& theta, const Vec& x, const TimeGrid& grid) {
  grid.validate();
  require(x.size() == theta.m(), "covariate vector length must equal m");
  const double dt = grid.dt();
  const Vec row = theta.beta * dt + theta.W_tilde * x * (dt / grid.total_time);
  Mat out(grid.steps, theta.m());
  for (int t = 0; t < grid.steps; ++t) out.row(t) = row.transpose();
  return out;
}

Vec flatten(const Mat& increments) {
  Vec z(increments.size());
  const int m = static_cast<int>(increments.cols());
  for (int t = 0; t < increments.rows(); ++t)
    for (int j = 0; j < m; ++j) z[t * m + j] = increments(t, j);
  return z;
}

Mat unflatten(const Vec& z, int steps, int m) {
  require(z.size() == static_cast<Eigen::Index>(steps) * m, "latent vector has wrong length");
  Mat out(steps, m);
  for (int t = 0; t < steps; ++t)
    for (int j = 0; j < m; ++j) out(t, j) = z[t * m + j];
  return out;
}

LatentPrior::LatentPrior(const ModelParameters& theta, const CovariateSpec& spec, const TimeGrid& grid)
    : steps_(grid.steps), m_(theta.m()), dt_(grid.dt()) {
  grid.validate();
  require(spec.size() == m_, "covariate spec length must equal m");
  Mat D = Mat::Zero(m_, m_);
  for (int j = 0; j < m_; ++j)
    if (spec.kinds[j] == CovariateKind::random) D(j, j) = 1.0;
  const Mat B = theta.W_tilde * D * theta.W_tilde.transpose();
  const Mat step_cov = dt_ * (Mat::Identity(m_, m_) + B);
  Eigen::LLT<Mat> llt(step_cov);
  if (llt.info() != Eigen::Success) fail(ErrorCode::invalid_argument, "latent step covariance not PD");
  step_inverse_ = llt.solve(Mat::Identity(m_, m_));
  const double log_det_step = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  const int D_all = steps_ * m_;
  covariance_ = Mat::Zero(D_all, D_all);
  precision_ = Mat::Zero(D_all, D_all);
  const double bridge_cross = dt_ * dt_ / grid.total_time;
  const Mat par_inv = Mat::Identity(m_, m_) / dt_;
  // P = (I - 11ᵀ/n) ⊗ A + (11ᵀ/n) ⊗ I/Δt
  const Mat cross_prec = (par_inv - step_inverse_) / steps_;
  for (int t = 0; t < steps_; ++t)
    for (int s = 0; s < steps_; ++s) {
      auto cov = covariance_.block(t * m_, s * m_, m_, m_);
      auto prec = precision_.block(t * m_, s * m_, m_, m_);
      cov = -bridge_cross * B;
      prec = cross_prec;
      if (t == s) {
        cov += step_cov;
        prec += step_inverse_;
      }
    }
  log_det_precision_ = -((steps_ - 1) * log_det_step + m_ * std::log(dt_));
}

double LatentPrior::log_density(const Mat& increments, const Mat& mean) const {
  require(increments.rows() == steps_ && increments.cols() == m_, "driving path has wrong shape");
  const Mat e = increments - mean;
  double quad = 0.0;
  Vec sum = Vec::Zero(m_);
  for (int t = 0; t < steps_; ++t) {
    const Vec et = e.row(t).transpose();
    quad += et.dot(step_inverse_ * et);
    sum += et;
  }
  quad += (sum.squaredNorm() / dt_ - sum.dot(step_inverse_ * sum)) / steps_;
  const double D_all = static_cast<double>(steps_) * m_;
  return -0.5 * D_all * std::log(2.0 * M_PI) + 0.5 * log_det_precision_ - 0.5 * quad;
}

double latent_log_density(const DrivingPath& path, const ModelParameters& theta, const Vec& x,
                          const CovariateSpec& spec) {
  validate_driving_path(path);
  require(path.width() == theta.m(), "driving path width must equal m");
  const TimeGrid grid{path.steps(), path.total_time};
  const LatentPrior prior(theta, spec, grid);
  return prior.log_density(path.increments, mean_increments(theta, x, grid));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

DrivingPath sample_with(std::mt19937_64& rng, const ModelParameters& theta, const Vec& x,
                        const CovariateSpec& spec, const TimeGrid& grid, const SimulationOptions& options) {
  grid.validate();
  const int m = theta.m();
  require(x.size() == m, "covariate vector length must equal m");
  require(spec.size() == m, "covariate spec length must equal m");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double dt = grid.dt();
  const double T = grid.total_time;
  DrivingPath path{Mat(grid.steps, m), T};
  Vec bridge_pos = Vec::Zero(m);
  Vec dX(m);
  for (int t = 0; t < grid.steps; ++t) {
    const double remaining = T - t * dt;
    for (int j = 0; j < m; ++j) {
      if (spec.kinds[j] == CovariateKind::fixed) {
        dX[j] = x[j] * dt / T;
      } else if (t == grid.steps - 1) {
        dX[j] = x[j] - bridge_pos[j];
      } else {
        const double mean = (x[j] - bridge_pos[j]) * dt / remaining;
        const double var = dt * (1.0 - dt / remaining);
        dX[j] = mean + std::sqrt(std::max(var, 0.0)) * normal(rng);
      }
      bridge_pos[j] += dX[j];
    }
    Vec dz = theta.beta * dt + theta.W_tilde * dX;
    if (options.brownian_noise)
      for (int j = 0; j < m; ++j) dz[j] += std::sqrt(dt) * normal(rng);
    path.increments.row(t) = dz.transpose();
  }
  return path;
}

}  // namespace

DrivingPath sample_driving_path(const ModelParameters& theta, const Vec& x, const CovariateSpec& spec,
                                const TimeGrid& grid, std::uint64_t seed, const SimulationOptions& options) {
  std::mt19937_64 rng(seed);
  return sample_with(rng, theta, x, spec, grid, options);
}

Vec simulate_observation(const Manifold& model, const ModelParameters& theta, const Vec& x,
                         const CovariateSpec& spec, const TimeGrid& grid, int substeps, std::uint64_t seed,
                         const SimulationOptions& options) {
  validate_parameters(model, theta);
  std::mt19937_64 rng(seed);
  const DrivingPath path = sample_with(rng, theta, x, spec, grid, options);
  Vec y = develop_endpoint(model, theta.frame_point(), path, substeps);
  if (options.measurement_noise && theta.tau > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int c = 0; c < y.size(); ++c) y[c] += theta.tau * normal(rng);
  }
  return y;
}

Dataset simulate_dataset(const Manifold& model, const ModelParameters& theta, const Mat& X,
                         const CovariateSpec& spec, const TimeGrid& grid, int substeps,
                         std::uint64_t master_seed, const SimulationOptions& options) {
  require(X.cols() == theta.m(), "covariate matrix must have m columns");
  Dataset data{X, Mat(X.rows(), model.ambient_dim()), spec};
  for (int i = 0; i < X.rows(); ++i)
    data.Y.row(i) = simulate_observation(model, theta, X.row(i).transpose(), spec, grid, substeps,
                                         derive_seed(master_seed, static_cast<std::uint64_t>(i)), options)
                        .transpose();
  return data;
}

}  // namespace sdr
