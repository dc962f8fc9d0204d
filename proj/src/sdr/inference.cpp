#include "sdr/inference.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/tools/minima.hpp>

#include "sdr/errors.hpp"
#include "sdr/parallel.hpp"

namespace sdr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kEigenFloor = 1e-10;
constexpr double kMaxFlooredFraction = 0.10;

Vec row_vec(const Mat& m, int i) { return m.row(i).transpose(); }

double gaussian_log_f(const Vec& residual, double tau) {
  const double k = static_cast<double>(residual.size());
  return -0.5 * k * (kLog2Pi + 2.0 * std::log(tau)) - 0.5 * residual.squaredNorm() / (tau * tau);
}

Error with_observation(int i, const Error& e) {
  return Error(e.code(), "observation " + std::to_string(i) + ": " + e.what());
}

void check_inference_inputs(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                            const FitConfig& config) {
  validate_dataset(data);
  config.grid.validate();
  require(config.substeps >= 1, "substeps must be positive");
  require(config.fd_step > 0.0, "fd_step must be positive");
  require(theta.tau > 0.0, "inference requires tau > 0");
  require(data.m() == theta.m(), "dataset covariate count does not match theta");
  require(data.k() == model.ambient_dim(), "response dimension does not match the manifold embedding");
  validate_parameters(model, theta, 1e-6);
}

Vec endpoint_of(const Manifold& model, const FramePoint& u0, const Mat& increments, int substeps) {
  return model.embed(develop_from(model, u0, increments, 0, substeps).base);
}

struct ModeWork {
  const Manifold& model;
  const ModelParameters& theta;
  const LatentPrior& prior;
  const FitConfig& config;
  int n;
};

ObservationMode solve_observation(const ModeWork& w, const Vec& y, const Mat& mean, const Vec& start) {
  const int steps = w.config.grid.steps, m = w.theta.m();
  const double tau2 = w.theta.tau * w.theta.tau;
  const FramePoint u0 = w.theta.frame_point();
  const Vec mu = flatten(mean);
  const Mat& Sigma = w.prior.covariance();
  const Mat& P = w.prior.precision();
  const double log_p_const = -0.5 * mu.size() * kLog2Pi + 0.5 * w.prior.log_det_precision();

  auto neg_log_joint = [&](const Vec& z, const Vec& endpoint) {
    const Vec e = z - mu;
    const double log_p = log_p_const - 0.5 * e.dot(P * e);
    return -gaussian_log_f(y - endpoint, w.theta.tau) - log_p;
  };

  ObservationMode mode;
  mode.z = start;
  for (int it = 0;; ++it) {
    EndpointJacobian ej = endpoint_jacobian(w.model, u0, unflatten(mode.z, steps, m), w.config.substeps,
                                            w.config.fd_step);
    const Vec r = y - ej.endpoint;
    const Vec e = mode.z - mu;
    const Vec grad = -ej.jacobian.transpose() * r / tau2 + P * e;
    const double phi = neg_log_joint(mode.z, ej.endpoint);
    if (it == 0 && !std::isfinite(phi))
      fail(ErrorCode::bad_initialization, "non-finite objective at the starting latent path");
    mode.endpoint = std::move(ej.endpoint);
    mode.jacobian = std::move(ej.jacobian);
    mode.grad_norm = grad.norm() / w.n;
    mode.log_f = gaussian_log_f(r, w.theta.tau);
    mode.log_p = log_p_const - 0.5 * e.dot(P * e);
    mode.iterations = it;
    if (mode.grad_norm <= w.config.inner.grad_tol) {
      mode.converged = true;
      break;
    }
    if (it >= w.config.inner.max_iters) break;

    // Gauss–Newton target z* = μ + Σ Jᵀ (τ² I + J Σ Jᵀ)^{-1} (r + J e)
    const Mat& J = mode.jacobian;
    const Mat SJt = Sigma * J.transpose();
    Mat C = J * SJt;
    C.diagonal().array() += tau2;
    const Eigen::LLT<Mat> llt(C);
    const Vec target = mu + SJt * llt.solve(r + J * e);
    const Vec delta = target - mode.z;
    const double slope = grad.dot(delta);
    if (!(slope < 0.0)) break;

    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      const Vec trial = mode.z + alpha * delta;
      double trial_phi;
      try {
        trial_phi = neg_log_joint(trial, endpoint_of(w.model, u0, unflatten(trial, steps, m), w.config.substeps));
      } catch (const Error&) {
        continue;
      }
      if (std::isfinite(trial_phi) && trial_phi <= phi + 1e-4 * alpha * slope) {
        mode.z = trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return mode;
}

}  // namespace

EndpointJacobian endpoint_jacobian(const Manifold& model, const FramePoint& u0, const Mat& increments,
                                   int substeps, double step) {
  const int steps = static_cast<int>(increments.rows()), m = static_cast<int>(increments.cols());
  std::vector<FramePoint> states;
  states.reserve(static_cast<size_t>(steps) + 1);
  states.push_back(u0);
  FramePoint u = u0;
  for (int t = 0; t < steps; ++t) {
    develop_step(model, u, row_vec(increments, t), substeps, t);
    states.push_back(u);
  }
  EndpointJacobian out;
  out.endpoint = model.embed(u.base);
  out.jacobian.resize(model.ambient_dim(), static_cast<Eigen::Index>(steps) * m);
  Mat work = increments;
  for (int t = 0; t < steps; ++t) {
    for (int j = 0; j < m; ++j) {
      const double original = work(t, j);
      work(t, j) = original + step;
      const Vec plus = model.embed(develop_from(model, states[t], work, t, substeps).base);
      work(t, j) = original - step;
      const Vec minus = model.embed(develop_from(model, states[t], work, t, substeps).base);
      work(t, j) = original;
      out.jacobian.col(t * m + j) = (plus - minus) / (2.0 * step);
    }
  }
  return out;
}

LatentStack InnerResult::stack() const {
  Eigen::Index total = 0;
  for (const auto& m : modes) total += m.z.size();
  LatentStack out(total);
  Eigen::Index off = 0;
  for (const auto& m : modes) {
    out.segment(off, m.z.size()) = m.z;
    off += m.z.size();
  }
  return out;
}

double observation_neg_log_joint(const Manifold& model, const Vec& z, const ModelParameters& theta,
                                 const LatentPrior& prior, const Mat& mean, const Vec& y,
                                 const FitConfig& config) {
  const Mat inc = unflatten(z, config.grid.steps, theta.m());
  const Vec endpoint = endpoint_of(model, theta.frame_point(), inc, config.substeps);
  return -gaussian_log_f(y - endpoint, theta.tau) - prior.log_density(inc, mean);
}

Vec observation_gradient(const Manifold& model, const Vec& z, const ModelParameters& theta,
                         const LatentPrior& prior, const Mat& mean, const Vec& y, const FitConfig& config) {
  const EndpointJacobian ej = endpoint_jacobian(model, theta.frame_point(),
                                                unflatten(z, config.grid.steps, theta.m()), config.substeps,
                                                config.fd_step);
  const double tau2 = theta.tau * theta.tau;
  return -ej.jacobian.transpose() * (y - ej.endpoint) / tau2 + prior.precision() * (z - flatten(mean));
}

double h_objective(const Manifold& model, const LatentStack& latent, const ModelParameters& theta,
                   const Dataset& data, const FitConfig& config) {
  check_inference_inputs(model, theta, data, config);
  const int block = config.grid.steps * theta.m();
  require(latent.size() == static_cast<Eigen::Index>(data.n()) * block, "latent stack has wrong length");
  const LatentPrior prior(theta, data.spec, config.grid);
  std::vector<double> parts(static_cast<size_t>(data.n()));
  parallel_for(data.n(), config.threads, [&](int i) {
    try {
      parts[i] = observation_neg_log_joint(model, latent.segment(static_cast<Eigen::Index>(i) * block, block),
                                           theta, prior, mean_increments(theta, row_vec(data.X, i), config.grid),
                                           row_vec(data.Y, i), config);
    } catch (const Error& e) {
      throw with_observation(i, e);
    }
  });
  double total = 0.0;
  for (double p : parts) total += p;
  return total / data.n();
}

InnerResult inner_mode(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                       const FitConfig& config, const LatentStack* warm_start) {
  check_inference_inputs(model, theta, data, config);
  const int block = config.grid.steps * theta.m();
  if (warm_start)
    require(warm_start->size() == static_cast<Eigen::Index>(data.n()) * block, "warm start has wrong length");
  const LatentPrior prior(theta, data.spec, config.grid);
  const ModeWork work{model, theta, prior, config, data.n()};
  InnerResult result;
  result.modes.resize(static_cast<size_t>(data.n()));
  parallel_for(data.n(), config.threads, [&](int i) {
    const Mat mean = mean_increments(theta, row_vec(data.X, i), config.grid);
    const Vec start = warm_start ? Vec(warm_start->segment(static_cast<Eigen::Index>(i) * block, block))
                                 : flatten(mean);
    try {
      result.modes[i] = solve_observation(work, row_vec(data.Y, i), mean, start);
    } catch (const Error& e) {
      throw with_observation(i, e);
    }
  });
  return result;
}

Mat observation_hessian_fd(const Manifold& model, const Vec& z, const ModelParameters& theta,
                           const LatentPrior& prior, const Mat& mean, const Vec& y, const FitConfig& config) {
  const Eigen::Index D = z.size();
  const double h = config.hessian_fd_step;
  Mat H(D, D);
  Vec work = z;
  for (Eigen::Index c = 0; c < D; ++c) {
    work[c] = z[c] + h;
    const Vec gp = observation_gradient(model, work, theta, prior, mean, y, config);
    work[c] = z[c] - h;
    const Vec gm = observation_gradient(model, work, theta, prior, mean, y, config);
    work[c] = z[c];
    H.col(c) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

LaplaceHessian laplace_hessian(const Manifold& model, const ModelParameters& theta, const InnerResult& modes,
                               const Dataset& data, const FitConfig& config) {
  check_inference_inputs(model, theta, data, config);
  require(static_cast<int>(modes.modes.size()) == data.n(), "one mode per observation required");
  const LatentPrior prior(theta, data.spec, config.grid);
  const double tau2 = theta.tau * theta.tau;
  LaplaceHessian out;
  out.block_log_det.assign(static_cast<size_t>(data.n()), 0.0);
  std::vector<int> floored(static_cast<size_t>(data.n()), 0);

  parallel_for(data.n(), config.threads, [&](int i) {
    const ObservationMode& mode = modes.modes[i];
    if (config.hessian == HessianMethod::gauss_newton) {
      // |JᵀJ/τ² + P| = |P| |I + J Σ Jᵀ / τ²|
      Mat C = mode.jacobian * prior.covariance() * mode.jacobian.transpose() / tau2;
      C.diagonal().array() += 1.0;
      const Eigen::LLT<Mat> llt(C);
      if (llt.info() != Eigen::Success)
        fail(ErrorCode::ill_conditioned_laplace, "observation " + std::to_string(i) + ": Gauss-Newton factor failed");
      out.block_log_det[i] = prior.log_det_precision() + 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      return;
    }
    const Mat H = observation_hessian_fd(model, mode.z, theta, prior,
                                         mean_increments(theta, row_vec(data.X, i), config.grid),
                                         row_vec(data.Y, i), config);
    const Eigen::SelfAdjointEigenSolver<Mat> eig(H, Eigen::EigenvaluesOnly);
    double log_det = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < eig.eigenvalues().size(); ++j) {
      double lam = eig.eigenvalues()[j];
      if (lam < kEigenFloor) {
        lam = kEigenFloor;
        ++count;
      }
      log_det += std::log(lam);
    }
    if (count > kMaxFlooredFraction * static_cast<double>(H.rows()))
      fail(ErrorCode::ill_conditioned_laplace, "observation " + std::to_string(i) + ": " + std::to_string(count) +
                                                   " Hessian eigenvalues below floor");
    floored[i] = count;
    out.block_log_det[i] = log_det;
  });

  double sum = 0.0;
  Eigen::Index total_dim = 0;
  for (int i = 0; i < data.n(); ++i) {
    sum += out.block_log_det[i];
    out.floored_eigenvalues += floored[i];
    total_dim += modes.modes[i].z.size();
  }
  out.flagged = out.floored_eigenvalues > 0;
  out.log_det_sigma = -sum + static_cast<double>(total_dim) * std::log(static_cast<double>(data.n()));
  return out;
}

LaplaceEvaluation laplace_evaluate(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                                   const FitConfig& config, const LatentStack* warm_start) {
  LaplaceEvaluation ev;
  ev.inner = inner_mode(model, theta, data, config, warm_start);
  ev.hessian = laplace_hessian(model, theta, ev.inner, data, config);
  double joint = 0.0, half_log_det = 0.0;
  Eigen::Index total_dim = 0;
  for (int i = 0; i < data.n(); ++i) {
    const auto& mode = ev.inner.modes[i];
    joint += mode.log_f + mode.log_p;
    half_log_det += 0.5 * ev.hessian.block_log_det[i];
    total_dim += mode.z.size();
  }
  ev.h = -joint / data.n();
  // log f(y|z°) p(z°) (2π)^{D/2} |Σ|^{1/2} n^{-D/2}, D = n·m·n_s
  ev.log_likelihood = joint + 0.5 * static_cast<double>(total_dim) * kLog2Pi - half_log_det;
  return ev;
}

double laplace_log_likelihood(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                              const FitConfig& config) {
  return laplace_evaluate(model, theta, data, config).log_likelihood;
}

// ---------------------------------------------------------------------------
// Initialization

Mat ols_coefficients(const Dataset& data) {
  validate_dataset(data);
  const int n = data.n(), m = data.m();
  Mat design(n, m + 1);
  design.col(0).setOnes();
  design.rightCols(m) = data.X;
  const Eigen::ColPivHouseholderQR<Mat> qr(design);
  if (qr.rank() < m + 1)
    fail(ErrorCode::rank_deficient, "covariate design [1, X] is rank deficient (constant or collinear covariates)");
  return qr.solve(data.Y);
}

ModelParameters initial_parameters(const Manifold& model, const Dataset& data, const FitConfig& config,
                                   const ModelParameters* fixed) {
  const int m = data.m(), n = data.n();
  const EstimateMask& est = config.estimate;
  const Mat coef = ols_coefficients(data);
  ModelParameters theta;
  if (!est.y0 && fixed) {
    theta.y0 = fixed->y0;
  } else {
    theta.y0 = model.chart(data.Y.colwise().mean().transpose());
  }
  model.validate(theta.y0);

  const Mat D = model.embed_differential(theta.y0);
  const Mat slope_ambient = coef.bottomRows(m).transpose();  // k × m
  const Mat slope_chart = (D.transpose() * D).ldlt().solve(D.transpose() * slope_ambient);

  if (est.U || !fixed) {
    Mat R;
    FramePoint fp;
    try {
      fp = orthonormalize(model, FramePoint{theta.y0, slope_chart}, R);
    } catch (const Error& e) {
      fail(ErrorCode::rank_deficient, std::string("OLS slope has rank below m: ") + e.what());
    }
    theta.U = fp.frame;
    theta.W_tilde = R;
  } else {
    theta.U = orthonormalize(model, FramePoint{theta.y0, fixed->U}).frame;
    theta.W_tilde = theta.U.transpose() * model.lower(theta.y0, slope_chart);
  }
  if (!est.W_tilde && fixed) theta.W_tilde = fixed->W_tilde;

  theta.beta = (!est.beta && fixed) ? fixed->beta : Vec::Zero(m);

  if (!est.tau && fixed) {
    theta.tau = fixed->tau;
  } else {
    Mat design(n, m + 1);
    design.col(0).setOnes();
    design.rightCols(m) = data.X;
    const Mat resid = data.Y - design * coef;
    theta.tau = std::sqrt(resid.squaredNorm() / (static_cast<double>(n) * data.k()));
    if (!(theta.tau > 0.0)) theta.tau = 1e-3;
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Outer loop

namespace {

struct Layout {
  int y0 = -1, U = -1, W = -1, beta = -1, size = 0;
};

Layout make_layout(const EstimateMask& est, int d, int m) {
  Layout l;
  if (est.y0) { l.y0 = l.size; l.size += d; }
  if (est.U) { l.U = l.size; l.size += d * m; }
  if (est.W_tilde) { l.W = l.size; l.size += m * m; }
  if (est.beta) { l.beta = l.size; l.size += m; }
  return l;
}

ModelParameters apply_step(const Manifold& model, const ModelParameters& theta, const Vec& delta,
                           const Layout& l, const EstimateMask& est) {
  const int d = model.dim(), m = theta.m();
  ModelParameters t = theta;
  if (l.y0 >= 0) t.y0 += delta.segment(l.y0, d);
  if (l.U >= 0) t.U += Eigen::Map<const Mat>(delta.data() + l.U, d, m);
  if (l.W >= 0) t.W_tilde += Eigen::Map<const Mat>(delta.data() + l.W, m, m);
  if (l.beta >= 0) t.beta += delta.segment(l.beta, m);
  Mat R;
  t.U = orthonormalize(model, FramePoint{t.y0, t.U}, R).frame;
  if (est.U && est.W_tilde) t.W_tilde = R * t.W_tilde;
  return t;
}

LatentStack shifted_warm_start(const InnerResult& inner, const ModelParameters& from, const ModelParameters& to,
                               const Dataset& data, const TimeGrid& grid) {
  LatentStack z = inner.stack();
  const int block = grid.steps * from.m();
  for (int i = 0; i < data.n(); ++i) {
    const Vec x = row_vec(data.X, i);
    z.segment(static_cast<Eigen::Index>(i) * block, block) +=
        flatten(mean_increments(to, x, grid)) - flatten(mean_increments(from, x, grid));
  }
  return z;
}

// Linearization of y_i ≈ F° + J (μ(θ+δ) - z°) + J_y δy0 + J_U δU around the
// current modes. The marginal covariance C_i = τ² I + J Σ Jᵀ is diagonalized
// once, so the linearized log-likelihood can be profiled in τ for any step δ.
struct Linearization {
  std::vector<Vec> eigenvalues;  // of J Σ Jᵀ, clamped at zero
  std::vector<Mat> design;       // Vᵀ A_i
  std::vector<Vec> residual;     // Vᵀ ρ_i

  double log_likelihood(const Vec& delta, double log_tau) const {
    const double t2 = std::exp(2.0 * log_tau);
    double ll = 0.0;
    for (size_t i = 0; i < eigenvalues.size(); ++i) {
      const Vec r = delta.size() > 0 ? Vec(residual[i] - design[i] * delta) : residual[i];
      for (Eigen::Index j = 0; j < r.size(); ++j) {
        const double v = t2 + eigenvalues[i][j];
        ll -= 0.5 * (std::log(v) + r[j] * r[j] / v);
      }
    }
    return ll;
  }

  // Whitened normal equations Σ Aᵀ C⁻¹ A, Σ Aᵀ C⁻¹ ρ at the given τ.
  void normal_equations(double tau, Mat& N, Vec& g) const {
    const Eigen::Index p = design.empty() ? 0 : design.front().cols();
    N = Mat::Zero(p, p);
    g = Vec::Zero(p);
    for (size_t i = 0; i < design.size(); ++i) {
      const Vec w = (eigenvalues[i].array() + tau * tau).rsqrt().matrix();
      const Mat Aw = w.asDiagonal() * design[i];
      N += Aw.transpose() * Aw;
      g += Aw.transpose() * w.cwiseProduct(residual[i]);
    }
  }
};

Linearization linearize(const Manifold& model, const ModelParameters& theta, const LaplaceEvaluation& ev,
                        const Dataset& data, const FitConfig& config, const Layout& l, const EstimateMask& est) {
  const int d = model.dim(), m = theta.m(), n = data.n();
  const TimeGrid& grid = config.grid;
  const double dt = grid.dt(), T = grid.total_time;
  const double h = config.fd_step;
  const LatentPrior prior(theta, data.spec, grid);
  Linearization lin;
  lin.eigenvalues.resize(static_cast<size_t>(n));
  lin.design.resize(static_cast<size_t>(n));
  lin.residual.resize(static_cast<size_t>(n));

  parallel_for(n, config.threads, [&](int i) {
    const ObservationMode& mode = ev.inner.modes[i];
    const Mat& J = mode.jacobian;
    const Vec x = row_vec(data.X, i);
    const Vec mu = flatten(mean_increments(theta, x, grid));
    const Vec rho = row_vec(data.Y, i) - mode.endpoint - J * (mu - mode.z);
    const Mat M = J * prior.covariance() * J.transpose();
    const Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (M + M.transpose()));

    // y0 and U columns follow the actual update map, which re-orthonormalizes
    // the frame and may fold the triangular factor into W̃.
    Mat A = Mat::Zero(J.rows(), l.size);
    auto fd_column = [&](int col) {
      Vec delta = Vec::Zero(l.size);
      delta[col] = h;
      const ModelParameters moved = apply_step(model, theta, delta, l, est);
      const Mat inc = unflatten(mode.z + flatten(mean_increments(moved, x, grid)) - mu, grid.steps, m);
      A.col(col) = (endpoint_of(model, moved.frame_point(), inc, config.substeps) - mode.endpoint) / h;
    };
    if (l.y0 >= 0)
      for (int c = 0; c < d; ++c) fd_column(l.y0 + c);
    if (l.U >= 0)
      for (int c = 0; c < d * m; ++c) fd_column(l.U + c);
    if (l.W >= 0 || l.beta >= 0) {
      Mat S = Mat::Zero(J.rows(), m);
      for (int t = 0; t < grid.steps; ++t) S += J.middleCols(t * m, m);
      for (int a = 0; a < m; ++a) {
        if (l.beta >= 0) A.col(l.beta + a) = S.col(a) * dt;
        if (l.W >= 0)
          for (int b = 0; b < m; ++b) A.col(l.W + b * m + a) = S.col(a) * (x[b] * dt / T);
      }
    }
    lin.eigenvalues[i] = eig.eigenvalues().cwiseMax(0.0);
    lin.design[i] = eig.eigenvectors().transpose() * A;
    lin.residual[i] = eig.eigenvectors().transpose() * rho;
  });
  return lin;
}

}  // namespace

FitResult fit(const Manifold& model, const Dataset& data, const FitConfig& config, const ModelParameters* init) {
  validate_dataset(data);
  require(config.outer.max_iters >= 0, "outer max_iters must be non-negative");
  require(config.outer.tol > 0.0, "outer tol must be positive");
  require(data.k() == model.ambient_dim(), "response dimension does not match the manifold embedding");

  FitResult result;
  if (config.start == StartMode::given) {
    require(init != nullptr, "start mode 'given' requires initial parameters");
    result.theta_init = *init;
    result.theta_init.U = orthonormalize(model, init->frame_point()).frame;
  } else {
    result.theta_init = initial_parameters(model, data, config, init);
  }
  require(result.theta_init.tau > 0.0, "initial tau must be positive");

  FitConfig loop_config = config;
  loop_config.hessian = HessianMethod::gauss_newton;
  const EstimateMask& est = config.estimate;
  const Layout layout = make_layout(est, model.dim(), data.m());

  ModelParameters theta = result.theta_init;
  LaplaceEvaluation current = laplace_evaluate(model, theta, data, loop_config);
  auto& diag = result.diagnostics;
  diag.outer_trace.push_back({0, "init", current.log_likelihood, true, 0.0});

  auto try_eval = [&](const ModelParameters& cand) -> std::optional<LaplaceEvaluation> {
    const LatentStack warm = shifted_warm_start(current.inner, theta, cand, data, config.grid);
    for (const LatentStack* start : {&warm, static_cast<const LatentStack*>(nullptr)}) {
      try {
        LaplaceEvaluation ev = laplace_evaluate(model, cand, data, loop_config, start);
        if (std::isfinite(ev.log_likelihood)) return ev;
      } catch (const Error&) {
      }
    }
    return std::nullopt;
  };

  const char* block = est.mean_block() ? (est.tau ? "mean+tau" : "mean") : "tau";
  double damping = 1e-4;
  diag.termination = "max_iters";
  for (int iter = 1; iter <= config.outer.max_iters && (layout.size > 0 || est.tau); ++iter) {
    diag.outer_iterations = iter;
    const double ll_start = current.log_likelihood;
    const double threshold = 0.1 * config.outer.tol * std::max(1.0, std::abs(ll_start));
    const Linearization lin = linearize(model, theta, current, data, loop_config, layout, est);
    const double s0 = std::log(theta.tau);
    const double base = lin.log_likelihood(Vec::Zero(layout.size), s0);
    Mat N;
    Vec g;
    lin.normal_equations(theta.tau, N, g);
    const double scale = layout.size > 0 ? std::max(N.diagonal().maxCoeff(), 1e-300) : 1.0;

    bool accepted = false, small = false;
    double shrink = 1.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Vec delta = Vec::Zero(layout.size);
      if (layout.size > 0) {
        Mat lhs = N;
        lhs.diagonal() += damping * (N.diagonal().array() + 1e-12 * scale).matrix();
        delta = lhs.ldlt().solve(g);
      }
      double s = s0;
      if (est.tau) {
        const auto best = boost::math::tools::brent_find_minima(
            [&](double v) { return -lin.log_likelihood(delta, v); }, s0 - 5.0, s0 + 5.0, 40);
        s = s0 + shrink * (best.first - s0);
      }
      const double predicted = lin.log_likelihood(delta, s) - base;
      if (!(predicted > threshold) || !delta.allFinite()) {
        small = true;
        break;
      }
      std::optional<LaplaceEvaluation> ev;
      ModelParameters cand;
      try {
        cand = layout.size > 0 ? apply_step(model, theta, delta, layout, est) : theta;
        cand.tau = std::exp(s);
        ev = try_eval(cand);
      } catch (const Error&) {
      }
      const bool ok = ev && ev->log_likelihood > current.log_likelihood;
      diag.outer_trace.push_back({iter, block, ev ? ev->log_likelihood : -HUGE_VAL, ok, damping});
      if (ok) {
        const double gain = (ev->log_likelihood - current.log_likelihood) / predicted;
        if (gain > 0.75) damping = std::max(damping / 3.0, 1e-6);
        else if (gain < 0.25) damping *= 2.0;
        theta = cand;
        current = std::move(*ev);
        accepted = true;
        break;
      }
      if (ev && std::abs(ev->log_likelihood - current.log_likelihood) <=
                    config.outer.tol * std::max(1.0, std::abs(ll_start))) {
        small = true;
        break;
      }
      damping *= 10.0;
      shrink *= 0.5;
    }

    if (!accepted) {
      diag.converged = small;
      diag.termination = small ? "converged" : "no_improving_step";
      break;
    }
    const double change = std::abs(current.log_likelihood - ll_start) / std::max(1.0, std::abs(ll_start));
    if (change < config.outer.tol) {
      diag.converged = true;
      diag.termination = "relative_change";
      break;
    }
  }

  if (config.hessian != HessianMethod::gauss_newton) {
    current.hessian = laplace_hessian(model, theta, current.inner, data, config);
    double joint = 0.0, half = 0.0;
    Eigen::Index total_dim = 0;
    for (int i = 0; i < data.n(); ++i) {
      joint += current.inner.modes[i].log_f + current.inner.modes[i].log_p;
      half += 0.5 * current.hessian.block_log_det[i];
      total_dim += current.inner.modes[i].z.size();
    }
    current.log_likelihood = joint + 0.5 * static_cast<double>(total_dim) * kLog2Pi - half;
  }

  result.theta_hat = theta;
  result.log_likelihood = current.log_likelihood;
  result.inner_modes = current.inner.stack();
  diag.hessian_log_det = current.hessian.log_det_sigma;
  diag.floored_eigenvalues = current.hessian.floored_eigenvalues;
  diag.hessian_flagged = current.hessian.flagged;
  result.mode_endpoints.resize(data.n(), data.k());
  result.mean_endpoints.resize(data.n(), data.k());
  for (int i = 0; i < data.n(); ++i) {
    const auto& mode = current.inner.modes[i];
    diag.inner_grad_norms.push_back(mode.grad_norm);
    diag.inner_iterations.push_back(mode.iterations);
    result.mode_endpoints.row(i) = mode.endpoint.transpose();
    result.mean_endpoints.row(i) =
        endpoint_of(model, theta.frame_point(), mean_increments(theta, row_vec(data.X, i), config.grid),
                    config.substeps)
            .transpose();
  }
  return result;
}

}  // namespace sdr
