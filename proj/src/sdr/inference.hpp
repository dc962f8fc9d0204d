#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdr/process_model.hpp"

namespace sdr {

enum class HessianMethod { gauss_newton, finite_difference };
enum class StartMode { ols, given };

struct InnerConfig {
  int max_iters = 50;
  double grad_tol = 1e-6;
  std::string step_rule = "gauss_newton_armijo";
};

struct OuterConfig {
  int max_iters = 100;
  double tol = 1e-6;
  std::string algorithm = "lm_coordinate";
};

// Which blocks of θ the outer loop moves.
struct EstimateMask {
  bool y0 = true;
  bool U = true;
  bool W_tilde = true;
  bool beta = true;
  bool tau = true;

  bool mean_block() const { return y0 || U || W_tilde || beta; }
};

struct FitConfig {
  TimeGrid grid;
  int substeps = kDefaultSubsteps;
  InnerConfig inner;
  OuterConfig outer;
  double fd_step = 1e-5;          // endpoint Jacobian (central differences)
  double hessian_fd_step = 1e-4;  // finite-difference Hessian of the gradient
  HessianMethod hessian = HessianMethod::gauss_newton;
  EstimateMask estimate;
  StartMode start = StartMode::ols;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Observation-major concatenation of flattened increments, length n·m·n_s.
using LatentStack = Vec;

struct EndpointJacobian {
  Vec endpoint;  // ambient, length k
  Mat jacobian;  // k × (m·n_s), columns indexed t*m + j
};

// Central-difference Jacobian of the developed endpoint with respect to the
// increments. Perturbing step t only re-integrates steps t..n_s-1.
EndpointJacobian endpoint_jacobian(const Manifold& model, const FramePoint& u0, const Mat& increments,
                                   int substeps, double step);

// Per-observation pieces of h that do not depend on the latent value.
struct ObservationTerms {
  Mat mean;  // n_s × m
  Vec mean_flat;
};

struct ObservationMode {
  Vec z;  // flattened increments at the mode
  Vec endpoint;
  Mat jacobian;
  double log_f = 0.0;  // log N(y; endpoint, τ² I_k)
  double log_p = 0.0;  // latent log-density
  double grad_norm = 0.0;  // |∂h/∂z_i|
  int iterations = 0;
  bool converged = false;
};

struct InnerResult {
  std::vector<ObservationMode> modes;

  LatentStack stack() const;
};

// h = -(1/n) log f(y|z,θ) - (1/n) log p(z|θ)
double h_objective(const Manifold& model, const LatentStack& latent, const ModelParameters& theta,
                   const Dataset& data, const FitConfig& config);

// -log f_i - log p_i for one observation (= n · h_i).
double observation_neg_log_joint(const Manifold& model, const Vec& z, const ModelParameters& theta,
                                 const LatentPrior& prior, const Mat& mean, const Vec& y,
                                 const FitConfig& config);

// Finite-difference gradient of n·h_i with respect to z_i.
Vec observation_gradient(const Manifold& model, const Vec& z, const ModelParameters& theta,
                         const LatentPrior& prior, const Mat& mean, const Vec& y, const FitConfig& config);

InnerResult inner_mode(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                       const FitConfig& config, const LatentStack* warm_start = nullptr);

struct LaplaceHessian {
  double log_det_sigma = 0.0;  // log|Σ|, Σ = (D² h)^{-1}
  std::vector<double> block_log_det;  // log|∇² (n h_i)| per observation
  int floored_eigenvalues = 0;
  bool flagged = false;
};

LaplaceHessian laplace_hessian(const Manifold& model, const ModelParameters& theta, const InnerResult& modes,
                               const Dataset& data, const FitConfig& config);

// Dense finite-difference Hessian of n·h_i at z, symmetrized.
Mat observation_hessian_fd(const Manifold& model, const Vec& z, const ModelParameters& theta,
                           const LatentPrior& prior, const Mat& mean, const Vec& y, const FitConfig& config);

struct LaplaceEvaluation {
  double log_likelihood = 0.0;
  double h = 0.0;
  InnerResult inner;
  LaplaceHessian hessian;
};

LaplaceEvaluation laplace_evaluate(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                                   const FitConfig& config, const LatentStack* warm_start = nullptr);

double laplace_log_likelihood(const Manifold& model, const ModelParameters& theta, const Dataset& data,
                              const FitConfig& config);

struct OuterTraceEntry {
  int iteration = 0;
  std::string block;
  double log_likelihood = 0.0;
  bool accepted = false;
  double damping = 0.0;
};

struct FitDiagnostics {
  std::vector<double> inner_grad_norms;
  std::vector<int> inner_iterations;
  std::vector<OuterTraceEntry> outer_trace;
  double hessian_log_det = 0.0;
  int floored_eigenvalues = 0;
  bool hessian_flagged = false;
  int outer_iterations = 0;
  bool converged = false;
  std::string termination;
};

struct FitResult {
  ModelParameters theta_init;
  ModelParameters theta_hat;
  double log_likelihood = 0.0;
  LatentStack inner_modes;
  Mat mode_endpoints;  // n × k, developed endpoints at the inner modes
  Mat mean_endpoints;  // n × k, developed endpoints of the mean drivers
  FitDiagnostics diagnostics;
};

// Default start: y0 = chart(mean of Y); U, W̃ from ambient OLS pulled back to
// the chart and orthonormalized; β = 0; τ = OLS residual scale. Blocks that
// are not estimated are taken from `fixed` when supplied.
ModelParameters initial_parameters(const Manifold& model, const Dataset& data, const FitConfig& config,
                                   const ModelParameters* fixed = nullptr);

// Ambient OLS of Y on [1, X]: rows 0 = intercept, 1..m = slopes.
Mat ols_coefficients(const Dataset& data);

FitResult fit(const Manifold& model, const Dataset& data, const FitConfig& config,
              const ModelParameters* init = nullptr);

}  // namespace sdr
