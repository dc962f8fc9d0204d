#pragma once

#include <cstdint>
#include <vector>

#include "sdr/development.hpp"

namespace sdr {

enum class CovariateKind { fixed, random };

struct CovariateSpec {
  std::vector<CovariateKind> kinds;

  int size() const { return static_cast<int>(kinds.size()); }
  bool all_fixed() const;
  static CovariateSpec all(int m, CovariateKind kind = CovariateKind::fixed);
};

// θ = (y0, U, W̃, β, τ). U is d×m and metric-orthonormal at y0.
struct ModelParameters {
  Vec y0;
  Mat U;
  Mat W_tilde;
  Vec beta;
  double tau = 0.1;

  int m() const { return static_cast<int>(W_tilde.rows()); }
  FramePoint frame_point() const { return {y0, U}; }
};

struct Dataset {
  Mat X;  // n × m covariates
  Mat Y;  // n × k ambient responses
  CovariateSpec spec;

  int n() const { return static_cast<int>(X.rows()); }
  int m() const { return static_cast<int>(X.cols()); }
  int k() const { return static_cast<int>(Y.cols()); }
};

struct TimeGrid {
  int steps = kDefaultSteps;
  double total_time = 1.0;

  double dt() const { return total_time / steps; }
  void validate() const;
};

void validate_parameters(const Manifold& model, const ModelParameters& theta, double ortho_tol = 1e-8);
void validate_dataset(const Dataset& data);

// Deterministic part of the increments: row t = β Δt + W̃ x Δt / T. Bridge
// covariates share the straight-line mean; their fluctuation lives in the
// covariance.
Mat mean_increments(const ModelParameters& theta, const Vec& x, const TimeGrid& grid);

// Gaussian law of one observation's flattened increments (index t*m + j):
//   Σ = I ⊗ Δt I_m + (Δt I - Δt²/T 11ᵀ) ⊗ W̃ D_random W̃ᵀ.
class LatentPrior {
 public:
  LatentPrior(const ModelParameters& theta, const CovariateSpec& spec, const TimeGrid& grid);

  int dim() const { return static_cast<int>(covariance_.rows()); }
  const Mat& covariance() const { return covariance_; }
  const Mat& precision() const { return precision_; }
  double log_det_precision() const { return log_det_precision_; }

  // log N(increments; mean, Σ)
  double log_density(const Mat& increments, const Mat& mean) const;
  // Σ^{-1} (z - mu) on flattened vectors
  Vec apply_precision(const Vec& deviation) const { return precision_ * deviation; }

 private:
  int steps_;
  int m_;
  double dt_;
  Mat step_inverse_;  // (Δt (I + B))^{-1}
  Mat covariance_;
  Mat precision_;
  double log_det_precision_ = 0.0;
};

Vec flatten(const Mat& increments);
Mat unflatten(const Vec& z, int steps, int m);

double latent_log_density(const DrivingPath& path, const ModelParameters& theta, const Vec& x,
                          const CovariateSpec& spec);

struct SimulationOptions {
  bool brownian_noise = true;     // ε_t in the driving process
  bool measurement_noise = true;  // ambient N(0, τ² I_k)
};

// Stable per-observation seed: splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

DrivingPath sample_driving_path(const ModelParameters& theta, const Vec& x, const CovariateSpec& spec,
                                const TimeGrid& grid, std::uint64_t seed,
                                const SimulationOptions& options = {});

Vec simulate_observation(const Manifold& model, const ModelParameters& theta, const Vec& x,
                         const CovariateSpec& spec, const TimeGrid& grid, int substeps, std::uint64_t seed,
                         const SimulationOptions& options = {});

// Row i uses derive_seed(master_seed, i).
Dataset simulate_dataset(const Manifold& model, const ModelParameters& theta, const Mat& X,
                         const CovariateSpec& spec, const TimeGrid& grid, int substeps,
                         std::uint64_t master_seed, const SimulationOptions& options = {});

}  // namespace sdr
