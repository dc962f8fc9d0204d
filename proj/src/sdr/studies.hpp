#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "sdr/inference.hpp"

namespace sdr {

// Ground truth and fitting defaults for one synthetic study.
struct StudySetup {
  std::string name;
  ManifoldSpec manifold;
  ModelParameters truth;
  CovariateSpec spec;
  TimeGrid grid;
  int substeps = kDefaultSubsteps;
  SimulationOptions options;
  EstimateMask estimate;
  // Covariates: normal(mean, sd) or uniform[low, high].
  bool uniform_covariates = false;
  double covariate_a = 0.0;
  double covariate_b = 2.0;
};

// 8 landmarks at angles kπ/4 on the unit circle, σ = 0.5, m = 2.
StudySetup circle8_setup();
// 3 landmarks on an equilateral triangle, m = 1, vertical frame vectors.
// With near_deterministic the Brownian term is switched off and τ = 1e-3.
StudySetup frame3_setup(bool near_deterministic = false);
// 20 landmarks on an arc, σ = 0.1, one age covariate on [22, 78], no drift.
StudySetup cc20_setup();
StudySetup study_setup(const std::string& name);

std::vector<Vec> circle8_landmarks();
std::vector<Vec> frame3_landmarks();

std::unique_ptr<Manifold> make_study_manifold(const StudySetup& setup);

// Covariates use their own stream, seeded from derive_seed(~seed, 0).
Mat sample_covariates(const StudySetup& setup, int n, std::uint64_t seed);
Dataset simulate_study(const StudySetup& setup, int n, std::uint64_t seed);

// Fit configuration matching the setup: its grid, substeps and estimate mask.
FitConfig study_fit_config(const StudySetup& setup);

// Parameters passed to fit() for the blocks that are held fixed. y0 is the
// chart of the sample mean when it is not estimated from the truth.
ModelParameters study_fixed_parameters(const Manifold& model, const StudySetup& setup, const Dataset& data);

}  // namespace sdr
