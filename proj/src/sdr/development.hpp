#pragma once

#include <vector>

#include "sdr/frame_bundle.hpp"

namespace sdr {

inline constexpr int kDefaultSubsteps = 4;
inline constexpr int kDefaultSteps = 30;

// Piecewise-linear driver in R^r: row t is the increment over step t.
struct DrivingPath {
  Mat increments;
  double total_time = 1.0;

  int steps() const { return static_cast<int>(increments.rows()); }
  int width() const { return static_cast<int>(increments.cols()); }
};

struct DevelopedPath {
  std::vector<FramePoint> states;  // steps + 1 entries, states[0] = u0

  std::vector<Vec> base_points() const;
};

void validate_driving_path(const DrivingPath& path);

// Heun (predictor-corrector) integration of dU = H(U) dx over each linear
// segment, `substeps` sub-intervals per increment.
DevelopedPath develop(const Manifold& model, const FramePoint& u0, const DrivingPath& path,
                      int substeps = kDefaultSubsteps);

// One increment (one row of a driving path) with `substeps` Heun sub-steps.
// `step` is only used to label errors.
void develop_step(const Manifold& model, FramePoint& u, const Vec& increment, int substeps, int step);

// Integrates rows [first_step, increments.rows()) starting from u and returns
// the final state only. Step indices in errors are absolute.
FramePoint develop_from(const Manifold& model, FramePoint u, const Mat& increments, int first_step,
                        int substeps = kDefaultSubsteps);

// embed(project(final state))
Vec develop_endpoint(const Manifold& model, const FramePoint& u0, const DrivingPath& path,
                     int substeps = kDefaultSubsteps);

struct ConvergenceEstimate {
  double order = 0.0;
  bool exact = false;  // all resolutions agree to rounding
  double coarse_error = 0.0;  // |x(1) - x(2)|
  double fine_error = 0.0;    // |x(2) - x(4)|
};

// Richardson estimate of the integrator order from substeps 1, 2 and 4.
ConvergenceEstimate convergence_order(const Manifold& model, const FramePoint& u0,
                                      const DrivingPath& path);

}  // namespace sdr
