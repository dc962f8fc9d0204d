#include "sdr/development.hpp"

#include <cmath>
#include <limits>

#include "sdr/errors.hpp"

namespace sdr {

std::vector<Vec> DevelopedPath::base_points() const {
  std::vector<Vec> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.base);
  return out;
}

void validate_driving_path(const DrivingPath& path) {
  require(path.steps() >= 1, "driving path needs at least one step");
  require(path.total_time > 0.0 && std::isfinite(path.total_time), "total time must be positive");
  require(path.increments.allFinite(), "driving path has non-finite increments");
}

namespace {

void heun_segment(const Manifold& model, FramePoint& u, const Vec& increment, int substeps) {
  const Vec dx = increment / substeps;
  for (int s = 0; s < substeps; ++s) {
    const FrameTangent k1 = horizontal_field(model, u, dx);
    const FramePoint predicted{u.base + k1.d_base, u.frame + k1.d_frame};
    const FrameTangent k2 = horizontal_field(model, predicted, dx);
    u.base += 0.5 * (k1.d_base + k2.d_base);
    u.frame += 0.5 * (k1.d_frame + k2.d_frame);
  }
}

}  // namespace

void develop_step(const Manifold& model, FramePoint& u, const Vec& increment, int substeps, int step) {
  try {
    heun_segment(model, u, increment, substeps);
  } catch (const IntegrationError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrationError(step, e.what());
  }
  if (!u.base.allFinite() || !u.frame.allFinite())
    throw IntegrationError(step, "state became non-finite");
}

DevelopedPath develop(const Manifold& model, const FramePoint& u0, const DrivingPath& path, int substeps) {
  validate_frame_point(model, u0);
  validate_driving_path(path);
  require(substeps >= 1, "substeps must be positive");
  require(path.width() == u0.rank(), "driving path width must equal the frame rank");
  DevelopedPath out;
  out.states.reserve(path.steps() + 1);
  out.states.push_back(u0);
  FramePoint u = u0;
  for (int t = 0; t < path.steps(); ++t) {
    develop_step(model, u, path.increments.row(t).transpose(), substeps, t);
    out.states.push_back(u);
  }
  return out;
}

FramePoint develop_from(const Manifold& model, FramePoint u, const Mat& increments, int first_step,
                        int substeps) {
  for (int t = first_step; t < increments.rows(); ++t)
    develop_step(model, u, increments.row(t).transpose(), substeps, t);
  return u;
}

Vec develop_endpoint(const Manifold& model, const FramePoint& u0, const DrivingPath& path, int substeps) {
  validate_frame_point(model, u0);
  validate_driving_path(path);
  require(substeps >= 1, "substeps must be positive");
  require(path.width() == u0.rank(), "driving path width must equal the frame rank");
  return model.embed(develop_from(model, u0, path.increments, 0, substeps).base);
}

ConvergenceEstimate convergence_order(const Manifold& model, const FramePoint& u0, const DrivingPath& path) {
  const Vec x1 = develop_endpoint(model, u0, path, 1);
  const Vec x2 = develop_endpoint(model, u0, path, 2);
  const Vec x4 = develop_endpoint(model, u0, path, 4);
  ConvergenceEstimate est;
  est.coarse_error = (x1 - x2).norm();
  est.fine_error = (x2 - x4).norm();
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x4.norm());
  if (est.coarse_error <= floor && est.fine_error <= floor) {
    est.exact = true;
    est.order = std::numeric_limits<double>::infinity();
    return est;
  }
  est.order = std::log2(est.coarse_error / est.fine_error);
  return est;
}

}  // namespace sdr
