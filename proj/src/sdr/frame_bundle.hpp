#pragma once

#include "sdr/geometry.hpp"

namespace sdr {

// Point of the frame bundle: a base point and r frame vectors (columns) in
// chart coordinates. r may be smaller than dim(M).
struct FramePoint {
  Vec base;
  Mat frame;

  int rank() const { return static_cast<int>(frame.cols()); }
};

// Tangent vector to the frame bundle at a FramePoint.
struct FrameTangent {
  Vec d_base;
  Mat d_frame;
};

void validate_frame_point(const Manifold& model, const FramePoint& u);

// Horizontal lift of nu * w: d_base = nu w, d_frame_j = -Γ(nu w, nu_j).
FrameTangent horizontal_field(const Manifold& model, const FramePoint& u, const Vec& w);

inline const Vec& project(const FramePoint& u) { return u.base; }

// nu^T g(base) nu
Mat frame_gram(const Manifold& model, const FramePoint& u);

// Gram–Schmidt under g(base), column order preserved, one re-orthogonalization pass.
FramePoint orthonormalize(const Manifold& model, const FramePoint& u);

// Same as orthonormalize, also returning the upper-triangular R with
// frame = orthonormal_frame * R.
FramePoint orthonormalize(const Manifold& model, const FramePoint& u, Mat& r_factor);

}  // namespace sdr
