#include "sdr/frame_bundle.hpp"

#include <cmath>

#include "sdr/errors.hpp"

namespace sdr {

namespace {
constexpr double kRankTolerance = 1e-10;
}

void validate_frame_point(const Manifold& model, const FramePoint& u) {
  model.validate(u.base);
  require(u.frame.rows() == model.dim(), "frame must have dim(M) rows");
  require(u.frame.cols() >= 1 && u.frame.cols() <= model.dim(), "frame rank must be in [1, dim(M)]");
  require(u.frame.allFinite(), "frame has non-finite entries");
  const Vec sv = Eigen::JacobiSVD<Mat>(u.frame).singularValues();
  if (!(sv[sv.size() - 1] > kRankTolerance * sv[0])) fail(ErrorCode::degenerate_frame, "frame is rank deficient");
}

FrameTangent horizontal_field(const Manifold& model, const FramePoint& u, const Vec& w) {
  require(w.size() == u.frame.cols(), "driving vector length must equal the frame rank");
  FrameTangent t;
  t.d_base = u.frame * w;
  t.d_frame = -model.christoffel_contract(u.base, t.d_base, u.frame);
  return t;
}

Mat frame_gram(const Manifold& model, const FramePoint& u) {
  const Mat lowered = model.lower(u.base, u.frame);
  const Mat gram = u.frame.transpose() * lowered;
  return 0.5 * (gram + gram.transpose());
}

FramePoint orthonormalize(const Manifold& model, const FramePoint& u, Mat& r_factor) {
  validate_frame_point(model, u);
  const int r = u.rank();
  const Mat g = model.metric(u.base);
  FramePoint out{u.base, u.frame};
  r_factor = Mat::Zero(r, r);
  double scale = 0.0;
  for (int j = 0; j < r; ++j) scale = std::max(scale, std::sqrt(u.frame.col(j).dot(g * u.frame.col(j))));
  for (int j = 0; j < r; ++j) {
    Vec col = u.frame.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        const double proj = out.frame.col(i).dot(g * col);
        col -= proj * out.frame.col(i);
        r_factor(i, j) += proj;
      }
    }
    const double norm = std::sqrt(std::max(0.0, col.dot(g * col)));
    if (!(norm > kRankTolerance * scale))
      fail(ErrorCode::degenerate_frame, "frame column " + std::to_string(j) + " is linearly dependent");
    out.frame.col(j) = col / norm;
    r_factor(j, j) = norm;
  }
  return out;
}

FramePoint orthonormalize(const Manifold& model, const FramePoint& u) {
  Mat r_factor;
  return orthonormalize(model, u, r_factor);
}

}  // namespace sdr
