#include "sdr/geometry.hpp"

#include <cmath>

#include "sdr/errors.hpp"

namespace sdr {

std::string to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::flat: return "flat";
    case ManifoldKind::sphere2: return "sphere2";
    case ManifoldKind::landmarks: return "landmarks";
  }
  return "unknown";
}

ManifoldKind manifold_kind_from_string(const std::string& s) {
  if (s == "flat") return ManifoldKind::flat;
  if (s == "sphere2") return ManifoldKind::sphere2;
  if (s == "landmarks") return ManifoldKind::landmarks;
  fail(ErrorCode::invalid_argument, "unknown manifold kind '" + s + "'");
}

void Manifold::validate(const Vec& p) const {
  if (p.size() != dim())
    fail(ErrorCode::invalid_argument,
         "point has " + std::to_string(p.size()) + " coordinates, expected " + std::to_string(dim()));
  require(p.allFinite(), "point has non-finite coordinates");
}

Tensor3 Manifold::christoffel(const Vec& p) const {
  const int d = dim();
  const Mat g_inv = cometric(p);
  const Tensor3 dg = metric_derivative(p);
  Tensor3 gamma(d);
  // Γ^k_ij = 1/2 g^kl (∂_i g_jl + ∂_j g_il - ∂_l g_ij)
  Vec lowered(d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      for (int l = 0; l < d; ++l) lowered[l] = dg(i, j, l) + dg(j, i, l) - dg(l, i, j);
      const Vec raised = 0.5 * g_inv * lowered;
      for (int k = 0; k < d; ++k) {
        gamma(k, i, j) = raised[k];
        gamma(k, j, i) = raised[k];
      }
    }
  }
  return gamma;
}

Mat Manifold::christoffel_contract(const Vec& p, const Vec& v, const Mat& u) const {
  const int d = dim();
  const Tensor3 gamma = christoffel(p);
  Mat out = Mat::Zero(d, u.cols());
  for (int c = 0; c < u.cols(); ++c)
    for (int k = 0; k < d; ++k) {
      double acc = 0.0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) acc += gamma(k, a, b) * v[a] * u(b, c);
      out(k, c) = acc;
    }
  return out;
}

Mat Manifold::lower(const Vec& p, const Mat& u) const { return metric(p) * u; }

// ---------------------------------------------------------------------------
// Flat space

FlatSpace::FlatSpace(int dim) : Manifold(dim, dim) {
  require(dim >= 1, "flat dimension must be positive");
}

ManifoldSpec FlatSpace::spec() const {
  ManifoldSpec s;
  s.kind = ManifoldKind::flat;
  s.flat_dim = dim();
  return s;
}

Mat FlatSpace::cometric(const Vec& p) const {
  validate(p);
  return Mat::Identity(dim(), dim());
}

Mat FlatSpace::metric(const Vec& p) const {
  validate(p);
  return Mat::Identity(dim(), dim());
}

Tensor3 FlatSpace::metric_derivative(const Vec& p) const {
  validate(p);
  return Tensor3(dim());
}

Mat FlatSpace::christoffel_contract(const Vec&, const Vec&, const Mat& u) const {
  return Mat::Zero(dim(), u.cols());
}

Mat FlatSpace::lower(const Vec&, const Mat& u) const { return u; }

Vec FlatSpace::embed(const Vec& p) const { return p; }

Mat FlatSpace::embed_differential(const Vec&) const { return Mat::Identity(dim(), dim()); }

Vec FlatSpace::chart(const Vec& ambient) const {
  require(ambient.size() == dim(), "ambient vector has wrong length");
  return ambient;
}

// ---------------------------------------------------------------------------
// Sphere

Sphere2::Sphere2() : Manifold(2, 3) {}

ManifoldSpec Sphere2::spec() const {
  ManifoldSpec s;
  s.kind = ManifoldKind::sphere2;
  return s;
}

void Sphere2::validate(const Vec& p) const {
  Manifold::validate(p);
  if (p[0] <= kSpherePoleMargin || p[0] >= M_PI - kSpherePoleMargin)
    fail(ErrorCode::singular_geometry, "sphere chart point too close to a pole (theta = " +
                                           std::to_string(p[0]) + ")");
}

Mat Sphere2::cometric(const Vec& p) const {
  validate(p);
  const double s = std::sin(p[0]);
  Mat g_inv = Mat::Zero(2, 2);
  g_inv(0, 0) = 1.0;
  g_inv(1, 1) = 1.0 / (s * s);
  return g_inv;
}

Mat Sphere2::metric(const Vec& p) const {
  validate(p);
  const double s = std::sin(p[0]);
  Mat g = Mat::Zero(2, 2);
  g(0, 0) = 1.0;
  g(1, 1) = s * s;
  return g;
}

Tensor3 Sphere2::metric_derivative(const Vec& p) const {
  validate(p);
  Tensor3 dg(2);
  dg(0, 1, 1) = 2.0 * std::sin(p[0]) * std::cos(p[0]);
  return dg;
}

Vec Sphere2::embed(const Vec& p) const {
  const double st = std::sin(p[0]), ct = std::cos(p[0]);
  Vec x(3);
  x << st * std::cos(p[1]), st * std::sin(p[1]), ct;
  return x;
}

Mat Sphere2::embed_differential(const Vec& p) const {
  const double st = std::sin(p[0]), ct = std::cos(p[0]);
  const double sp = std::sin(p[1]), cp = std::cos(p[1]);
  Mat D(3, 2);
  D << ct * cp, -st * sp,
       ct * sp, st * cp,
       -st, 0.0;
  return D;
}

Vec Sphere2::chart(const Vec& ambient) const {
  require(ambient.size() == 3, "sphere ambient vector must have 3 components");
  require(ambient.norm() > 0.0, "cannot chart the origin onto the sphere");
  Vec p(2);
  p[0] = std::atan2(std::hypot(ambient[0], ambient[1]), ambient[2]);
  p[1] = std::atan2(ambient[1], ambient[0]);
  return p;
}

// ---------------------------------------------------------------------------
// Landmarks

LandmarkManifold::LandmarkManifold(int num_landmarks, double kernel_sigma)
    : Manifold(2 * num_landmarks, 2 * num_landmarks),
      num_landmarks_(num_landmarks),
      sigma_(kernel_sigma) {
  require(num_landmarks >= 1, "num_landmarks must be positive");
  require(kernel_sigma > 0.0 && std::isfinite(kernel_sigma), "kernel_sigma must be positive");
}

ManifoldSpec LandmarkManifold::spec() const {
  ManifoldSpec s;
  s.kind = ManifoldKind::landmarks;
  s.num_landmarks = num_landmarks_;
  s.kernel_sigma = sigma_;
  return s;
}

Mat LandmarkManifold::scalar_kernel(const Vec& p) const {
  const int n = num_landmarks_;
  const double inv2s2 = 1.0 / (2.0 * sigma_ * sigma_);
  Mat k(n, n);
  for (int a = 0; a < n; ++a) {
    k(a, a) = 1.0;
    for (int b = a + 1; b < n; ++b) {
      const double dx = p[2 * a] - p[2 * b], dy = p[2 * a + 1] - p[2 * b + 1];
      k(a, b) = k(b, a) = std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
  }
  return k;
}

Mat LandmarkManifold::cometric(const Vec& p) const {
  validate(p);
  const int n = num_landmarks_;
  const Mat k = scalar_kernel(p);
  Mat K = Mat::Zero(2 * n, 2 * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      K(2 * a, 2 * b) = k(a, b);
      K(2 * a + 1, 2 * b + 1) = k(a, b);
    }
  return K;
}

Eigen::LLT<Mat> LandmarkManifold::factor(const Mat& k) const {
  Eigen::LLT<Mat> llt(k);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::singular_geometry, "landmark kernel matrix is not positive definite");
  const auto diag = llt.matrixLLT().diagonal();
  const double ratio = diag.maxCoeff() / diag.minCoeff();
  if (!(ratio * ratio <= kMaxCondition))
    fail(ErrorCode::singular_geometry, "landmark kernel matrix is numerically singular");
  return llt;
}

namespace {

// K^-1 u for K = k ⊗ I_2, each column of u reshaped to n × 2.
Mat block_solve(const Eigen::LLT<Mat>& llt, const Mat& u) {
  const Eigen::Index n = llt.rows();
  Mat out(u.rows(), u.cols());
  Mat work(n, 2);
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    work = Eigen::Map<const Mat>(u.col(c).data(), 2, n).transpose();
    llt.solveInPlace(work);
    Eigen::Map<Mat>(out.col(c).data(), 2, n) = work.transpose();
  }
  return out;
}

}  // namespace

Mat LandmarkManifold::metric(const Vec& p) const {
  const Mat K = cometric(p);
  Eigen::SelfAdjointEigenSolver<Mat> eig(K);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition)
    fail(ErrorCode::singular_geometry, "landmark kernel matrix condition number exceeds cap");
  const Mat& V = eig.eigenvectors();
  Mat g = V * eig.eigenvalues().cwiseInverse().asDiagonal() * V.transpose();
  return 0.5 * (g + g.transpose());
}

Mat LandmarkManifold::lower(const Vec& p, const Mat& u) const {
  validate(p);
  return block_solve(factor(scalar_kernel(p)), u);
}

Tensor3 LandmarkManifold::metric_derivative(const Vec& p) const {
  const int n = num_landmarks_, d = dim();
  const Mat g = metric(p);
  const Mat k = scalar_kernel(p);
  const double inv_s2 = 1.0 / (sigma_ * sigma_);
  Tensor3 dg(d);
  Mat dK(d, d);
  // ∂_i g = -g (∂_i K) g; ∂K/∂x_s^α only touches block row and column s.
  for (int s = 0; s < n; ++s) {
    for (int alpha = 0; alpha < 2; ++alpha) {
      dK.setZero();
      for (int q = 0; q < n; ++q) {
        if (q == s) continue;
        const double dk = -k(s, q) * (p[2 * s + alpha] - p[2 * q + alpha]) * inv_s2;
        for (int c = 0; c < 2; ++c) {
          dK(2 * s + c, 2 * q + c) = dk;
          dK(2 * q + c, 2 * s + c) = dk;
        }
      }
      const Mat dgi = -g * dK * g;
      const int i = 2 * s + alpha;
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < d; ++l) dg(i, j, l) = 0.5 * (dgi(j, l) + dgi(l, j));
    }
  }
  return dg;
}

Mat LandmarkManifold::christoffel_contract(const Vec& p, const Vec& v, const Mat& u) const {
  // With a = K^-1 v and b = K^-1 u_j:
  //   Γ(v, u_j) = -1/2 (∂_v K) b - 1/2 (∂_{u_j} K) a + 1/2 K c,
  //   c_l = a^T (∂_l K) b.
  const int n = num_landmarks_, r = static_cast<int>(u.cols());
  validate(p);
  const Mat k = scalar_kernel(p);
  const Eigen::LLT<Mat> llt = factor(k);
  const Vec a = block_solve(llt, v);
  const Mat B = block_solve(llt, u);
  const double inv_s2 = 1.0 / (sigma_ * sigma_);

  Mat out(2 * n, r);
  Vec c(2 * n);
  for (int j = 0; j < r; ++j) {
    const auto b = B.col(j);
    const auto w = u.col(j);
    c.setZero();
    Vec t1 = Vec::Zero(2 * n);
    for (int s = 0; s < n; ++s) {
      const double xs = p[2 * s], ys = p[2 * s + 1];
      for (int q = 0; q < n; ++q) {
        if (q == s) continue;
        const double kk = k(s, q) * inv_s2;
        const double dx = xs - p[2 * q], dy = ys - p[2 * q + 1];
        // derivatives of k_sq along v and along u_j
        const double dv = -kk * (dx * (v[2 * s] - v[2 * q]) + dy * (v[2 * s + 1] - v[2 * q + 1]));
        const double du = -kk * (dx * (w[2 * s] - w[2 * q]) + dy * (w[2 * s + 1] - w[2 * q + 1]));
        t1[2 * s] += dv * b[2 * q] + du * a[2 * q];
        t1[2 * s + 1] += dv * b[2 * q + 1] + du * a[2 * q + 1];
        const double ab = a[2 * s] * b[2 * q] + a[2 * s + 1] * b[2 * q + 1] +
                          a[2 * q] * b[2 * s] + a[2 * q + 1] * b[2 * s + 1];
        c[2 * s] -= kk * dx * ab;
        c[2 * s + 1] -= kk * dy * ab;
      }
    }
    for (int s = 0; s < n; ++s) {
      double kc0 = 0.0, kc1 = 0.0;
      for (int q = 0; q < n; ++q) {
        kc0 += k(s, q) * c[2 * q];
        kc1 += k(s, q) * c[2 * q + 1];
      }
      out(2 * s, j) = 0.5 * (kc0 - t1[2 * s]);
      out(2 * s + 1, j) = 0.5 * (kc1 - t1[2 * s + 1]);
    }
  }
  return out;
}

Vec LandmarkManifold::embed(const Vec& p) const { return p; }

Mat LandmarkManifold::embed_differential(const Vec&) const { return Mat::Identity(dim(), dim()); }

Vec LandmarkManifold::chart(const Vec& ambient) const {
  require(ambient.size() == dim(), "ambient vector has wrong length");
  return ambient;
}

std::unique_ptr<Manifold> make_manifold(const ManifoldSpec& spec) {
  switch (spec.kind) {
    case ManifoldKind::flat: return std::make_unique<FlatSpace>(spec.flat_dim);
    case ManifoldKind::sphere2: return std::make_unique<Sphere2>();
    case ManifoldKind::landmarks:
      return std::make_unique<LandmarkManifold>(spec.num_landmarks, spec.kernel_sigma);
  }
  fail(ErrorCode::invalid_argument, "unknown manifold kind");
}

}  // namespace sdr
