#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sdr/geometry.hpp"

namespace sdr::testing {

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline double max_abs(const Mat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

// Landmark configuration in [-1, 1]^2 with pairwise distances >= min_dist.
inline Vec random_landmarks(std::mt19937_64& rng, int n, double min_dist) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec q(2 * n);
  for (;;) {
    for (int i = 0; i < 2 * n; ++i) q[i] = u(rng);
    double closest = 1e300;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) closest = std::min(closest, (q.segment<2>(2 * a) - q.segment<2>(2 * b)).norm());
    if (closest >= min_dist) return q;
  }
}

// Sphere chart point away from the poles.
inline Vec random_sphere_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> th(0.3, M_PI - 0.3), ph(-M_PI, M_PI);
  const double a = th(rng);
  return vec2(a, ph(rng));
}

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Central-difference metric derivative, dg[i] = d g / d p_i.
inline std::vector<Mat> fd_metric_derivative(const Manifold& model, const Vec& p, double h = 1e-5) {
  std::vector<Mat> dg;
  for (int i = 0; i < model.dim(); ++i) {
    Vec pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    dg.push_back((model.metric(pp) - model.metric(pm)) / (2.0 * h));
  }
  return dg;
}

// Γ^k_ij by an index loop over a central-difference metric derivative.
inline double fd_christoffel(const Mat& ginv, const std::vector<Mat>& dg, int k, int i, int j) {
  double acc = 0.0;
  for (int l = 0; l < ginv.rows(); ++l) acc += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
  return 0.5 * acc;
}

}  // namespace sdr::testing
