#include <doctest.h>

#include <cmath>
#include <random>

#include "sdr/development.hpp"
#include "sdr/errors.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::testing;

namespace {

DrivingPath straight(int steps, const Vec& total) {
  DrivingPath path{Mat(steps, total.size()), 1.0};
  for (int t = 0; t < steps; ++t) path.increments.row(t) = total.transpose() / steps;
  return path;
}

DrivingPath wavy(int steps, int width, double a, double b) {
  DrivingPath path{Mat::Zero(steps, width), 1.0};
  for (int t = 0; t < steps; ++t) {
    const double s0 = static_cast<double>(t) / steps, s1 = static_cast<double>(t + 1) / steps;
    path.increments(t, 0) = a * (std::sin(3 * s1) - std::sin(3 * s0));
    path.increments(t, 1) = b * (s1 * s1 - s0 * s0);
  }
  return path;
}

FramePoint sphere_orthonormal(double theta, double phi) {
  Mat frame(2, 2);
  frame << 1.0, 0.0, 0.0, 1.0 / std::sin(theta);
  return {vec2(theta, phi), frame};
}

FramePoint landmark_frame(const LandmarkManifold& lm, const Vec& q, int r) {
  return orthonormalize(lm, FramePoint{q, Mat::Identity(lm.dim(), r)});
}

Vec great_circle(const Sphere2& s, const FramePoint& u0, const Vec& w) {
  const Vec x0 = s.embed(u0.base);
  const Vec v = s.embed_differential(u0.base) * (u0.frame * w);
  const double len = v.norm();
  return std::cos(len) * x0 + std::sin(len) * v / len;
}

}  // namespace

TEST_CASE("zero driver leaves the frame point unchanged") {
  const LandmarkManifold lm(2, 0.5);
  Vec q(4);
  q << 0.0, 0.0, 0.7, 0.1;
  const FramePoint u0 = landmark_frame(lm, q, 2);
  const DevelopedPath dev = develop(lm, u0, DrivingPath{Mat::Zero(5, 2), 1.0});
  REQUIRE(dev.states.size() == 6);
  for (const auto& s : dev.states) {
    CHECK(max_abs(s.base - u0.base) == 0.0);
    CHECK(max_abs(s.frame - u0.frame) == 0.0);
  }
  CHECK(max_abs(develop_endpoint(lm, u0, DrivingPath{Mat::Zero(5, 2), 1.0}) - q) == 0.0);
}

TEST_CASE("flat development is exact for any substep count") {
  const FlatSpace flat(2);
  Mat frame(2, 2);
  frame << 0.5, 0.1, 0.0, 1.5;
  const FramePoint u0{vec2(1.0, 2.0), frame};
  const DrivingPath path = wavy(7, 2, 0.4, 0.9);
  const Vec expected = u0.base + frame * path.increments.colwise().sum().transpose();
  for (int sub : {1, 3, 8}) CHECK(max_abs(develop_endpoint(flat, u0, path, sub) - expected) < 1e-14);
  const ConvergenceEstimate ce = convergence_order(flat, u0, path);
  CHECK(ce.exact);
}

TEST_CASE("straight drivers on the sphere follow great circles") {
  const Sphere2 s;
  SUBCASE("equator, along the meridian") {
    const FramePoint u0 = sphere_orthonormal(M_PI / 2, 0.0);
    const Vec w = vec2(1.0, 0.0);
    CHECK((develop_endpoint(s, u0, straight(50, w), 4) - great_circle(s, u0, w)).norm() < 1e-4);
  }
  SUBCASE("equator, along the equator") {
    const FramePoint u0 = sphere_orthonormal(M_PI / 2, 0.0);
    Vec e(3);
    e << std::cos(1.0), std::sin(1.0), 0.0;
    CHECK((develop_endpoint(s, u0, straight(50, vec2(0.0, 1.0)), 4) - e).norm() < 1e-4);
  }
  SUBCASE("oblique direction from a generic point") {
    const FramePoint u0 = sphere_orthonormal(1.0, -0.4);
    const Vec w = vec2(std::cos(0.6), std::sin(0.6));
    CHECK((develop_endpoint(s, u0, straight(100, w), 2) - great_circle(s, u0, w)).norm() < 1e-4);
  }
}

TEST_CASE("Heun order is close to two on smooth drivers") {
  const Sphere2 s;
  const ConvergenceEstimate cs = convergence_order(s, sphere_orthonormal(1.3, 0.1), wavy(16, 2, 0.4, 0.5));
  CHECK(cs.order >= 1.7);
  CHECK(cs.order <= 2.3);
  CHECK_FALSE(cs.exact);

  const LandmarkManifold lm(2, 0.5);
  Vec q(4);
  q << -0.4, 0.0, 0.4, 0.1;
  const ConvergenceEstimate cl = convergence_order(lm, landmark_frame(lm, q, 2), wavy(16, 2, 0.4, 0.5));
  CHECK(cl.order >= 1.7);
  CHECK(cl.order <= 2.3);
}

TEST_CASE("development preserves the frame gram") {
  const LandmarkManifold lm(3, 0.5);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const FramePoint u0 = landmark_frame(lm, random_landmarks(rng, 3, 0.6), 3);
    DrivingPath path = wavy(50, 3, 0.5, 0.4);
    path.increments.col(2) = path.increments.col(0).reverse();
    const DevelopedPath dev = develop(lm, u0, path, 4);
    for (const auto& state : dev.states) CHECK(max_abs(frame_gram(lm, state) - Mat::Identity(3, 3)) < 1e-4);
  }
}

TEST_CASE("developing the reversed negated driver returns to the start") {
  const LandmarkManifold lm(2, 0.5);
  Vec q(4);
  q << -0.5, 0.0, 0.5, 0.2;
  const FramePoint u0 = landmark_frame(lm, q, 2);
  const DrivingPath path = wavy(100, 2, 0.5, 0.5);
  const FramePoint end = develop(lm, u0, path, 4).states.back();
  const DrivingPath back{-path.increments.colwise().reverse(), 1.0};
  const FramePoint home = develop(lm, end, back, 4).states.back();
  CHECK(max_abs(home.base - u0.base) < 1e-3);
  CHECK(max_abs(home.frame - u0.frame) < 1e-3);

  const Sphere2 s;
  const FramePoint v0 = sphere_orthonormal(1.1, 0.3);
  const FramePoint vend = develop(s, v0, path, 4).states.back();
  const FramePoint vhome = develop(s, vend, back, 4).states.back();
  CHECK(max_abs(vhome.base - v0.base) < 1e-3);
}

TEST_CASE("drivers with equal endpoints develop to different points on curved spaces") {
  DrivingPath bent{Mat::Zero(2, 2), 1.0};
  bent.increments(0, 0) = 1.0;
  bent.increments(1, 1) = 1.0;
  const DrivingPath line = straight(2, vec2(1.0, 1.0));
  REQUIRE(max_abs(bent.increments.colwise().sum() - line.increments.colwise().sum()) < 1e-15);

  const Sphere2 s;
  const FramePoint u0 = sphere_orthonormal(1.2, 0.0);
  CHECK((develop_endpoint(s, u0, bent) - develop_endpoint(s, u0, line)).norm() > 1e-3);

  const LandmarkManifold lm(2, 0.5);
  Vec q(4);
  q << -0.5, 0.0, 0.5, 0.0;
  const FramePoint w0 = landmark_frame(lm, q, 2);
  CHECK((develop_endpoint(lm, w0, bent) - develop_endpoint(lm, w0, line)).norm() > 1e-3);

  const FlatSpace flat(2);
  const FramePoint f0{vec2(0.0, 0.0), Mat::Identity(2, 2)};
  CHECK((develop_endpoint(flat, f0, bent) - develop_endpoint(flat, f0, line)).norm() < 1e-14);
}

TEST_CASE("develop_from and develop_step agree with develop") {
  const LandmarkManifold lm(3, 0.5);
  std::mt19937_64 rng(32);
  const FramePoint u0 = landmark_frame(lm, random_landmarks(rng, 3, 0.5), 2);
  const DrivingPath path = wavy(12, 2, 0.3, 0.3);
  const DevelopedPath dev = develop(lm, u0, path, 3);
  const FramePoint tail = develop_from(lm, dev.states[5], path.increments, 5, 3);
  CHECK(max_abs(tail.base - dev.states.back().base) == 0.0);
  FramePoint u = dev.states[4];
  develop_step(lm, u, path.increments.row(4).transpose(), 3, 4);
  CHECK(max_abs(u.base - dev.states[5].base) == 0.0);
  const std::vector<Vec> bases = dev.base_points();
  CHECK(max_abs(bases[7] - project(dev.states[7])) == 0.0);
}

TEST_CASE("development is bit-for-bit deterministic") {
  const LandmarkManifold lm(3, 0.5);
  std::mt19937_64 rng(33);
  const FramePoint u0 = landmark_frame(lm, random_landmarks(rng, 3, 0.5), 2);
  const DrivingPath path{random_matrix(rng, 20, 2, 0.1), 1.0};
  const Vec a = develop_endpoint(lm, u0, path), b = develop_endpoint(lm, u0, path);
  CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
}

TEST_CASE("failures along the path report the step") {
  const Sphere2 s;
  const FramePoint u0 = sphere_orthonormal(0.3, 0.0);
  const DrivingPath path = straight(10, vec2(-0.6, 0.0));
  try {
    develop(s, u0, path, 2);
    FAIL("expected an integration error");
  } catch (const IntegrationError& e) {
    CHECK(e.code() == ErrorCode::integration);
    CHECK(e.step() >= 4);
    CHECK(e.step() <= 5);
  }
  CHECK_THROWS_AS(develop(s, u0, DrivingPath{Mat::Zero(3, 1), 1.0}), Error);
  Mat bad = Mat::Zero(3, 2);
  bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(develop(s, u0, DrivingPath{bad, 1.0}), Error);
}
