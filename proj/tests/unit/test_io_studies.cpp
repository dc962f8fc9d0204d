#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "sdr/errors.hpp"
#include "sdr/experiments.hpp"
#include "sdr/io.hpp"
#include "sdr/studies.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sdr_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("numbers round-trip through CSV") {
  std::mt19937_64 rng(71);
  const Mat m = random_matrix(rng, 7, 3, 100.0);
  const Mat back = parse_csv(format_csv(m));
  CHECK(max_abs(back - m) == 0.0);
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.25) == "0.25");
  CHECK(max_abs(parse_csv("1,\"2.5\"\r\n3,4\n") - (Mat(2, 2) << 1, 2.5, 3, 4).finished()) == 0.0);
}

TEST_CASE("malformed CSV is rejected") {
  CHECK(code_of([] { parse_csv(""); }) == ErrorCode::parse);
  CHECK(code_of([] { parse_csv("1,2\n3\n"); }) == ErrorCode::parse);
  CHECK(code_of([] { parse_csv("1,abc\n"); }) == ErrorCode::parse);
  CHECK(code_of([] { read_csv("/nonexistent/file.csv"); }) == ErrorCode::io);
}

TEST_CASE("ingest validates landmark datasets") {
  const fs::path dir = scratch_dir("ingest");
  write_text_file((dir / "spec.json").string(), "{\"kinds\": [\"fixed\"]}\n");
  write_text_file((dir / "x.csv").string(), "1\n2\n3\n");
  write_text_file((dir / "y.csv").string(), "0,0,1,1\n0,1,1,1\n1,0,1,1\n");
  IngestSummary summary;
  const Dataset d = ingest_landmark_dataset((dir / "y.csv").string(), (dir / "x.csv").string(),
                                            (dir / "spec.json").string(), &summary);
  CHECK(d.n() == 3);
  CHECK(summary.num_landmarks == 2);
  CHECK(summary.covariate_min[0] == 1.0);
  CHECK(summary.covariate_max[0] == 3.0);

  write_text_file((dir / "empty.csv").string(), "");
  CHECK(code_of([&] {
          ingest_landmark_dataset((dir / "empty.csv").string(), (dir / "x.csv").string(),
                                  (dir / "spec.json").string());
        }) == ErrorCode::parse);
  write_text_file((dir / "nan.csv").string(), "0,0,1,1\nnan,1,1,1\n1,0,1,1\n");
  CHECK(code_of([&] {
          ingest_landmark_dataset((dir / "nan.csv").string(), (dir / "x.csv").string(),
                                  (dir / "spec.json").string());
        }) == ErrorCode::parse);
  write_text_file((dir / "short.csv").string(), "1\n2\n");
  CHECK(code_of([&] {
          ingest_landmark_dataset((dir / "y.csv").string(), (dir / "short.csv").string(),
                                  (dir / "spec.json").string());
        }) == ErrorCode::parse);
  write_text_file((dir / "spec2.json").string(), "{\"kinds\": [\"fixed\", \"random\"]}\n");
  CHECK(code_of([&] {
          ingest_landmark_dataset((dir / "y.csv").string(), (dir / "x.csv").string(),
                                  (dir / "spec2.json").string());
        }) == ErrorCode::parse);
}

TEST_CASE("parameters and settings round-trip through JSON") {
  const StudySetup setup = circle8_setup();
  const ModelParameters back = parameters_from_json(to_json(setup.truth, &setup.manifold));
  CHECK(max_abs(back.U - setup.truth.U) == 0.0);
  CHECK(max_abs(back.W_tilde - setup.truth.W_tilde) == 0.0);
  CHECK(back.tau == setup.truth.tau);

  FitSettings s{setup.manifold, study_fit_config(setup), setup.truth};
  const FitSettings t = fit_settings_from_json(to_json(s));
  CHECK(to_json(t).dump() == to_json(s).dump());
  json bad = to_json(s);
  bad["unknown_key"] = 1;
  CHECK_THROWS_AS(fit_settings_from_json(bad), Error);
}

TEST_CASE("type-7 quantiles") {
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.05) == doctest::Approx(1.15));
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.95) == doctest::Approx(3.85));
  CHECK(quantile({4.0, 1.0, 3.0, 2.0, 5.0}, 0.5) == 3.0);
  CHECK(quantile({7.0}, 0.3) == 7.0);
}

TEST_CASE("circle study landmarks and covariates") {
  const auto pts = circle8_landmarks();
  REQUIRE(pts.size() == 8);
  CHECK(max_abs(pts[0] - vec2(1.0, 0.0)) < 1e-15);
  CHECK(max_abs(pts[2] - vec2(0.0, 1.0)) < 1e-15);
  const StudySetup setup = circle8_setup();
  const auto model = make_study_manifold(setup);
  CHECK(max_abs(frame_gram(*model, setup.truth.frame_point()) - Mat::Identity(2, 2)) < 1e-10);
  const Mat X = sample_covariates(setup, 1000, 1);
  const Mat centered = X.rowwise() - X.colwise().mean();
  for (int j = 0; j < 2; ++j) {
    const double var = centered.col(j).squaredNorm() / 999.0;
    CHECK(std::abs(var - 4.0) < 0.4);
  }
}

TEST_CASE("frame study truth is vertical") {
  const StudySetup setup = frame3_setup();
  const auto pts = frame3_landmarks();
  CHECK((pts[0] - pts[1]).norm() == doctest::Approx(1.0));
  CHECK((pts[0] - pts[2]).norm() == doctest::Approx(1.0));
  for (int l = 0; l < 3; ++l) {
    Mat vertical = Mat::Zero(6, 1);
    vertical(2 * l + 1, 0) = 1.0;
    CHECK(landmark_angle_deg(setup.truth.U, vertical, l) < 1e-6);
  }
  Mat a = Mat::Zero(6, 1), b = Mat::Zero(6, 1);
  a(0, 0) = 1.0;
  b(0, 0) = 1.0;
  b(1, 0) = 1.0;
  CHECK(landmark_angle_deg(a, b, 0) == doctest::Approx(45.0));
}

TEST_CASE("synthetic fixture covariates span the age range") {
  const StudySetup setup = cc20_setup();
  const Mat X = sample_covariates(setup, 200, 4);
  CHECK(X.minCoeff() >= 22.0);
  CHECK(X.maxCoeff() <= 78.0);
  CHECK(X.maxCoeff() - X.minCoeff() > 45.0);
  const Dataset d = simulate_study(setup, 20, 4);
  CHECK(d.n() == 20);
  CHECK(d.m() == 1);
  CHECK(d.k() == 40);
}

TEST_CASE("study simulation is deterministic") {
  const StudySetup setup = frame3_setup();
  const Dataset a = simulate_study(setup, 6, 9), b = simulate_study(setup, 6, 9);
  CHECK(format_csv(a.Y) == format_csv(b.Y));
  CHECK(format_csv(a.X) == format_csv(b.X));
  CHECK(format_csv(simulate_study(setup, 6, 10).Y) != format_csv(a.Y));
  CHECK_THROWS_AS(study_setup("unknown"), Error);
}

TEST_CASE("check report lists passing invariants") {
  const auto checks = run_checks(1);
  const json j = to_json(checks);
  CHECK(j["all_passed"].get<bool>());
  CHECK(j["checks"].size() == checks.size());
  for (const auto& c : checks) CHECK_MESSAGE(c.passed, c.name);
}

TEST_CASE("study configurations reject unknown keys") {
  json j = to_json(RecoveryStudyConfig{});
  CHECK(recovery_config_from_json(j).replicates == 50);
  j["replicate"] = 3;
  CHECK_THROWS_AS(recovery_config_from_json(j), Error);
  CHECK(frame_config_from_json(to_json(FrameStudyConfig{})).study == "frame3");
}
