#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdr/io.hpp"
#include "sdr/studies.hpp"

namespace sdr {

struct RecoveryStudyConfig {
  std::string study = "circle8";
  int replicates = 50;
  int n = 20;
  std::uint64_t seed = 1;
  std::vector<int> convergence_sizes{20, 60, 100};
  int threads = 1;
  int outer_max_iters = 100;
  double outer_tol = 1e-6;
  double max_failure_fraction = 0.2;
};

struct ReplicateRecord {
  int index = 0;
  int n = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ModelParameters theta_hat;
  double log_likelihood = 0.0;
  bool converged = false;
  int outer_iterations = 0;
};

struct EntryBand {
  std::string name;
  double truth = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  bool covered = false;
};

struct RecoveryReport {
  RecoveryStudyConfig config;
  ModelParameters truth;
  std::vector<ReplicateRecord> replicates;
  int failures = 0;
  std::vector<EntryBand> bands;          // one per W̃ entry, row-major
  std::vector<ReplicateRecord> convergence;  // one per convergence size
  int trend_entries = 0;  // entries with |err at largest n| <= |err at smallest n|
};

// Type-7 sample quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

// Each replicate r uses seed derive_seed(config.seed, r); convergence fit at
// size n uses derive_seed(config.seed, 1000000 + n). Throws study_aborted when
// more than max_failure_fraction of the replicates fail.
RecoveryReport run_recovery_study(const RecoveryStudyConfig& config);

struct FrameStudyConfig {
  std::string study = "frame3";
  int n = 20;
  int replicates = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  int outer_max_iters = 100;
  double outer_tol = 1e-6;
  double max_failure_fraction = 0.2;
};

struct FrameReplicate {
  ReplicateRecord fit;
  Mat U_init;
  Mat ols_slope;                       // ambient slope of Y on x, k × 1
  std::vector<double> angle_init_deg;  // per landmark
  std::vector<double> angle_hat_deg;   // per landmark
  double max_angle_deg = 0.0;
};

struct FrameReport {
  FrameStudyConfig config;
  ModelParameters truth;
  std::vector<FrameReplicate> replicates;
  int failures = 0;
};

// Angle in degrees between the two-vector of landmark `l` in column 0 of a
// and of b.
double landmark_angle_deg(const Mat& a, const Mat& b, int l);

FrameReport run_frame_study(const FrameStudyConfig& config);

json to_json(const RecoveryStudyConfig& c);
RecoveryStudyConfig recovery_config_from_json(const json& j);
json to_json(const FrameStudyConfig& c);
FrameStudyConfig frame_config_from_json(const json& j);
json to_json(const RecoveryReport& r);
json to_json(const FrameReport& r);

struct CheckEntry {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparison;  // "<" or ">" or "in"
  double upper = 0.0;      // for "in"
  bool passed = false;
};

// Geometry, development and flat-space invariants with measured values.
std::vector<CheckEntry> run_checks(std::uint64_t seed = 1);
json to_json(const std::vector<CheckEntry>& checks);

}  // namespace sdr
