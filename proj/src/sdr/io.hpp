#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "sdr/inference.hpp"

namespace sdr {

using json = nlohmann::ordered_json;

// Shortest round-trip decimal form, independent of the C locale.
std::string format_number(double v);

// Headerless numeric CSV. Quoted fields are accepted; every row must have
// the same number of fields.
Mat parse_csv(const std::string& text, const std::string& source = "<memory>");
Mat read_csv(const std::string& path);
std::string format_csv(const Mat& m);
void write_csv(const std::string& path, const Mat& m);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
json read_json_file(const std::string& path);
// Two-space indented JSON with a trailing newline.
void write_json_file(const std::string& path, const json& j);
void ensure_directory(const std::string& path);

json to_json(const Mat& m);
json to_json(const Vec& v);
Mat matrix_from_json(const json& j, const std::string& what);
Vec vector_from_json(const json& j, const std::string& what);

json to_json(const ManifoldSpec& spec);
ManifoldSpec manifold_spec_from_json(const json& j);

json to_json(const CovariateSpec& spec);
CovariateSpec covariate_spec_from_json(const json& j);

// {"y0", "U" (d rows), "W_tilde", "beta", "tau"} plus an optional "manifold".
json to_json(const ModelParameters& theta, const ManifoldSpec* manifold = nullptr);
ModelParameters parameters_from_json(const json& j);

struct FitSettings {
  ManifoldSpec manifold;
  FitConfig config;
  std::optional<ModelParameters> initial;
};

json to_json(const FitSettings& settings);
// Unknown keys are rejected.
FitSettings fit_settings_from_json(const json& j);

json to_json(const FitDiagnostics& diag);

struct IngestSummary {
  int n = 0;
  int m = 0;
  int k = 0;
  int num_landmarks = 0;  // k / 2 when k is even, otherwise 0
  Vec covariate_min;
  Vec covariate_max;
};

json to_json(const IngestSummary& s);

// Loads shapes (n × k), covariates (n × m) and the covariate spec, rejecting
// empty files, non-finite entries and inconsistent dimensions.
Dataset ingest_landmark_dataset(const std::string& shapes_path, const std::string& covariates_path,
                                const std::string& spec_path, IngestSummary* summary = nullptr);
IngestSummary summarize_dataset(const Dataset& data);

// Writes manifest.json: tool name, version, command, seed and the resolved
// configuration.
void write_manifest(const std::string& dir, const std::string& command, std::uint64_t seed,
                    const json& config);

inline constexpr const char* kVersion = "1.0.0";

}  // namespace sdr
