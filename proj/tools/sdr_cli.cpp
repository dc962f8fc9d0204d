#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "sdr/sdr.h"

namespace {

int report(sdr_status status) {
  if (status == SDR_OK) return 0;
  std::fprintf(stderr, "sdr: %s: %s\n", sdr_status_name(status), sdr_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic development regression on landmark manifolds"};
  app.set_version_flag("--version", std::string(sdr_version()));
  app.require_subcommand(1);

  std::string study, out;
  int n = 20;
  std::uint64_t seed = 1;
  auto* simulate = app.add_subcommand("simulate", "Simulate a study dataset with its ground truth");
  simulate->add_option("--study", study, "circle8, frame3, frame3_exact or cc20")->required();
  simulate->add_option("--n", n, "Number of observations")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--out", out, "Output directory")->required();

  std::string shapes, covariates, spec, config;
  auto* fit = app.add_subcommand("fit", "Fit the model to landmark data");
  fit->add_option("--shapes", shapes, "Responses CSV, n x k")->required()->check(CLI::ExistingFile);
  fit->add_option("--covariates", covariates, "Covariates CSV, n x m")->required()->check(CLI::ExistingFile);
  fit->add_option("--spec", spec, "Covariate spec JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--config", config, "Fit configuration JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out, "Output directory")->required();

  std::string theta, path;
  auto* develop = app.add_subcommand("develop", "Develop a driving path from theta's frame");
  develop->add_option("--theta", theta, "Parameters JSON including 'manifold'")->required()->check(CLI::ExistingFile);
  develop->add_option("--path", path, "Driving path JSON")->required()->check(CLI::ExistingFile);
  develop->add_option("--out", out, "Output CSV of ambient points")->required();

  auto* check = app.add_subcommand("check", "Run the geometry and development invariant checks");
  check->add_option("--out", out, "Output JSON report")->required();

  std::string kind;
  int replicates = 0;
  auto* study_cmd = app.add_subcommand("study", "Run a simulation study");
  study_cmd->add_option("--kind", kind, "recovery or frame")->required()->check(CLI::IsMember({"recovery", "frame"}));
  study_cmd->add_option("--config", config, "Study configuration JSON")->required()->check(CLI::ExistingFile);
  study_cmd->add_option("--out", out, "Output directory")->required();
  study_cmd->add_option("--replicates", replicates, "Override the replicate count")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (*simulate) return report(sdr_simulate_study(study.c_str(), n, seed, out.c_str()));
  if (*fit)
    return report(sdr_fit_files(shapes.c_str(), covariates.c_str(), spec.c_str(), config.c_str(), out.c_str()));
  if (*develop) return report(sdr_develop_files(theta.c_str(), path.c_str(), out.c_str()));
  if (*check) {
    int all_passed = 0;
    const int rc = report(sdr_check(out.c_str(), &all_passed));
    if (rc != 0) return rc;
    std::printf("%s\n", all_passed ? "all checks passed" : "some checks failed");
    return all_passed ? 0 : 1;
  }
  if (*study_cmd) return report(sdr_run_study(kind.c_str(), config.c_str(), out.c_str(), replicates));
  return 0;
}
