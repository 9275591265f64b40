#pragma once

#include "vsdlab/config.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vsdlab {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit statuses shared by run_experiment and the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCheck = 4,
};

struct FileDigest {
  std::string path;  // relative to the output directory, '/' separated
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct RunManifest {
  std::string config_text;
  std::string tool_version = kToolVersion;
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;
  std::vector<FileDigest> files;
  std::string status = "ok";  // ok | numeric_error | error
  std::string error;
  int exit_code = kExitOk;
  std::vector<CheckResult> checks;
  std::map<std::string, double> metrics;

  bool checks_passed() const;
};

// Runs the configured experiment into `out_dir` (created if needed) and
// writes manifest.json last. Numeric and other module errors are caught and
// recorded in the returned manifest with a nonzero exit code.
RunManifest run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Reference samples for the configured target in image space.
std::vector<Vector> reference_samples(const ExperimentConfig& config, double guidance);

// Metrics of an ensemble against the configured target, keyed by name:
// sliced_w2, diversity, reference_diversity, objective (image_dim <= 2),
// mode_fraction_<k>.
std::map<std::string, double> ensemble_metrics(const ExperimentConfig& config,
                                               const ParticleEnsemble& ensemble,
                                               const std::vector<Vector>& reference);

// Rendered points compared against image-space reference samples: the
// particles themselves for the identity renderer, otherwise each particle
// rendered at the objective cameras.
std::vector<Vector> rendered_points(const ExperimentConfig& config, const ParticleEnsemble& ensemble);

std::string sha256_hex(const std::filesystem::path& file);
// Flat JSON object with sorted keys; non-finite values become null.
std::string metrics_json(const std::map<std::string, double>& metrics);
std::string manifest_json(const RunManifest& manifest);

void write_points_csv(std::ostream& out, const std::vector<Vector>& points);
// Reads a CSV with a header row and one point per line (coord columns only,
// or particle,coord_* as written by write_points_csv).
std::vector<Vector> read_points_csv(std::istream& in);

}  // namespace vsdlab
