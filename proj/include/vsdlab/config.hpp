#pragma once

#include "vsdlab/distill.hpp"
#include "vsdlab/gaussian_mixture.hpp"
#include "vsdlab/metrics.hpp"
#include "vsdlab/renderer.hpp"
#include "vsdlab/sampler.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vsdlab {

// Parse or validation failure; `line` is 0 when not tied to an input line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, int line, const std::string& message);

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

enum class ExperimentKind { Distill, CfgSweep, ParticlesSweep, ScheduleAblation, EstimatorCompare };

struct TargetConfig {
  std::vector<GaussianComponent> conditional;
  // Explicit unconditional components; when empty the unconditional model is
  // the conditional broadened by the two scales below.
  std::vector<GaussianComponent> unconditional;
  double uncond_cov_scale = 4.0;
  double uncond_mean_scale = 0.5;
  double guidance = 0.0;
};

struct RendererConfig {
  RendererKind kind = RendererKind::Identity;
  std::int64_t param_dim = 2;
  std::int64_t image_dim = 2;
};

struct MetricsConfig {
  std::int64_t projections = 64;
  std::int64_t grid_points = 0;  // 0: 512 in 1D, 256 in 2D
  double grid_half_width = 8.0;
  std::vector<double> objective_times{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::int64_t objective_cameras = 16;
};

struct SweepConfig {
  std::vector<double> values;
  std::int64_t seeds = 1;
};

// SDS comparison runs attached to a distill experiment.
struct SdsCompareConfig {
  std::int64_t runs = 0;
  double guidance = 0.0;
  std::int64_t steps = 2000;
  double lr = 0.03;
  // All SDS runs start from the same initial point (drawn with the
  // experiment seed); run k only varies the (t, noise) draws.
  bool shared_init = true;
};

// Pass/fail thresholds evaluated in --check mode. Unset means not checked.
struct CheckConfig {
  std::optional<double> max_sliced_w2;
  std::optional<double> sds_mode_radius;
  std::optional<double> min_sds_mode_fraction;
  std::optional<double> max_sds_diversity_ratio;
  std::optional<double> max_adjacent_diversity_ratio;
  std::optional<double> max_annealed_objective_ratio;
  std::optional<double> max_estimator_w2_gap;
};

struct ExperimentConfig {
  std::string preset;
  ExperimentKind experiment = ExperimentKind::Distill;
  std::uint64_t seed = 0;
  std::string output = "out";
  bool images = true;
  TargetConfig target;
  RendererConfig renderer;
  DistillConfig distill;
  SamplerConfig sampler;
  MetricsConfig metrics;
  SweepConfig sweep;
  SdsCompareConfig sds;
  CheckConfig check;

  GuidedModel guided_model() const;
  GuidedModel guided_model(double guidance) const;
  Renderer make_renderer() const;
  GridSpec grid() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Line-oriented `key = value` text with [section] headers. Repeating
// [target.component] or [target.unconditional] starts a new mixture
// component. A top-level `preset = "name"` loads that preset first; every
// other key overrides it. `based_on = "name"` only records the preset name.
ExperimentConfig parse_config(std::string_view text);
// Canonical text form listing every key, tagged with `based_on`;
// parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

// Throws ConfigError naming the offending key.
void validate_config(const ExperimentConfig& config);

struct PresetInfo {
  std::string name;
  std::string description;
};
std::vector<PresetInfo> preset_list();
// Throws ConfigError for unknown names.
ExperimentConfig preset(std::string_view name);

std::string to_string(ExperimentKind kind);
std::string to_string(Method m);
std::string to_string(EstimatorKind k);
std::string to_string(RendererKind k);
std::string to_string(OptimizerKind k);

}  // namespace vsdlab
