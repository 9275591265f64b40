#include "vsdlab/config.hpp"

#include "vsdlab/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace vsdlab {

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? std::string() : "'" + key + "': ") + message),
      key_(std::move(key)),
      line_(line) {}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Distill: return "distill";
    case ExperimentKind::CfgSweep: return "cfg-sweep";
    case ExperimentKind::ParticlesSweep: return "particles-sweep";
    case ExperimentKind::ScheduleAblation: return "schedule-ablation";
    case ExperimentKind::EstimatorCompare: return "estimator-compare";
  }
  return "?";
}

std::string to_string(Method m) { return m == Method::Sds ? "sds" : "vsd"; }

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Dirac: return "dirac";
    case EstimatorKind::Empirical: return "empirical";
    case EstimatorKind::Learned: return "learned";
  }
  return "?";
}

std::string to_string(RendererKind k) { return k == RendererKind::Identity ? "identity" : "linear"; }

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

GuidedModel ExperimentConfig::guided_model() const { return guided_model(target.guidance); }

GuidedModel ExperimentConfig::guided_model(double guidance) const {
  GaussianMixture cond(target.conditional);
  GaussianMixture uncond = target.unconditional.empty()
                               ? broadened(cond, target.uncond_cov_scale, target.uncond_mean_scale)
                               : GaussianMixture(target.unconditional);
  return GuidedModel(std::move(cond), std::move(uncond), guidance);
}

Renderer ExperimentConfig::make_renderer() const {
  if (renderer.kind == RendererKind::Identity) return Renderer::identity(renderer.param_dim);
  return Renderer::linear_projection(renderer.param_dim, renderer.image_dim);
}

GridSpec ExperimentConfig::grid() const {
  return GridSpec::square(renderer.image_dim, metrics.grid_half_width,
                          metrics.grid_points > 0 ? metrics.grid_points : -1);
}

namespace {

// ---------------------------------------------------------------- values

struct Value {
  enum class Kind { String, Number, Bool, List } kind = Kind::Number;
  std::string text;  // raw token for numbers, contents for strings
  double number = 0.0;
  bool boolean = false;
  std::vector<Value> items;
};

class ValueParser {
 public:
  ValueParser(std::string_view s, const std::string& key, int line) : s_(s), key_(key), line_(line) {}

  Value parse() {
    Value v = value();
    skip_ws();
    if (pos_ != s_.size()) error("unexpected trailing characters");
    return v;
  }

 private:
  [[noreturn]] void error(const std::string& what) const { throw ConfigError(key_, line_, what); }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  Value value() {
    skip_ws();
    if (pos_ >= s_.size()) error("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return list();
    return scalar();
  }

  Value string() {
    Value v;
    v.kind = Value::Kind::String;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
      v.text.push_back(s_[pos_++]);
    }
    if (pos_ >= s_.size()) error("unterminated string");
    ++pos_;
    return v;
  }

  Value list() {
    Value v;
    v.kind = Value::Kind::List;
    ++pos_;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      v.items.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) error("unterminated list");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      error("expected ',' or ']' in list");
    }
  }

  Value scalar() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' &&
           s_[pos_] != '\t') {
      ++pos_;
    }
    const std::string_view tok = s_.substr(start, pos_ - start);
    Value v;
    if (tok == "true" || tok == "false") {
      v.kind = Value::Kind::Bool;
      v.boolean = tok == "true";
      v.text = std::string(tok);
      return v;
    }
    v.kind = Value::Kind::Number;
    v.text = std::string(tok);
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v.number);
    if (res.ec != std::errc() || res.ptr != last) error("cannot parse '" + v.text + "' as a value");
    return v;
  }

  std::string_view s_;
  const std::string& key_;
  int line_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------- typed access

struct Ctx {
  const std::string& key;
  int line;

  [[noreturn]] void error(const std::string& what) const { throw ConfigError(key, line, what); }
};

double as_number(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::Number) ctx.error("type mismatch: expected a number");
  return v.number;
}

std::int64_t as_int(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::Number) ctx.error("type mismatch: expected an integer");
  std::int64_t out = 0;
  const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (res.ec != std::errc() || res.ptr != v.text.data() + v.text.size()) {
    ctx.error("type mismatch: expected an integer, got '" + v.text + "'");
  }
  return out;
}

std::uint64_t as_u64(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::Number) ctx.error("type mismatch: expected an unsigned integer");
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (res.ec != std::errc() || res.ptr != v.text.data() + v.text.size()) {
    ctx.error("type mismatch: expected an unsigned integer, got '" + v.text + "'");
  }
  return out;
}

bool as_bool(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::Bool) ctx.error("type mismatch: expected true or false");
  return v.boolean;
}

std::string as_string(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::String) ctx.error("type mismatch: expected a quoted string");
  return v.text;
}

std::vector<double> as_numbers(const Value& v, const Ctx& ctx) {
  if (v.kind != Value::Kind::List) ctx.error("type mismatch: expected a list of numbers");
  std::vector<double> out;
  for (const auto& item : v.items) out.push_back(as_number(item, ctx));
  return out;
}

Vector as_vector(const Value& v, const Ctx& ctx) {
  const auto xs = as_numbers(v, ctx);
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

Interval as_interval(const Value& v, const Ctx& ctx) {
  const auto xs = as_numbers(v, ctx);
  if (xs.size() != 2) ctx.error("type mismatch: expected [lo, hi]");
  return {xs[0], xs[1]};
}

// Full matrix [[...], ...] or scalar shorthand for scalar * I (dimension
// fixed later from the mean).
struct CovSpec {
  std::optional<Matrix> full;
  double scalar = 1.0;
};

CovSpec as_cov(const Value& v, const Ctx& ctx) {
  CovSpec c;
  if (v.kind == Value::Kind::Number) {
    c.scalar = v.number;
    return c;
  }
  if (v.kind != Value::Kind::List || v.items.empty()) {
    ctx.error("type mismatch: expected a scalar or a square matrix [[...], ...]");
  }
  const auto rows = static_cast<Eigen::Index>(v.items.size());
  Matrix m(rows, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = as_numbers(v.items[static_cast<std::size_t>(r)], ctx);
    if (static_cast<Eigen::Index>(row.size()) != rows) ctx.error("covariance matrix must be square");
    for (Eigen::Index k = 0; k < rows; ++k) m(r, k) = row[static_cast<std::size_t>(k)];
  }
  c.full = std::move(m);
  return c;
}

template <typename E>
E as_choice(const Value& v, const Ctx& ctx, const std::vector<std::pair<std::string, E>>& options) {
  if (v.kind != Value::Kind::String) ctx.error("type mismatch: expected a quoted string");
  for (const auto& [name, e] : options) {
    if (v.text == name) return e;
  }
  std::string allowed;
  for (const auto& [name, e] : options) allowed += (allowed.empty() ? "" : ", ") + name;
  ctx.error("invalid value \"" + v.text + "\"; allowed values: " + allowed);
}

// ---------------------------------------------------------------- presets

std::vector<GaussianComponent> bimodal_components() {
  const Matrix cov = 0.25 * Matrix::Identity(2, 2);
  Vector right(2), left(2);
  right << 2.0, 0.0;
  left << -2.0, 0.0;
  return {{0.5, right, cov}, {0.5, left, cov}};
}

ExperimentConfig base_preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.seed = 20230524;
  c.output = "out/" + name;
  c.target.conditional = bimodal_components();
  c.renderer = {RendererKind::Identity, 2, 2};
  c.distill.method = Method::Vsd;
  c.distill.estimator = EstimatorKind::Empirical;
  c.distill.n_particles = 64;
  c.distill.particle_batch = 64;
  c.distill.steps = 5000;
  c.distill.particle_optimizer = {OptimizerKind::Sgd, 0.2};
  c.distill.snapshot_stride = 250;
  c.sampler = {200, 10000, 0};
  return c;
}

ExperimentConfig make_preset(std::string_view name) {
  const std::string n(name);
  if (n == "fig4-2d") {
    ExperimentConfig c = base_preset(n);
    c.sds = {20, 1.25, 6000, 0.005, true};
    c.check.max_sliced_w2 = 0.2;
    c.check.sds_mode_radius = 0.15;
    c.check.min_sds_mode_fraction = 0.8;
    c.check.max_sds_diversity_ratio = 0.5;
    return c;
  }
  if (n == "scale-2048") {
    ExperimentConfig c = base_preset(n);
    c.distill.n_particles = 2048;
    c.distill.particle_batch = 2048;
    c.distill.steps = 2000;
    c.distill.snapshot_stride = 500;
    c.check.max_sliced_w2 = 0.15;
    return c;
  }
  if (n == "cfg-sweep") {
    ExperimentConfig c = base_preset(n);
    c.experiment = ExperimentKind::CfgSweep;
    // Unconditional components share the conditional means, so guidance
    // sharpens each mode in place.
    c.target.uncond_mean_scale = 1.0;
    c.distill.n_particles = 32;
    c.distill.particle_batch = 32;
    c.distill.steps = 6000;
    c.distill.particle_optimizer.lr = 0.01;
    c.distill.mc_batch = 4;
    c.distill.snapshot_stride = 500;
    c.sweep = {{0.0, 2.0, 7.5, 30.0}, 3};
    c.sampler.n_samples = 4000;
    c.check.max_adjacent_diversity_ratio = 1.1;
    return c;
  }
  if (n == "particles-sweep") {
    ExperimentConfig c = base_preset(n);
    c.experiment = ExperimentKind::ParticlesSweep;
    c.sweep = {{1, 2, 4, 8}, 1};
    return c;
  }
  if (n == "schedule-ablation") {
    ExperimentConfig c = base_preset(n);
    c.experiment = ExperimentKind::ScheduleAblation;
    c.distill.time_schedule = TimeSchedule::annealed(c.distill.steps);
    c.sweep.seeds = 3;
    c.check.max_annealed_objective_ratio = 1.1;
    return c;
  }
  if (n == "learned-2d") {
    ExperimentConfig c = base_preset(n);
    c.experiment = ExperimentKind::EstimatorCompare;
    c.distill.learned = {64, 64, {OptimizerKind::Adam, 1e-3}};
    c.check.max_estimator_w2_gap = 0.1;
    return c;
  }
  if (n == "multiview") {
    ExperimentConfig c = base_preset(n);
    c.target.conditional = {{1.0, Vector::Zero(1), Matrix::Identity(1, 1)}};
    c.renderer = {RendererKind::LinearProjection, 2, 1};
    c.distill.steps = 2000;
    c.sampler.n_samples = 4000;
    return c;
  }
  throw ConfigError("preset", 0, "unknown preset \"" + n + "\"");
}

// ---------------------------------------------------------------- key table

enum class Section { Root, Target, TargetComponent, TargetUnconditional, Renderer, Distill, Estimator, Sampler, Metrics, Sweep, Sds, Check };

struct PendingComponent {
  double weight = 1.0;
  std::optional<Vector> mean;
  std::optional<CovSpec> cov;
  int line = 0;
};

struct ParseState {
  ExperimentConfig cfg;
  std::vector<PendingComponent> cond;
  std::vector<PendingComponent> uncond;
  bool cond_seen = false;
  bool uncond_seen = false;
  std::map<std::string, int> lines;
};

using Handler = std::function<void(ParseState&, const Value&, const Ctx&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = [] {
    std::map<std::string, Handler> h;
    // root
    h["experiment"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.experiment = as_choice<ExperimentKind>(
          v, c, {{"distill", ExperimentKind::Distill}, {"cfg-sweep", ExperimentKind::CfgSweep},
                 {"particles-sweep", ExperimentKind::ParticlesSweep},
                 {"schedule-ablation", ExperimentKind::ScheduleAblation},
                 {"estimator-compare", ExperimentKind::EstimatorCompare}});
    };
    // Records the preset a canonical config was expanded from without loading it.
    h["based_on"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.preset = as_string(v, c); };
    h["seed"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.seed = as_u64(v, c); };
    h["output"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.output = as_string(v, c); };
    h["images"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.images = as_bool(v, c); };
    // target
    h["target.guidance"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.target.guidance = as_number(v, c); };
    h["target.uncond_cov_scale"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.target.uncond_cov_scale = as_number(v, c); };
    h["target.uncond_mean_scale"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.target.uncond_mean_scale = as_number(v, c); };
    for (const char* sec : {"target.component", "target.unconditional"}) {
      const bool is_cond = std::string(sec) == "target.component";
      auto current = [is_cond](ParseState& s) -> PendingComponent& {
        return is_cond ? s.cond.back() : s.uncond.back();
      };
      h[std::string(sec) + ".weight"] = [current](ParseState& s, const Value& v, const Ctx& c) { current(s).weight = as_number(v, c); };
      h[std::string(sec) + ".mean"] = [current](ParseState& s, const Value& v, const Ctx& c) { current(s).mean = as_vector(v, c); };
      h[std::string(sec) + ".cov"] = [current](ParseState& s, const Value& v, const Ctx& c) { current(s).cov = as_cov(v, c); };
    }
    // renderer
    h["renderer.kind"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.renderer.kind = as_choice<RendererKind>(v, c, {{"identity", RendererKind::Identity}, {"linear", RendererKind::LinearProjection}});
    };
    h["renderer.param_dim"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.renderer.param_dim = as_int(v, c); };
    h["renderer.image_dim"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.renderer.image_dim = as_int(v, c); };
    // distill
    h["distill.method"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.distill.method = as_choice<Method>(v, c, {{"sds", Method::Sds}, {"vsd", Method::Vsd}});
    };
    h["distill.estimator"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.distill.estimator = as_choice<EstimatorKind>(
          v, c, {{"dirac", EstimatorKind::Dirac}, {"empirical", EstimatorKind::Empirical}, {"learned", EstimatorKind::Learned}});
    };
    h["distill.particles"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.n_particles = as_int(v, c); };
    h["distill.particle_batch"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.particle_batch = as_int(v, c); };
    h["distill.steps"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.steps = as_int(v, c); };
    h["distill.particle_lr"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.particle_optimizer.lr = as_number(v, c); };
    h["distill.particle_optimizer"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.distill.particle_optimizer.kind = as_choice<OptimizerKind>(v, c, {{"sgd", OptimizerKind::Sgd}, {"adam", OptimizerKind::Adam}});
    };
    h["distill.particle_momentum"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.particle_optimizer.momentum = as_number(v, c); };
    h["distill.mc_batch"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.mc_batch = as_int(v, c); };
    h["distill.init_mean"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.init_mean = as_vector(v, c); };
    h["distill.init_std"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.init_std = as_number(v, c); };
    h["distill.init_seed"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.init_seed = as_u64(v, c); };
    h["distill.snapshot_stride"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.snapshot_stride = as_int(v, c); };
    h["distill.t_phase1"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.time_schedule.phase1 = as_interval(v, c); };
    h["distill.t_phase2"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.time_schedule.phase2 = as_interval(v, c); };
    h["distill.t_switch_step"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.time_schedule.switch_step = as_int(v, c); };
    // estimator
    h["estimator.hidden"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.learned.hidden = as_int(v, c); };
    h["estimator.batch"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.learned.batch = as_int(v, c); };
    h["estimator.lr"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.learned.optimizer.lr = as_number(v, c); };
    h["estimator.optimizer"] = [](ParseState& s, const Value& v, const Ctx& c) {
      s.cfg.distill.learned.optimizer.kind = as_choice<OptimizerKind>(v, c, {{"sgd", OptimizerKind::Sgd}, {"adam", OptimizerKind::Adam}});
    };
    h["estimator.momentum"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.distill.learned.optimizer.momentum = as_number(v, c); };
    // sampler
    h["sampler.steps"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sampler.n_steps = as_int(v, c); };
    h["sampler.samples"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sampler.n_samples = as_int(v, c); };
    // metrics
    h["metrics.projections"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.metrics.projections = as_int(v, c); };
    h["metrics.grid_points"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.metrics.grid_points = as_int(v, c); };
    h["metrics.grid_half_width"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.metrics.grid_half_width = as_number(v, c); };
    h["metrics.objective_times"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.metrics.objective_times = as_numbers(v, c); };
    h["metrics.objective_cameras"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.metrics.objective_cameras = as_int(v, c); };
    // sweep
    h["sweep.values"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sweep.values = as_numbers(v, c); };
    h["sweep.seeds"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sweep.seeds = as_int(v, c); };
    // sds comparison
    h["sds.runs"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sds.runs = as_int(v, c); };
    h["sds.guidance"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sds.guidance = as_number(v, c); };
    h["sds.steps"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sds.steps = as_int(v, c); };
    h["sds.lr"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sds.lr = as_number(v, c); };
    h["sds.shared_init"] = [](ParseState& s, const Value& v, const Ctx& c) { s.cfg.sds.shared_init = as_bool(v, c); };
    // checks
    auto opt = [](std::optional<double> CheckConfig::*field) {
      return [field](ParseState& s, const Value& v, const Ctx& c) { s.cfg.check.*field = as_number(v, c); };
    };
    h["check.max_sliced_w2"] = opt(&CheckConfig::max_sliced_w2);
    h["check.sds_mode_radius"] = opt(&CheckConfig::sds_mode_radius);
    h["check.min_sds_mode_fraction"] = opt(&CheckConfig::min_sds_mode_fraction);
    h["check.max_sds_diversity_ratio"] = opt(&CheckConfig::max_sds_diversity_ratio);
    h["check.max_adjacent_diversity_ratio"] = opt(&CheckConfig::max_adjacent_diversity_ratio);
    h["check.max_annealed_objective_ratio"] = opt(&CheckConfig::max_annealed_objective_ratio);
    h["check.max_estimator_w2_gap"] = opt(&CheckConfig::max_estimator_w2_gap);
    return h;
  }();
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing # comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

std::vector<GaussianComponent> finish_components(const std::vector<PendingComponent>& pending,
                                                 const std::string& section) {
  std::vector<GaussianComponent> out;
  for (const auto& p : pending) {
    if (!p.mean) throw ConfigError(section + ".mean", p.line, "component is missing 'mean'");
    const Eigen::Index d = p.mean->size();
    Matrix cov;
    if (!p.cov || !p.cov->full) {
      cov = (p.cov ? p.cov->scalar : 1.0) * Matrix::Identity(d, d);
    } else {
      cov = *p.cov->full;
    }
    out.push_back({p.weight, *p.mean, cov});
  }
  return out;
}

int line_of(const ParseState& s, const std::string& key) {
  auto it = s.lines.find(key);
  return it == s.lines.end() ? 0 : it->second;
}

}  // namespace

std::vector<PresetInfo> preset_list() {
  return {
      {"fig4-2d", "2D bimodal target, identity render: VSD-empirical (64 particles) vs ancestral sampling vs 20 SDS runs"},
      {"scale-2048", "VSD-empirical with 2048 particles on the 2D bimodal target"},
      {"cfg-sweep", "VSD diversity across guidance scales {0, 2, 7.5, 30}, 3 seeds"},
      {"particles-sweep", "VSD diversity and W2 for 1, 2, 4, 8 particles"},
      {"schedule-ablation", "paired runs (3 seeds) with uniform and annealed time schedules"},
      {"learned-2d", "VSD with the learned estimator against VSD-empirical"},
      {"multiview", "2D parameters seen through 1D linear projections of a 1D target"},
  };
}

ExperimentConfig preset(std::string_view name) { return make_preset(name); }

void validate_config(const ExperimentConfig& c) {
  auto wrap = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, 0, e.what());
    }
  };
  if (c.target.conditional.empty()) throw ConfigError("target.component", 0, "at least one target component is required");
  wrap("target.component", [&] { (void)GaussianMixture(c.target.conditional); });
  if (!c.target.unconditional.empty()) {
    wrap("target.unconditional", [&] { (void)GaussianMixture(c.target.unconditional); });
  }
  if (!(c.target.uncond_cov_scale > 0.0)) throw ConfigError("target.uncond_cov_scale", 0, "must be > 0");
  if (!(c.target.guidance >= 0.0)) throw ConfigError("target.guidance", 0, "must be >= 0");
  wrap("target", [&] { (void)c.guided_model(); });
  wrap("renderer", [&] { (void)c.make_renderer(); });
  if (c.guided_model().dimension() != c.renderer.image_dim) {
    throw ConfigError("renderer.image_dim", 0, "must equal the target dimension");
  }
  try {
    c.distill.validate(c.renderer.param_dim);
  } catch (const InvariantError& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    std::string key = colon == std::string::npos ? "distill" : msg.substr(0, colon);
    if (key.rfind("distill.", 0) != 0) key = "distill.t_phase1";
    if (key == "distill.estimator_batch") key = "estimator.batch";
    if (key == "distill.estimator_hidden") key = "estimator.hidden";
    throw ConfigError(key, 0, colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
  if (c.distill.learned.optimizer.lr < 0.0) throw ConfigError("estimator.lr", 0, "must be >= 0");
  if (c.sampler.n_steps < 1) throw ConfigError("sampler.steps", 0, "must be >= 1");
  if (c.sampler.n_samples < 1) throw ConfigError("sampler.samples", 0, "must be >= 1");
  if (c.metrics.projections < 1) throw ConfigError("metrics.projections", 0, "must be >= 1");
  if (c.metrics.objective_cameras < 1) throw ConfigError("metrics.objective_cameras", 0, "must be >= 1");
  if (c.renderer.image_dim <= 2) {
    wrap("metrics.grid_points", [&] { c.grid().validate(); });
  }
  for (double t : c.metrics.objective_times) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("metrics.objective_times", 0, "times must lie in (0, 1)");
  }
  const bool sweep = c.experiment == ExperimentKind::CfgSweep || c.experiment == ExperimentKind::ParticlesSweep;
  if (sweep && c.sweep.values.empty()) throw ConfigError("sweep.values", 0, "sweep needs at least one value");
  if (c.sweep.seeds < 1) throw ConfigError("sweep.seeds", 0, "must be >= 1");
  if (c.experiment == ExperimentKind::CfgSweep) {
    for (double s : c.sweep.values) {
      if (!(s >= 0.0)) throw ConfigError("sweep.values", 0, "guidance scales must be >= 0");
    }
  }
  if (c.experiment == ExperimentKind::ParticlesSweep) {
    for (double n : c.sweep.values) {
      if (!(n >= 1.0) || n != std::floor(n)) throw ConfigError("sweep.values", 0, "particle counts must be positive integers");
    }
  }
  if (c.sds.runs < 0) throw ConfigError("sds.runs", 0, "must be >= 0");
  if (c.sds.steps < 0) throw ConfigError("sds.steps", 0, "must be >= 0");
  if (c.sds.runs > 0 && !(c.sds.lr > 0.0)) throw ConfigError("sds.lr", 0, "must be > 0");
  if (!(c.sds.guidance >= 0.0)) throw ConfigError("sds.guidance", 0, "must be >= 0");
}

ExperimentConfig parse_config(std::string_view text) {
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line;
    bool header;
  };
  std::vector<Entry> entries;
  {
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("", line_no, "malformed section header");
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        static const std::vector<std::string> known = {
            "target", "target.component", "target.unconditional", "renderer", "distill", "estimator",
            "sampler", "metrics", "sweep", "sds", "check"};
        if (std::find(known.begin(), known.end(), section) == known.end()) {
          throw ConfigError(section, line_no, "unknown section");
        }
        entries.push_back({section, "", "", line_no, true});
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("", line_no, "expected 'key = value'");
      entries.push_back({section, trim(std::string_view(line).substr(0, eq)),
                         trim(std::string_view(line).substr(eq + 1)), line_no, false});
    }
  }

  ParseState st;
  for (const auto& e : entries) {
    if (!e.header && e.section.empty() && e.key == "preset") {
      const Ctx ctx{e.key, e.line};
      const Value v = ValueParser(e.value, e.key, e.line).parse();
      const std::string name = as_string(v, ctx);
      try {
        st.cfg = make_preset(name);
      } catch (const ConfigError& err) {
        throw ConfigError("preset", e.line, std::string(err.what()).substr(std::string("'preset': ").size()));
      }
    }
  }

  for (const auto& e : entries) {
    if (e.header) {
      PendingComponent p;
      p.line = e.line;
      if (e.section == "target.component") {
        st.cond_seen = true;
        st.cond.push_back(p);
      } else if (e.section == "target.unconditional") {
        st.uncond_seen = true;
        st.uncond.push_back(p);
      }
      continue;
    }
    const std::string full = e.section.empty() ? e.key : e.section + "." + e.key;
    if (full == "preset") continue;
    const auto& table = handlers();
    const auto it = table.find(full);
    if (it == table.end()) throw ConfigError(full, e.line, "unknown key");
    const Ctx ctx{full, e.line};
    it->second(st, ValueParser(e.value, full, e.line).parse(), ctx);
    st.lines[full] = e.line;
  }
  if (st.cond_seen) st.cfg.target.conditional = finish_components(st.cond, "target.component");
  if (st.uncond_seen) st.cfg.target.unconditional = finish_components(st.uncond, "target.unconditional");

  try {
    validate_config(st.cfg);
  } catch (const ConfigError& err) {
    if (err.line() > 0) throw;
    const std::string prefix = "'" + err.key() + "': ";
    std::string msg = err.what();
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    int line = line_of(st, err.key());
    if (line == 0 && err.key().rfind("target.component", 0) == 0 && !st.cond.empty()) line = st.cond.front().line;
    throw ConfigError(err.key(), line, msg);
  }
  return st.cfg;
}

namespace {

std::string fmt_vector(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

std::string fmt_numbers(const std::vector<double>& v) {
  return fmt_vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
}

std::string fmt_matrix(const Matrix& m) {
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) s += (r ? ", " : "") + fmt_vector(m.row(r).transpose());
  return s + "]";
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out + "\"";
}

void write_components(std::ostringstream& os, const std::string& header,
                      const std::vector<GaussianComponent>& comps) {
  for (const auto& c : comps) {
    os << "\n[" << header << "]\n";
    os << "weight = " << format_double(c.weight) << "\n";
    os << "mean = " << fmt_vector(c.mean) << "\n";
    os << "cov = " << fmt_matrix(c.cov) << "\n";
  }
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  if (!c.preset.empty()) os << "based_on = " << quote(c.preset) << "\n";
  os << "experiment = " << quote(to_string(c.experiment)) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "output = " << quote(c.output) << "\n";
  os << "images = " << (c.images ? "true" : "false") << "\n";

  os << "\n[target]\n";
  os << "guidance = " << format_double(c.target.guidance) << "\n";
  os << "uncond_cov_scale = " << format_double(c.target.uncond_cov_scale) << "\n";
  os << "uncond_mean_scale = " << format_double(c.target.uncond_mean_scale) << "\n";
  write_components(os, "target.component", c.target.conditional);
  write_components(os, "target.unconditional", c.target.unconditional);

  os << "\n[renderer]\n";
  os << "kind = " << quote(to_string(c.renderer.kind)) << "\n";
  os << "param_dim = " << c.renderer.param_dim << "\n";
  os << "image_dim = " << c.renderer.image_dim << "\n";

  const DistillConfig& d = c.distill;
  os << "\n[distill]\n";
  os << "method = " << quote(to_string(d.method)) << "\n";
  os << "estimator = " << quote(to_string(d.estimator)) << "\n";
  os << "particles = " << d.n_particles << "\n";
  os << "particle_batch = " << d.particle_batch << "\n";
  os << "steps = " << d.steps << "\n";
  os << "particle_lr = " << format_double(d.particle_optimizer.lr) << "\n";
  os << "particle_optimizer = " << quote(to_string(d.particle_optimizer.kind)) << "\n";
  os << "particle_momentum = " << format_double(d.particle_optimizer.momentum) << "\n";
  os << "mc_batch = " << d.mc_batch << "\n";
  if (d.init_mean.size() > 0) os << "init_mean = " << fmt_vector(d.init_mean) << "\n";
  os << "init_std = " << format_double(d.init_std) << "\n";
  if (d.init_seed) os << "init_seed = " << *d.init_seed << "\n";
  os << "snapshot_stride = " << d.snapshot_stride << "\n";
  os << "t_phase1 = [" << format_double(d.time_schedule.phase1.lo) << ", " << format_double(d.time_schedule.phase1.hi) << "]\n";
  os << "t_phase2 = [" << format_double(d.time_schedule.phase2.lo) << ", " << format_double(d.time_schedule.phase2.hi) << "]\n";
  os << "t_switch_step = " << d.time_schedule.switch_step << "\n";

  os << "\n[estimator]\n";
  os << "hidden = " << d.learned.hidden << "\n";
  os << "batch = " << d.learned.batch << "\n";
  os << "lr = " << format_double(d.learned.optimizer.lr) << "\n";
  os << "optimizer = " << quote(to_string(d.learned.optimizer.kind)) << "\n";
  os << "momentum = " << format_double(d.learned.optimizer.momentum) << "\n";

  os << "\n[sampler]\n";
  os << "steps = " << c.sampler.n_steps << "\n";
  os << "samples = " << c.sampler.n_samples << "\n";

  os << "\n[metrics]\n";
  os << "projections = " << c.metrics.projections << "\n";
  os << "grid_points = " << c.metrics.grid_points << "\n";
  os << "grid_half_width = " << format_double(c.metrics.grid_half_width) << "\n";
  os << "objective_times = " << fmt_numbers(c.metrics.objective_times) << "\n";
  os << "objective_cameras = " << c.metrics.objective_cameras << "\n";

  os << "\n[sweep]\n";
  os << "values = " << fmt_numbers(c.sweep.values) << "\n";
  os << "seeds = " << c.sweep.seeds << "\n";

  os << "\n[sds]\n";
  os << "runs = " << c.sds.runs << "\n";
  os << "guidance = " << format_double(c.sds.guidance) << "\n";
  os << "steps = " << c.sds.steps << "\n";
  os << "lr = " << format_double(c.sds.lr) << "\n";
  os << "shared_init = " << (c.sds.shared_init ? "true" : "false") << "\n";

  os << "\n[check]\n";
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) os << key << " = " << format_double(*v) << "\n";
  };
  opt("max_sliced_w2", c.check.max_sliced_w2);
  opt("sds_mode_radius", c.check.sds_mode_radius);
  opt("min_sds_mode_fraction", c.check.min_sds_mode_fraction);
  opt("max_sds_diversity_ratio", c.check.max_sds_diversity_ratio);
  opt("max_adjacent_diversity_ratio", c.check.max_adjacent_diversity_ratio);
  opt("max_annealed_objective_ratio", c.check.max_annealed_objective_ratio);
  opt("max_estimator_w2_gap", c.check.max_estimator_w2_gap);
  return os.str();
}

namespace {

bool same_components(const std::vector<GaussianComponent>& a, const std::vector<GaussianComponent>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight != b[i].weight || a[i].mean.size() != b[i].mean.size() || a[i].mean != b[i].mean ||
        a[i].cov.rows() != b[i].cov.rows() || a[i].cov != b[i].cov) {
      return false;
    }
  }
  return true;
}

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto& ca = a.check;
  const auto& cb = b.check;
  return a.preset == b.preset && a.experiment == b.experiment && a.seed == b.seed &&
         a.output == b.output && a.images == b.images &&
         same_components(a.target.conditional, b.target.conditional) &&
         same_components(a.target.unconditional, b.target.unconditional) &&
         a.target.uncond_cov_scale == b.target.uncond_cov_scale &&
         a.target.uncond_mean_scale == b.target.uncond_mean_scale &&
         a.target.guidance == b.target.guidance && a.renderer.kind == b.renderer.kind &&
         a.renderer.param_dim == b.renderer.param_dim && a.renderer.image_dim == b.renderer.image_dim &&
         a.distill == b.distill && a.sampler == b.sampler &&
         a.metrics.projections == b.metrics.projections && a.metrics.grid_points == b.metrics.grid_points &&
         a.metrics.grid_half_width == b.metrics.grid_half_width &&
         a.metrics.objective_times == b.metrics.objective_times &&
         a.metrics.objective_cameras == b.metrics.objective_cameras &&
         a.sweep.values == b.sweep.values && a.sweep.seeds == b.sweep.seeds &&
         a.sds.runs == b.sds.runs && a.sds.guidance == b.sds.guidance && a.sds.steps == b.sds.steps && a.sds.lr == b.sds.lr &&
         a.sds.shared_init == b.sds.shared_init && ca.max_sliced_w2 == cb.max_sliced_w2 &&
         ca.sds_mode_radius == cb.sds_mode_radius && ca.min_sds_mode_fraction == cb.min_sds_mode_fraction &&
         ca.max_sds_diversity_ratio == cb.max_sds_diversity_ratio &&
         ca.max_adjacent_diversity_ratio == cb.max_adjacent_diversity_ratio &&
         ca.max_annealed_objective_ratio == cb.max_annealed_objective_ratio &&
         ca.max_estimator_w2_gap == cb.max_estimator_w2_gap;
}

}  // namespace vsdlab
