#include "vsdlab/harness.hpp"

#include "vsdlab/checkpoint.hpp"
#include "vsdlab/format.hpp"
#include "vsdlab/image.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace vsdlab {

namespace fs = std::filesystem;

bool RunManifest::checks_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

std::string metrics_json(const std::map<std::string, double>& metrics) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : metrics) j[k] = number_or_null(v);
  return j.dump(2) + "\n";
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["config"] = m.config_text;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["status"] = m.status;
  j["exit_code"] = m.exit_code;
  j["error"] = m.error;
  j["files"] = nlohmann::json::array();
  for (const auto& f : m.files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["checks"] = nlohmann::json::array();
  for (const auto& c : m.checks) {
    j["checks"].push_back({{"name", c.name}, {"value", number_or_null(c.value)},
                           {"threshold", c.threshold}, {"passed", c.passed}});
  }
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, v] : m.metrics) metrics[k] = number_or_null(v);
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

void write_points_csv(std::ostream& out, const std::vector<Vector>& points) {
  const Eigen::Index d = points.empty() ? 0 : points.front().size();
  out << "particle";
  for (Eigen::Index k = 0; k < d; ++k) out << ",coord_" << k;
  out << '\n';
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(points[i][k]);
    out << '\n';
  }
}

std::vector<Vector> read_points_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    for (std::string col; std::getline(hs, col, ',');) header.push_back(col);
  }
  std::vector<std::size_t> coords;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("coord_", 0) == 0) coords.push_back(i);
  }
  if (coords.empty()) throw std::runtime_error("CSV header has no coord_* columns");
  std::vector<Vector> points;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " columns");
    }
    Vector p(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t k = 0; k < coords.size(); ++k) {
      try {
        std::size_t used = 0;
        p[static_cast<Eigen::Index>(k)] = std::stod(cells[coords[k]], &used);
      } catch (const std::exception&) {
        throw std::runtime_error("CSV line " + std::to_string(line_no) + ": bad number '" + cells[coords[k]] + "'");
      }
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<Vector> reference_samples(const ExperimentConfig& config, double guidance) {
  SamplerConfig sc = config.sampler;
  sc.seed = config.seed;
  return ancestral_sample(config.guided_model(guidance), sc);
}

std::vector<Vector> rendered_points(const ExperimentConfig& config, const ParticleEnsemble& ensemble) {
  const Renderer renderer = config.make_renderer();
  if (renderer.kind() == RendererKind::Identity) return ensemble.particles();
  const auto cams = objective_cameras(renderer, static_cast<std::size_t>(config.metrics.objective_cameras));
  std::vector<Vector> out;
  out.reserve(ensemble.size() * cams.size());
  for (const auto& p : ensemble.particles()) {
    for (const auto& c : cams) out.push_back(renderer.render(p, c));
  }
  return out;
}

std::map<std::string, double> ensemble_metrics(const ExperimentConfig& config, const ParticleEnsemble& ensemble,
                                               const std::vector<Vector>& reference) {
  std::map<std::string, double> m;
  const Renderer renderer = config.make_renderer();
  const auto points = rendered_points(config, ensemble);
  Rng proj(config.seed, Stream::Projections);
  m["sliced_w2"] = sliced_w2(points, reference, config.metrics.projections, proj);
  m["diversity"] = ensemble.size() >= 2 ? diversity(ensemble.particles()) : std::nan("");
  m["reference_diversity"] = reference.size() >= 2 ? diversity(reference) : std::nan("");
  const GuidedModel guided = config.guided_model();
  if (renderer.image_dim() <= 2) {
    const auto cams = objective_cameras(renderer, static_cast<std::size_t>(config.metrics.objective_cameras));
    m["objective"] = distillation_objective(ensemble, renderer, guided, config.grid(), config.metrics.objective_times, cams);
  }
  const auto hist = mode_assign(points, guided.conditional);
  for (std::size_t k = 0; k < hist.size(); ++k) {
    m["mode_fraction_" + std::to_string(k)] = static_cast<double>(hist[k]) / static_cast<double>(points.size());
  }
  return m;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
}

void write_metrics(const fs::path& dir, const std::map<std::string, double>& metrics) {
  write_file(dir / "metrics.json", metrics_json(metrics));
  std::ostringstream csv;
  csv << "metric,value\n";
  for (const auto& [k, v] : metrics) csv << k << ',' << format_double(v) << '\n';
  write_file(dir / "summary.csv", csv.str());
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Runner {
  const ExperimentConfig& config;
  fs::path out;
  std::map<std::string, double> metrics;

  DistillConfig distill_config(std::uint64_t seed) const {
    DistillConfig d = config.distill;
    d.seed = seed;
    return d;
  }

  // One distillation run with its standard outputs in `dir`.
  RunResult distill_into(const fs::path& dir, const DistillConfig& d, const GuidedModel& guided,
                         const ExperimentConfig& view, const std::vector<Vector>& reference,
                         std::map<std::string, double>& run_metrics) const {
    const Renderer renderer = view.make_renderer();
    RunResult res = run(d, guided, renderer);
    write_stream(dir / "trajectory.csv", [&](std::ostream& o) { res.trajectory.write_csv(o); });
    write_stream(dir / "ensemble.csv", [&](std::ostream& o) { write_points_csv(o, res.ensemble.particles()); });
    ExperimentConfig echo = view;
    echo.distill = d;
    write_stream(dir / "checkpoint.txt", [&](std::ostream& o) {
      write_checkpoint(o, Checkpoint{serialize_config(echo), d.seed, res.state});
    });
    run_metrics = ensemble_metrics(view, res.ensemble, reference);
    write_metrics(dir, run_metrics);
    if (config.images && renderer.kind() == RendererKind::Identity && renderer.image_dim() == 2) {
      write_density(dir / "density.ppm", view, res.ensemble.particles());
    }
    return res;
  }

  void write_density(const fs::path& path, const ExperimentConfig& view, const std::vector<Vector>& points) const {
    const GridSpec grid = view.grid();
    const GaussianMixture& target = view.guided_model().conditional;
    const auto logp = evaluate_on_grid([&](const Vector& x) { return target.log_density(x); }, grid);
    write_stream(path, [&](std::ostream& o) { write_density_ppm(o, grid, logp, points); });
  }

  void write_reference(const fs::path& path, const std::vector<Vector>& reference) const {
    write_stream(path, [&](std::ostream& o) { write_points_csv(o, reference); });
  }

  void add_check(RunManifest& m, const std::string& name, double value, const std::optional<double>& thr,
                 bool upper, bool strict = false) const {
    if (!thr) return;
    const bool ok = upper ? (strict ? value < *thr : value <= *thr) : value >= *thr;
    m.checks.push_back({name, value, *thr, std::isfinite(value) && ok});
  }

  void run_distill(RunManifest& m) {
    const GuidedModel guided = config.guided_model();
    const auto reference = reference_samples(config, config.target.guidance);
    write_reference(out / "reference.csv", reference);
    std::map<std::string, double> vsd;
    distill_into(out, distill_config(config.seed), guided, config, reference, vsd);
    metrics = vsd;
    add_check(m, "sliced_w2", vsd.at("sliced_w2"), config.check.max_sliced_w2, true);

    if (config.sds.runs > 0) run_sds(m);
  }

  void run_sds(RunManifest& m) {
    const GuidedModel guided = config.guided_model(config.sds.guidance);
    const Renderer renderer = config.make_renderer();
    std::vector<Vector> endpoints;
    for (std::int64_t k = 0; k < config.sds.runs; ++k) {
      DistillConfig d = config.distill;
      d.method = Method::Sds;
      d.estimator = EstimatorKind::Dirac;
      d.n_particles = 1;
      d.particle_batch = 1;
      d.mc_batch = 1;
      d.steps = config.sds.steps;
      d.particle_optimizer = {OptimizerKind::Sgd, config.sds.lr};
      d.seed = config.seed + 1 + static_cast<std::uint64_t>(k);
      if (config.sds.shared_init) d.init_seed = config.seed;
      const RunResult r = run(d, guided, renderer);
      std::ostringstream name;
      name << "run_" << std::setw(2) << std::setfill('0') << k << "_trajectory.csv";
      write_stream(out / "sds" / name.str(), [&](std::ostream& o) { r.trajectory.write_csv(o); });
      const auto pts = rendered_points(config, r.ensemble);
      endpoints.push_back(pts.front());
    }
    write_stream(out / "sds" / "endpoints.csv", [&](std::ostream& o) { write_points_csv(o, endpoints); });

    const double radius = config.check.sds_mode_radius.value_or(0.15);
    const GaussianMixture& target = guided.conditional;
    std::size_t near = 0;
    for (const auto& e : endpoints) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < target.size(); ++j) best = std::min(best, (e - target.component(j).mean).norm());
      if (best <= radius) ++near;
    }
    std::map<std::string, double> sm;
    sm["sds_mode_fraction"] = static_cast<double>(near) / static_cast<double>(endpoints.size());
    sm["sds_mode_radius"] = radius;
    sm["sds_diversity"] = endpoints.size() >= 2 ? diversity(endpoints) : std::nan("");
    sm["sds_diversity_ratio"] = sm["sds_diversity"] / metrics.at("diversity");
    write_metrics(out / "sds", sm);
    for (const auto& [k, v] : sm) metrics[k] = v;
    add_check(m, "sds_mode_fraction", sm["sds_mode_fraction"], config.check.min_sds_mode_fraction, false);
    add_check(m, "sds_diversity_ratio", sm["sds_diversity_ratio"], config.check.max_sds_diversity_ratio, true, true);
  }

  void run_cfg_sweep(RunManifest& m) {
    std::ostringstream table;
    table << "guidance,seed,diversity,sliced_w2\n";
    std::vector<std::vector<double>> div(config.sweep.values.size());
    for (std::size_t i = 0; i < config.sweep.values.size(); ++i) {
      const double s = config.sweep.values[i];
      ExperimentConfig view = config;
      view.target.guidance = s;
      const fs::path sdir = out / ("s_" + format_double(s));
      const auto reference = reference_samples(view, s);
      write_reference(sdir / "reference.csv", reference);
      for (std::int64_t k = 0; k < config.sweep.seeds; ++k) {
        std::map<std::string, double> rm;
        distill_into(sdir / ("seed_" + std::to_string(k)), distill_config(config.seed + static_cast<std::uint64_t>(k)),
                     view.guided_model(), view, reference, rm);
        div[i].push_back(rm.at("diversity"));
        table << format_double(s) << ',' << k << ',' << format_double(rm.at("diversity")) << ','
              << format_double(rm.at("sliced_w2")) << '\n';
      }
      metrics["diversity_s" + format_double(s)] = mean_of(div[i]);
    }
    write_file(out / "diversity_table.csv", table.str());
    // Worst ratio between adjacent guidance levels, taken per seed.
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < div.size(); ++i) {
      for (std::size_t k = 0; k < div[i].size(); ++k) worst = std::max(worst, div[i + 1][k] / div[i][k]);
    }
    if (div.size() >= 2) {
      metrics["max_adjacent_diversity_ratio"] = worst;
      add_check(m, "max_adjacent_diversity_ratio", worst, config.check.max_adjacent_diversity_ratio, true);
    }
  }

  void run_particles_sweep(RunManifest& m) {
    (void)m;
    const auto reference = reference_samples(config, config.target.guidance);
    write_reference(out / "reference.csv", reference);
    std::ostringstream table;
    table << "particles,diversity,sliced_w2\n";
    for (double v : config.sweep.values) {
      const auto n = static_cast<std::int64_t>(v);
      DistillConfig d = distill_config(config.seed);
      d.n_particles = n;
      d.particle_batch = std::min<std::int64_t>(config.distill.particle_batch, n);
      std::map<std::string, double> rm;
      distill_into(out / ("n_" + std::to_string(n)), d, config.guided_model(), config, reference, rm);
      table << n << ',' << format_double(rm.at("diversity")) << ',' << format_double(rm.at("sliced_w2")) << '\n';
      metrics["diversity_n" + std::to_string(n)] = rm.at("diversity");
      metrics["sliced_w2_n" + std::to_string(n)] = rm.at("sliced_w2");
    }
    write_file(out / "particles_table.csv", table.str());
  }

  void run_schedule_ablation(RunManifest& m) {
    const auto reference = reference_samples(config, config.target.guidance);
    write_reference(out / "reference.csv", reference);
    std::ostringstream table;
    table << "schedule,seed,objective,sliced_w2\n";
    std::vector<double> obj_u, obj_a;
    for (std::int64_t k = 0; k < config.sweep.seeds; ++k) {
      for (const bool annealed : {false, true}) {
        DistillConfig d = distill_config(config.seed + static_cast<std::uint64_t>(k));
        d.time_schedule = annealed ? config.distill.time_schedule : TimeSchedule::uniform();
        ExperimentConfig view = config;
        view.distill.time_schedule = d.time_schedule;
        const std::string name = annealed ? "annealed" : "uniform";
        std::map<std::string, double> rm;
        distill_into(out / name / ("seed_" + std::to_string(k)), d, config.guided_model(), view, reference, rm);
        (annealed ? obj_a : obj_u).push_back(rm.at("objective"));
        table << name << ',' << k << ',' << format_double(rm.at("objective")) << ','
              << format_double(rm.at("sliced_w2")) << '\n';
      }
    }
    write_file(out / "schedule_table.csv", table.str());
    metrics["objective_uniform"] = mean_of(obj_u);
    metrics["objective_annealed"] = mean_of(obj_a);
    metrics["annealed_objective_ratio"] = metrics["objective_annealed"] / metrics["objective_uniform"];
    add_check(m, "annealed_objective_ratio", metrics["annealed_objective_ratio"],
              config.check.max_annealed_objective_ratio, true);
  }

  void run_estimator_compare(RunManifest& m) {
    const auto reference = reference_samples(config, config.target.guidance);
    write_reference(out / "reference.csv", reference);
    std::ostringstream table;
    table << "estimator,sliced_w2,diversity,objective\n";
    for (const EstimatorKind kind : {EstimatorKind::Empirical, EstimatorKind::Learned}) {
      DistillConfig d = distill_config(config.seed);
      d.method = Method::Vsd;
      d.estimator = kind;
      const std::string name = to_string(kind);
      std::map<std::string, double> rm;
      const RunResult r = distill_into(out / name, d, config.guided_model(), config, reference, rm);
      table << name << ',' << format_double(rm.at("sliced_w2")) << ',' << format_double(rm.at("diversity")) << ','
            << format_double(rm.count("objective") ? rm.at("objective") : std::nan("")) << '\n';
      metrics["sliced_w2_" + name] = rm.at("sliced_w2");
      if (kind == EstimatorKind::Learned) metrics["estimator_final_loss"] = r.state.last_est_loss;
    }
    write_file(out / "estimator_table.csv", table.str());
    metrics["estimator_w2_gap"] = std::abs(metrics["sliced_w2_learned"] - metrics["sliced_w2_empirical"]);
    add_check(m, "estimator_w2_gap", metrics["estimator_w2_gap"], config.check.max_estimator_w2_gap, true);
  }
};

std::vector<FileDigest> inventory(const fs::path& root) {
  std::vector<FileDigest> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    files.push_back({rel, sha256_hex(entry.path()), entry.file_size()});
  }
  std::sort(files.begin(), files.end(), [](const FileDigest& a, const FileDigest& b) { return a.path < b.path; });
  return files;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  RunManifest m;
  m.started_at = utc_now();
  m.config_text = serialize_config(config);
  fs::create_directories(out_dir);
  Runner runner{config, out_dir, {}};
  try {
    validate_config(config);
    write_file(out_dir / "config.txt", m.config_text);
    switch (config.experiment) {
      case ExperimentKind::Distill: runner.run_distill(m); break;
      case ExperimentKind::CfgSweep: runner.run_cfg_sweep(m); break;
      case ExperimentKind::ParticlesSweep: runner.run_particles_sweep(m); break;
      case ExperimentKind::ScheduleAblation: runner.run_schedule_ablation(m); break;
      case ExperimentKind::EstimatorCompare: runner.run_estimator_compare(m); break;
    }
    write_metrics(out_dir, runner.metrics);
    m.metrics = runner.metrics;
  } catch (const ConfigError& e) {
    m.status = "config_error";
    m.error = e.what();
    m.exit_code = kExitConfig;
  } catch (const NumericError& e) {
    m.status = "numeric_error";
    m.error = e.what();
    m.exit_code = kExitNumeric;
  } catch (const std::exception& e) {
    m.status = "error";
    m.error = e.what();
    m.exit_code = kExitFailure;
  }
  m.finished_at = utc_now();
  m.files = inventory(out_dir);
  write_file(out_dir / "manifest.json", manifest_json(m));
  return m;
}

}  // namespace vsdlab
