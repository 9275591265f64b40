// vsdlab command-line front end.
#include "vsdlab/config.hpp"
#include "vsdlab/distill.hpp"
#include "vsdlab/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace vsdlab;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void apply_thread_env() {
  if (const char* env = std::getenv("VSDLAB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) set_thread_limit(n);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring VSDLAB_THREADS='" << env << "'\n";
    }
  }
}

int cmd_run(const std::string& config_path, const std::string& out, bool check) {
  const ExperimentConfig config = parse_config(read_file(config_path));
  const std::string dir = out.empty() ? config.output : out;
  const RunManifest m = run_experiment(config, dir);
  for (const auto& [k, v] : m.metrics) std::cout << k << " = " << v << '\n';
  for (const auto& c : m.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " = " << c.value << " (threshold " << c.threshold
              << ")\n";
  }
  std::cout << "wrote " << m.files.size() + 1 << " files to " << dir << '\n';
  if (m.exit_code != kExitOk) {
    std::cerr << "error: " << m.error << '\n';
    return m.exit_code;
  }
  if (check && !m.checks_passed()) return kExitCheck;
  return kExitOk;
}

int cmd_sample(const std::string& config_path, const std::string& out) {
  const ExperimentConfig config = parse_config(read_file(config_path));
  const auto samples = reference_samples(config, config.target.guidance);
  if (out.empty()) {
    write_points_csv(std::cout, samples);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out);
    write_points_csv(f, samples);
  }
  return kExitOk;
}

int cmd_metrics(const std::string& ensemble_path, const std::string& config_path) {
  const ExperimentConfig config = parse_config(read_file(config_path));
  std::ifstream in(ensemble_path);
  if (!in) throw std::runtime_error("cannot open " + ensemble_path);
  const ParticleEnsemble ensemble(read_points_csv(in));
  const auto reference = reference_samples(config, config.target.guidance);
  std::cout << metrics_json(ensemble_metrics(config, ensemble, reference));
  return kExitOk;
}

int cmd_presets(const std::string& name) {
  if (!name.empty()) {
    std::cout << serialize_config(preset(name));
    return kExitOk;
  }
  for (const auto& p : preset_list()) std::cout << p.name << "  " << p.description << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vsdlab: score distillation against analytic diffusion targets"};
  app.require_subcommand(1);

  std::string config_path, out, ensemble_path, preset_name;
  bool check = false;

  auto* run = app.add_subcommand("run", "run an experiment and write its outputs");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--out", out, "output directory (overrides the config)");
  run->add_flag("--check", check, "exit with status 4 when a configured threshold fails");

  auto* sample = app.add_subcommand("sample", "ancestral samples of the configured target as CSV");
  sample->add_option("config", config_path, "config file")->required();
  sample->add_option("-o,--out", out, "write to a file instead of stdout");

  auto* metrics = app.add_subcommand("metrics", "metrics of an ensemble CSV against the configured target");
  metrics->add_option("ensemble", ensemble_path, "ensemble CSV")->required();
  metrics->add_option("config", config_path, "config file")->required();

  auto* presets = app.add_subcommand("presets", "list presets, or print one as a config");
  presets->add_option("name", preset_name, "preset to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  apply_thread_env();
  try {
    if (*run) return cmd_run(config_path, out, check);
    if (*sample) return cmd_sample(config_path, out);
    if (*metrics) return cmd_metrics(ensemble_path, config_path);
    if (*presets) return cmd_presets(preset_name);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
