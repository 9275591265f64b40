#include "test_util.hpp"
#include "vsdlab/config.hpp"

#include <doctest.h>

#include <string>

using namespace vsdlab;
using vsdlab::test::vec;

namespace {

ConfigError parse_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error for:\n" << text);
  return ConfigError("", 0, "");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("a preset reference expands to the full preset") {
  const ExperimentConfig c = parse_config("preset = \"fig4-2d\"\n");
  CHECK(c == preset("fig4-2d"));
  CHECK(c.distill.n_particles == 64);
  CHECK(c.target.conditional.size() == 2);
  CHECK(c.target.conditional[0].mean == vec({2, 0}));
  CHECK(c.sds.runs == 20);
  CHECK(c.check.max_sliced_w2 == 0.2);
}

TEST_CASE("keys override the preset") {
  const ExperimentConfig c = parse_config(R"(
preset = "fig4-2d"   # start from the 2D preset
seed = 7
[distill]
steps = 10
particle_optimizer = "adam"
[target]
guidance = 2.5
)");
  CHECK(c.seed == 7);
  CHECK(c.distill.steps == 10);
  CHECK(c.distill.particle_optimizer.kind == OptimizerKind::Adam);
  CHECK(c.target.guidance == 2.5);
  CHECK(c.distill.n_particles == 64);
}

TEST_CASE("every preset round-trips and validates") {
  for (const auto& info : preset_list()) {
    const ExperimentConfig c = preset(info.name);
    CHECK_NOTHROW(validate_config(c));
    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("cleared thresholds stay cleared through the canonical form") {
  ExperimentConfig c = preset("fig4-2d");
  c.check = {};
  c.distill.init_seed = 5;
  const ExperimentConfig back = parse_config(serialize_config(c));
  CHECK(back == c);
  CHECK_FALSE(back.check.max_sliced_w2.has_value());
  CHECK(back.preset == "fig4-2d");
}

TEST_CASE("custom targets round-trip") {
  const ExperimentConfig c = parse_config(R"(
seed = 3
[target.component]
weight = 0.25
mean = [1, 2]
cov = [[1, 0.5], [0.5, 2]]
[target.component]
weight = 0.75
mean = [-1, 0]
cov = 0.5
[target.unconditional]
mean = [0, 0]
cov = 4
[renderer]
kind = "identity"
param_dim = 2
image_dim = 2
)");
  REQUIRE(c.target.conditional.size() == 2);
  CHECK(c.target.conditional[0].cov(0, 1) == 0.5);
  CHECK(c.target.conditional[1].cov == 0.5 * Matrix::Identity(2, 2));
  REQUIRE(c.target.unconditional.size() == 1);
  CHECK(parse_config(serialize_config(c)) == c);
  const GuidedModel g = c.guided_model();
  CHECK(g.unconditional.component(0).cov == 4.0 * Matrix::Identity(2, 2));
}

TEST_CASE("bad enumeration value names the key and the allowed values") {
  const ConfigError e = parse_error("[distill]\nmethod = \"vds\"\n");
  CHECK(e.key() == "distill.method");
  CHECK(e.line() == 2);
  const std::string what = e.what();
  CHECK(what.find("sds") != std::string::npos);
  CHECK(what.find("vsd") != std::string::npos);
}

TEST_CASE("unknown keys and sections") {
  const ConfigError e = parse_error("preset = \"fig4-2d\"\n\n[distill]\nstepz = 5\n");
  CHECK(e.key() == "distill.stepz");
  CHECK(e.line() == 4);
  CHECK(parse_error("[bogus]\n").line() == 1);
  CHECK(parse_error("seed 5\n").line() == 1);
  CHECK(parse_error("preset = \"nope\"\n").key() == "preset");
}

TEST_CASE("type mismatches") {
  ConfigError e = parse_error("seed = 1\n[distill]\nsteps = \"many\"\n");
  CHECK(e.key() == "distill.steps");
  CHECK(e.line() == 3);
  e = parse_error("[distill]\nparticles = 2.5\n");
  CHECK(e.key() == "distill.particles");
  e = parse_error("images = 1\n");
  CHECK(e.key() == "images");
  e = parse_error("[target.component]\nmean = [1, \"x\"]\n");
  CHECK(e.key() == "target.component.mean");
  e = parse_error("[distill]\nsteps = 5 6\n");
  CHECK(e.line() == 2);
}

TEST_CASE("invariant violations name the key and line") {
  ConfigError e = parse_error("preset = \"fig4-2d\"\n[distill]\nparticles = 0\n");
  CHECK(e.key() == "distill.particles");
  CHECK(e.line() == 3);
  e = parse_error("preset = \"fig4-2d\"\n[distill]\nmethod = \"sds\"\n");
  CHECK(e.key() == "distill.estimator");
  e = parse_error("preset = \"fig4-2d\"\n[target]\nguidance = -1\n");
  CHECK(e.key() == "target.guidance");
  CHECK(e.line() == 3);
  e = parse_error("preset = \"fig4-2d\"\n[renderer]\nkind = \"linear\"\nimage_dim = 1\n");
  CHECK(e.key() == "renderer.image_dim");
  e = parse_error("preset = \"fig4-2d\"\n[estimator]\nbatch = 0\n");
  CHECK(e.key() == "estimator.batch");
  e = parse_error("preset = \"fig4-2d\"\n[metrics]\nobjective_times = [0.5, 1]\n");
  CHECK(e.key() == "metrics.objective_times");
  e = parse_error("preset = \"fig4-2d\"\n[target.component]\nweight = 1\ncov = 1\n");
  CHECK(e.key().starts_with("target.component"));
  e = parse_error("preset = \"fig4-2d\"\n[distill]\nt_phase2 = [0.01, 0.5]\n");
  CHECK(e.key() == "distill.t_phase1");
}

TEST_CASE("strings keep comment characters") {
  const ExperimentConfig c = parse_config("preset = \"fig4-2d\"\noutput = \"runs/#1\"  # trailing\n");
  CHECK(c.output == "runs/#1");
}

TEST_CASE("enumeration names") {
  CHECK(to_string(Method::Vsd) == "vsd");
  CHECK(to_string(EstimatorKind::Learned) == "learned");
  CHECK(to_string(ExperimentKind::CfgSweep) == "cfg-sweep");
  CHECK(to_string(RendererKind::LinearProjection) == "linear");
  CHECK(to_string(OptimizerKind::Adam) == "adam");
}

}  // TEST_SUITE
