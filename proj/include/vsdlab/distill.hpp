#pragma once

#include "vsdlab/gaussian_mixture.hpp"
#include "vsdlab/mlp.hpp"
#include "vsdlab/renderer.hpp"
#include "vsdlab/schedule.hpp"
#include "vsdlab/variational_score.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace vsdlab {

enum class Method { Sds, Vsd };
enum class EstimatorKind { Dirac, Empirical, Learned };

struct DistillConfig {
  Method method = Method::Vsd;
  EstimatorKind estimator = EstimatorKind::Empirical;
  std::int64_t n_particles = 8;
  // Particles drawn (without replacement) and updated per step; 1 is the
  // single-particle loop, >= n_particles updates the whole ensemble.
  std::int64_t particle_batch = 1;
  std::int64_t steps = 1000;
  OptimizerConfig particle_optimizer{OptimizerKind::Sgd, 0.03};
  LearnedEstimatorConfig learned{};
  TimeSchedule time_schedule = TimeSchedule::uniform();
  std::int64_t mc_batch = 1;
  // Initial distribution N(init_mean, init_std^2 I); empty mean means zero.
  Vector init_mean;
  double init_std = 2.0;
  std::uint64_t seed = 0;
  // Seed for the initial particle draw; defaults to `seed`.
  std::optional<std::uint64_t> init_seed;
  std::int64_t snapshot_stride = 100;

  // Throws InvariantError naming the offending field.
  void validate(Eigen::Index param_dim) const;
  bool operator==(const DistillConfig& other) const;
};

// Variational-score source used inside the VSD gradient: a view over one of
// the three estimators, fixed for the duration of a gradient batch.
class VariationalScore {
 public:
  static VariationalScore dirac();
  static VariationalScore empirical(const EmpiricalScore& score);
  static VariationalScore learned(const LearnedEstimator& est);

  EstimatorKind kind() const { return kind_; }
  Vector estimate(const Vector& x_t, double t, const Vector& noise, const Camera& c) const;

 private:
  EstimatorKind kind_ = EstimatorKind::Dirac;
  const EmpiricalScore* empirical_ = nullptr;
  const LearnedEstimator* learned_ = nullptr;
};

// omega * (eps_pretrain(x_t) - eps) pulled back through the renderer, with
// x_t = alpha_t g(theta, c) + sigma_t eps.
Vector sds_gradient(const Vector& theta, const GuidedModel& guided, const Renderer& renderer,
                    double t, const Vector& noise, const Camera& c, double omega);

// omega * (eps_pretrain(x_t) - eps_variational(x_t)) pulled back through the
// renderer.
Vector vsd_gradient(const Vector& theta, const GuidedModel& guided, const VariationalScore& score,
                    const Renderer& renderer, double t, const Vector& noise, const Camera& c,
                    double omega);

struct StepRecord {
  std::int64_t step = 0;
  double mean_grad_norm = 0.0;
  double mean_t = 0.0;
  double est_loss = 0.0;  // NaN unless the learned estimator trained this step

  bool operator==(const StepRecord& o) const;
};

struct Snapshot {
  std::int64_t step = 0;  // completed steps
  std::vector<Vector> particles;
  std::vector<double> last_grad_norm;  // NaN for particles not yet updated
  std::vector<double> last_t;
  double est_loss = 0.0;

  bool operator==(const Snapshot& o) const;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<Snapshot> snapshots;

  bool operator==(const Trajectory& o) const { return steps == o.steps && snapshots == o.snapshots; }
  // Header: step,particle,coord_0..coord_{d-1},grad_norm,t,est_loss
  void write_csv(std::ostream& out) const;
};

// Everything needed to continue a run from `next_step`.
struct DistillState {
  ParticleEnsemble ensemble;
  std::vector<Optimizer> particle_optimizers;  // empty for plain SGD
  std::optional<LearnedEstimator> estimator;
  std::vector<double> last_grad_norm;
  std::vector<double> last_t;
  double last_est_loss = 0.0;
  std::int64_t next_step = 0;
};

DistillState initialize(const DistillConfig& config, const Renderer& renderer);

// Runs steps [state.next_step, until) appending to `trajectory`.
void advance(DistillState& state, const DistillConfig& config, const GuidedModel& guided,
             const Renderer& renderer, std::int64_t until, Trajectory& trajectory);

struct RunResult {
  ParticleEnsemble ensemble;
  Trajectory trajectory;
  DistillState state;
};

// Full alternating optimization: initialize, then config.steps updates.
RunResult run(const DistillConfig& config, const GuidedModel& guided, const Renderer& renderer);

// Caps worker threads for gradient batches (0 = library default).
void set_thread_limit(int threads);

}  // namespace vsdlab
