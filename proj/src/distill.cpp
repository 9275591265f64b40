#include "vsdlab/distill.hpp"

#include "vsdlab/format.hpp"

#include <bit>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <string>

#ifdef VSDLAB_HAVE_OPENMP
#include <omp.h>
#endif

namespace vsdlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_bits(a[i], b[i])) return false;
  }
  return true;
}

void fail(const char* field, const std::string& why) {
  throw InvariantError(std::string("distill.") + field + ": " + why);
}

}  // namespace

void set_thread_limit(int threads) {
#ifdef VSDLAB_HAVE_OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void DistillConfig::validate(Eigen::Index param_dim) const {
  if (n_particles < 1) fail("particles", "must be >= 1");
  if (particle_batch < 1) fail("particle_batch", "must be >= 1");
  if (steps < 0) fail("steps", "must be >= 0");
  if (!(particle_optimizer.lr > 0.0)) fail("particle_lr", "must be > 0");
  if (mc_batch < 1) fail("mc_batch", "must be >= 1");
  if (!(init_std >= 0.0)) fail("init_std", "must be >= 0");
  if (init_mean.size() != 0 && init_mean.size() != param_dim) {
    fail("init_mean", "must have the renderer's param_dim");
  }
  if (snapshot_stride < 1) fail("snapshot_stride", "must be >= 1");
  if (method == Method::Sds && estimator != EstimatorKind::Dirac) {
    fail("estimator", "SDS requires the dirac estimator");
  }
  if (learned.batch < 1) fail("estimator_batch", "must be >= 1");
  if (learned.hidden < 1) fail("estimator_hidden", "must be >= 1");
  time_schedule.validate();
}

bool DistillConfig::operator==(const DistillConfig& o) const {
  return method == o.method && estimator == o.estimator && n_particles == o.n_particles &&
         particle_batch == o.particle_batch && steps == o.steps &&
         particle_optimizer == o.particle_optimizer && learned == o.learned &&
         time_schedule == o.time_schedule && mc_batch == o.mc_batch &&
         init_mean.size() == o.init_mean.size() && init_mean == o.init_mean &&
         init_std == o.init_std && seed == o.seed && init_seed == o.init_seed &&
         snapshot_stride == o.snapshot_stride;
}

VariationalScore VariationalScore::dirac() { return {}; }

VariationalScore VariationalScore::empirical(const EmpiricalScore& score) {
  VariationalScore v;
  v.kind_ = EstimatorKind::Empirical;
  v.empirical_ = &score;
  return v;
}

VariationalScore VariationalScore::learned(const LearnedEstimator& est) {
  VariationalScore v;
  v.kind_ = EstimatorKind::Learned;
  v.learned_ = &est;
  return v;
}

Vector VariationalScore::estimate(const Vector& x_t, double t, const Vector& noise,
                                  const Camera& c) const {
  switch (kind_) {
    case EstimatorKind::Dirac:
      return dirac_estimate(x_t, t, noise);
    case EstimatorKind::Empirical:
      return empirical_->estimate(x_t, t, c);
    case EstimatorKind::Learned:
      return learned_estimate(*learned_, x_t, t, c);
  }
  return noise;
}

Vector sds_gradient(const Vector& theta, const GuidedModel& guided, const Renderer& renderer,
                    double t, const Vector& noise, const Camera& c, double omega) {
  const Vector x_t = perturb(renderer.render(theta, c), t, noise);
  const Vector residual = omega * (noise_prediction(guided, x_t, t) - noise);
  return renderer.apply_jacobian_transpose(theta, c, residual);
}

Vector vsd_gradient(const Vector& theta, const GuidedModel& guided, const VariationalScore& score,
                    const Renderer& renderer, double t, const Vector& noise, const Camera& c,
                    double omega) {
  const Vector x_t = perturb(renderer.render(theta, c), t, noise);
  const Vector residual =
      omega * (noise_prediction(guided, x_t, t) - score.estimate(x_t, t, noise, c));
  return renderer.apply_jacobian_transpose(theta, c, residual);
}

bool StepRecord::operator==(const StepRecord& o) const {
  return step == o.step && same_bits(mean_grad_norm, o.mean_grad_norm) &&
         same_bits(mean_t, o.mean_t) && same_bits(est_loss, o.est_loss);
}

bool Snapshot::operator==(const Snapshot& o) const {
  return step == o.step && particles == o.particles && same_bits(last_grad_norm, o.last_grad_norm) &&
         same_bits(last_t, o.last_t) && same_bits(est_loss, o.est_loss);
}

void Trajectory::write_csv(std::ostream& out) const {
  const Eigen::Index d = snapshots.empty() || snapshots.front().particles.empty()
                             ? 0
                             : snapshots.front().particles.front().size();
  out << "step,particle";
  for (Eigen::Index k = 0; k < d; ++k) out << ",coord_" << k;
  out << ",grad_norm,t,est_loss\n";
  for (const auto& s : snapshots) {
    for (std::size_t i = 0; i < s.particles.size(); ++i) {
      out << s.step << ',' << i;
      for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(s.particles[i][k]);
      out << ',' << format_double(s.last_grad_norm[i]) << ',' << format_double(s.last_t[i]) << ','
          << format_double(s.est_loss) << '\n';
    }
  }
}

DistillState initialize(const DistillConfig& config, const Renderer& renderer) {
  const Eigen::Index d = renderer.param_dim();
  config.validate(d);
  const std::uint64_t init_seed = config.init_seed.value_or(config.seed);
  const Vector mean = config.init_mean.size() == 0 ? Vector::Zero(d) : config.init_mean;
  std::vector<Vector> particles;
  particles.reserve(static_cast<std::size_t>(config.n_particles));
  for (std::int64_t i = 0; i < config.n_particles; ++i) {
    Rng rng(init_seed, Stream::Init, static_cast<std::uint64_t>(i));
    particles.push_back(mean + config.init_std * rng.normal_vector(d));
  }

  DistillState state;
  state.ensemble = ParticleEnsemble(std::move(particles));
  const auto n = static_cast<std::size_t>(config.n_particles);
  if (config.particle_optimizer.kind != OptimizerKind::Sgd || config.particle_optimizer.momentum != 0.0) {
    state.particle_optimizers.assign(n, Optimizer(config.particle_optimizer, d));
  }
  if (config.method == Method::Vsd && config.estimator == EstimatorKind::Learned) {
    Rng init_rng(config.seed, Stream::EstimatorInit);
    state.estimator.emplace(renderer.image_dim(), config.learned, init_rng);
  }
  state.last_grad_norm.assign(n, kNaN);
  state.last_t.assign(n, kNaN);
  state.last_est_loss = kNaN;
  return state;
}

namespace {

Snapshot take_snapshot(const DistillState& state, std::int64_t completed) {
  return {completed, state.ensemble.particles(), state.last_grad_norm, state.last_t,
          state.last_est_loss};
}

std::vector<std::size_t> select_particles(const DistillConfig& config, std::int64_t step) {
  const auto n = static_cast<std::size_t>(config.n_particles);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = static_cast<std::size_t>(config.particle_batch);
  if (batch >= n) return idx;
  Rng rng(config.seed, Stream::Select, static_cast<std::uint64_t>(step));
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t k = j + static_cast<std::size_t>(rng.below(n - j));
    std::swap(idx[j], idx[k]);
  }
  idx.resize(batch);
  return idx;
}

}  // namespace

void advance(DistillState& state, const DistillConfig& config, const GuidedModel& guided,
             const Renderer& renderer, std::int64_t until, Trajectory& trajectory) {
  if (guided.dimension() != renderer.image_dim()) {
    throw DimensionError("target dimension must equal the renderer image_dim");
  }
  if (trajectory.snapshots.empty() && state.next_step == 0) {
    trajectory.snapshots.push_back(take_snapshot(state, 0));
  }
  const Eigen::Index m = renderer.image_dim();
  const double inv_mc = 1.0 / static_cast<double>(config.mc_batch);

  for (std::int64_t step = state.next_step; step < until; ++step) {
    const std::vector<std::size_t> chosen = select_particles(config, step);
    const auto slots = static_cast<std::int64_t>(chosen.size());

    std::optional<EmpiricalScore> empirical;
    VariationalScore score = VariationalScore::dirac();
    if (config.method == Method::Vsd) {
      switch (config.estimator) {
        case EstimatorKind::Dirac:
          break;
        case EstimatorKind::Empirical:
          empirical.emplace(state.ensemble, renderer);
          score = VariationalScore::empirical(*empirical);
          break;
        case EstimatorKind::Learned:
          score = VariationalScore::learned(*state.estimator);
          break;
      }
    }

    std::vector<Vector> grads(chosen.size());
    std::vector<double> t_means(chosen.size(), 0.0);
    std::exception_ptr error;
#ifdef VSDLAB_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t j = 0; j < slots; ++j) {
      try {
        const auto ju = static_cast<std::size_t>(j);
        const Vector& theta = state.ensemble[chosen[ju]];
        Rng rng(config.seed, Stream::Draw, static_cast<std::uint64_t>(step), ju);
        Vector g = Vector::Zero(theta.size());
        double t_sum = 0.0;
        for (std::int64_t b = 0; b < config.mc_batch; ++b) {
          const double t = sample_time(step, config.time_schedule, rng);
          const Camera c = renderer.sample_camera(rng);
          const Vector noise = rng.normal_vector(m);
          const double omega = weight(t);
          if (config.method == Method::Sds) {
            g += sds_gradient(theta, guided, renderer, t, noise, c, omega);
          } else {
            g += vsd_gradient(theta, guided, score, renderer, t, noise, c, omega);
          }
          t_sum += t;
        }
        grads[ju] = g * inv_mc;
        t_means[ju] = t_sum * inv_mc;
      } catch (...) {
#ifdef VSDLAB_HAVE_OPENMP
#pragma omp critical
#endif
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);

    StepRecord record{step, 0.0, 0.0, kNaN};
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const std::size_t i = chosen[j];
      const double norm = grads[j].norm();
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient at step " + std::to_string(step) + ", particle " +
                           std::to_string(i) + ", t=" + format_double(t_means[j]));
      }
      if (state.particle_optimizers.empty()) {
        state.ensemble[i] -= config.particle_optimizer.lr * grads[j];
      } else {
        state.particle_optimizers[i].step(state.ensemble[i], grads[j]);
      }
      state.last_grad_norm[i] = norm;
      state.last_t[i] = t_means[j];
      record.mean_grad_norm += norm;
      record.mean_t += t_means[j];
    }
    record.mean_grad_norm /= static_cast<double>(chosen.size());
    record.mean_t /= static_cast<double>(chosen.size());

    if (state.estimator) {
      Rng rng(config.seed, Stream::EstimatorTrain, static_cast<std::uint64_t>(step));
      record.est_loss = train_step(*state.estimator, state.ensemble, renderer, rng,
                                   config.learned.optimizer.lr,
                                   config.time_schedule.range_at(step));
    }
    state.last_est_loss = record.est_loss;
    trajectory.steps.push_back(record);
    state.next_step = step + 1;

    const std::int64_t completed = step + 1;
    if (completed % config.snapshot_stride == 0 || completed == config.steps) {
      trajectory.snapshots.push_back(take_snapshot(state, completed));
    }
  }
}

RunResult run(const DistillConfig& config, const GuidedModel& guided, const Renderer& renderer) {
  DistillState state = initialize(config, renderer);
  Trajectory trajectory;
  advance(state, config, guided, renderer, config.steps, trajectory);
  return {state.ensemble, std::move(trajectory), std::move(state)};
}

}  // namespace vsdlab
