#pragma once

#include "vsdlab/mlp.hpp"
#include "vsdlab/renderer.hpp"
#include "vsdlab/rng.hpp"
#include "vsdlab/schedule.hpp"
#include "vsdlab/types.hpp"

#include <vector>

namespace vsdlab {

// The n parameters representing the variational distribution over theta.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  explicit ParticleEnsemble(std::vector<Vector> particles);

  std::size_t size() const { return particles_.size(); }
  bool empty() const { return particles_.empty(); }
  Eigen::Index dimension() const { return dim_; }

  const Vector& operator[](std::size_t i) const { return particles_[i]; }
  Vector& operator[](std::size_t i) { return particles_[i]; }
  const std::vector<Vector>& particles() const { return particles_; }

  bool operator==(const ParticleEnsemble& other) const { return particles_ == other.particles_; }

 private:
  Eigen::Index dim_ = 0;
  std::vector<Vector> particles_;
};

// Returns the injected noise: the variational score of a single Dirac
// particle, which reduces VSD to SDS.
Vector dirac_estimate(const Vector& x_t, double t, const Vector& noise);

// Exact -sigma_t * grad log q_t for the Gaussian-smoothed empirical render
// distribution q_t = (1/n) sum_i N(alpha_t g(theta_i, c), sigma_t^2 I).
// Particles are held in lexicographic order so the result does not depend on
// the ensemble's ordering, bit for bit.
class EmpiricalScore {
 public:
  EmpiricalScore(const ParticleEnsemble& ensemble, const Renderer& renderer);

  Vector estimate(const Vector& x_t, double t, const Camera& c) const;
  // log q_t(x) for the same smoothed empirical distribution.
  double log_density(const Vector& x, double t, const Camera& c) const;

  const Matrix& sorted_particles() const { return particles_; }

 private:
  // Renders of the sorted particles (image_dim x n); `scratch` backs
  // non-identity renders.
  const Matrix& renders(const Camera& c, Matrix& scratch) const;

  Renderer renderer_;
  Matrix particles_;  // param_dim x n, columns sorted lexicographically
};

Vector empirical_estimate(const ParticleEnsemble& ensemble, const Renderer& renderer,
                          const Camera& c, const Vector& x_t, double t);

struct LearnedEstimatorConfig {
  Eigen::Index hidden = 64;
  std::int64_t batch = 1;
  OptimizerConfig optimizer{};

  bool operator==(const LearnedEstimatorConfig&) const = default;
};

// Camera-conditioned noise predictor eps_phi(x_t, t, c) trained with the
// denoising objective on rendered particles.
class LearnedEstimator {
 public:
  LearnedEstimator(Eigen::Index image_dim, const LearnedEstimatorConfig& config, Rng& init_rng);

  // Network input: (x_t, sin 2 pi t, cos 2 pi t, t, cos c, sin c).
  Vector features(const Vector& x_t, double t, const Camera& c) const;

  Eigen::Index image_dim() const { return image_dim_; }
  const LearnedEstimatorConfig& config() const { return config_; }
  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }
  Optimizer& optimizer() { return opt_; }
  const Optimizer& optimizer() const { return opt_; }
  std::int64_t steps() const { return opt_.steps(); }

 private:
  Eigen::Index image_dim_;
  LearnedEstimatorConfig config_;
  Mlp net_;
  Optimizer opt_;
};

Vector learned_estimate(const LearnedEstimator& est, const Vector& x_t, double t, const Camera& c);

// One stochastic gradient step on the denoising loss over a batch of
// (particle, t, noise, camera) draws, t uniform in `times`. Returns the
// pre-step batch loss. `lr` overrides the configured learning rate.
double train_step(LearnedEstimator& est, const ParticleEnsemble& ensemble,
                  const Renderer& renderer, Rng& rng, double lr,
                  Interval times = {0.02, 0.98});

}  // namespace vsdlab
