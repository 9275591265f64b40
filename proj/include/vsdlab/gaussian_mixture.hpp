#pragma once

#include "vsdlab/rng.hpp"
#include "vsdlab/types.hpp"

#include <vector>

namespace vsdlab {

struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;
};

// Finite Gaussian mixture with closed-form forward diffusion. Immutable after
// construction; each component's covariance is validated by Cholesky and its
// eigendecomposition cached so diffused quantities never refactorize.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  static GaussianMixture standard_normal(Eigen::Index dim);
  // Single isotropic component N(mean, variance * I).
  static GaussianMixture isotropic(const Vector& mean, double variance);

  Eigen::Index dimension() const { return dim_; }
  std::size_t size() const { return comps_.size(); }
  const GaussianComponent& component(std::size_t i) const { return comps_[i].spec; }

  // Mixture of the same weights with means alpha_t m_i and covariances
  // alpha_t^2 S_i + sigma_t^2 I.
  GaussianMixture diffused(double t) const;

  double log_density(const Vector& x) const;
  Vector score(const Vector& x) const;
  // Posterior component probabilities, computed in log space.
  Vector responsibilities(const Vector& x) const;

  // Same queries against diffused(t) without materializing it.
  double diffused_log_density(const Vector& x, double t) const;
  Vector diffused_score(const Vector& x, double t) const;

  std::vector<Vector> sample(std::size_t n, Rng& rng) const;

  bool operator==(const GaussianMixture& other) const;

 private:
  struct Cached {
    GaussianComponent spec;
    Matrix chol;           // lower Cholesky factor of cov
    Matrix eigvecs;        // columns: orthonormal eigenvectors of cov
    Vector eigvals;        // matching eigenvalues (all > 0)
    double log_weight = 0.0;
  };

  // Per-component log N(x; alpha m, alpha^2 S + sigma^2 I) into `out`.
  void component_log_densities(const Vector& x, double alpha, double sigma, Vector& out) const;

  Eigen::Index dim_ = 0;
  std::vector<Cached> comps_;
};

// Conditional/unconditional pair combined by classifier-free guidance.
struct GuidedModel {
  GaussianMixture conditional;
  GaussianMixture unconditional;
  double guidance_scale = 0.0;

  GuidedModel(GaussianMixture cond, GaussianMixture uncond, double s);

  Eigen::Index dimension() const { return conditional.dimension(); }
};

// Broadened copy of a conditional mixture standing in for the empty prompt:
// covariances times cov_scale, means times mean_scale.
GaussianMixture broadened(const GaussianMixture& model, double cov_scale = 4.0,
                          double mean_scale = 0.5);

// Classifier-free guidance combination (1 + s) eps_cond - s eps_uncond.
Vector guide(const Vector& eps_cond, const Vector& eps_uncond, double s);

// Guided noise prediction (1 + s) eps_cond - s eps_uncond, where each eps is
// -sigma_t times the score of the diffused mixture. Requires sigma_t > 0.
Vector noise_prediction(const GuidedModel& guided, const Vector& x_t, double t);

// log-sum-exp over a vector.
double log_sum_exp(const Vector& v);

}  // namespace vsdlab
