#pragma once

#include "vsdlab/gaussian_mixture.hpp"
#include "vsdlab/renderer.hpp"
#include "vsdlab/rng.hpp"
#include "vsdlab/schedule.hpp"
#include "vsdlab/variational_score.hpp"

#include <functional>
#include <vector>

namespace vsdlab {

// Tensor-product quadrature grid in one or two dimensions.
struct GridSpec {
  std::vector<Interval> bounds;
  std::vector<std::int64_t> points;

  static GridSpec square(Eigen::Index dim, double half_width = 8.0, std::int64_t points = -1);

  Eigen::Index dimension() const { return static_cast<Eigen::Index>(bounds.size()); }
  std::size_t size() const;
  // Throws InvariantError unless d in {1, 2}, >= 16 points per axis and
  // finite bounds with lo < hi.
  void validate() const;
  // Node coordinates along one axis.
  std::vector<double> axis(Eigen::Index k) const;
  // Node i in row-major order (last axis fastest).
  Vector node(std::size_t i) const;
  // Trapezoidal weight of node i.
  double weight(std::size_t i) const;

  bool operator==(const GridSpec&) const = default;
};

using LogDensityFn = std::function<double(const Vector&)>;

std::vector<double> evaluate_on_grid(const LogDensityFn& log_density, const GridSpec& grid);

struct KlResult {
  double value = 0.0;
  // Set when p vanishes on the grid where q exceeds 1e-12.
  bool divergent = false;
};

// Trapezoidal KL(q || p) with both densities renormalized on the grid, from
// log-density values at the grid nodes. Nodes with q < 1e-300 are skipped.
KlResult grid_kl(const std::vector<double>& log_q, const std::vector<double>& log_p,
                 const GridSpec& grid);
KlResult grid_kl(const LogDensityFn& log_q, const LogDensityFn& log_p, const GridSpec& grid);

// Log density of the smoothed empirical render distribution on the grid
// (separable evaluation, one pass per axis).
std::vector<double> empirical_log_density_on_grid(const ParticleEnsemble& ensemble,
                                                  const Renderer& renderer, const Camera& c,
                                                  double t, const GridSpec& grid);

// Cameras averaged over by the objective: the single dummy camera for the
// identity renderer, otherwise `count` evenly spaced angles.
std::vector<Camera> objective_cameras(const Renderer& renderer, std::size_t count = 16);

// Mean over t in t_samples and over cameras of
//   (sigma_t / alpha_t) omega(t) KL(q_t^mu(.|c) || p_t),
// p_t the diffused conditional target.
double distillation_objective(const ParticleEnsemble& ensemble, const Renderer& renderer,
                              const GuidedModel& guided, const GridSpec& grid,
                              const std::vector<double>& t_samples,
                              const std::vector<Camera>& cameras);
double distillation_objective(const ParticleEnsemble& ensemble, const Renderer& renderer,
                              const GuidedModel& guided, const GridSpec& grid,
                              const std::vector<double>& t_samples);

// Exact 1D squared W2 between two empirical measures via quantile coupling.
double w2_squared_1d(std::vector<double> a, std::vector<double> b);

// Average over random unit directions of the 1D W2 between projections.
double sliced_w2(const std::vector<Vector>& a, const std::vector<Vector>& b,
                 std::int64_t n_projections, Rng& rng);

// Mean pairwise Euclidean distance; needs at least two points.
double diversity(const std::vector<Vector>& points);

// Worst relative error (against max(|score|, 1)) of the analytic score versus
// central differences of log_density with step h.
double finite_diff_score_audit(const GaussianMixture& model, const std::vector<Vector>& points,
                               double h = 1e-5);

}  // namespace vsdlab
