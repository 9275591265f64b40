#include "vsdlab/sampler.hpp"

#include "vsdlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace vsdlab {

namespace {

constexpr double kEdge = 0.02;

}  // namespace

std::vector<Vector> ancestral_sample(const GuidedModel& guided, const SamplerConfig& config) {
  if (config.n_steps < 1) throw InvariantError("sampler.steps must be >= 1");
  if (config.n_samples < 0) throw InvariantError("sampler.samples must be >= 0");
  const Eigen::Index d = guided.dimension();
  const auto n = static_cast<std::size_t>(config.n_samples);
  std::vector<Vector> out(n);

  std::vector<double> grid(static_cast<std::size_t>(config.n_steps) + 1);
  const double h = (1.0 - 2.0 * kEdge) / static_cast<double>(config.n_steps);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = (1.0 - kEdge) - h * static_cast<double>(k);
  grid.back() = kEdge;

  std::exception_ptr error;
#ifdef VSDLAB_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t chain = 0; chain < static_cast<std::int64_t>(n); ++chain) {
    try {
      Rng rng(config.seed, Stream::Sampler, static_cast<std::uint64_t>(chain));
      Vector x = rng.normal_vector(d);
      for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const auto [a_t, s_t] = alpha_sigma(grid[k]);
        const auto [a_s, s_s] = alpha_sigma(grid[k + 1]);
        const Vector eps = noise_prediction(guided, x, grid[k]);
        const Vector x0 = (x - s_t * eps) / a_t;
        // Gaussian posterior q(x_s | x_t, x0) of the forward process.
        const double a_ts = a_t / a_s;
        const double var_ts = s_t * s_t - a_ts * a_ts * s_s * s_s;
        const double inv_var_t = 1.0 / (s_t * s_t);
        const Vector mean = (a_ts * s_s * s_s * inv_var_t) * x + (a_s * var_ts * inv_var_t) * x0;
        const double std_post = std::sqrt(std::max(0.0, var_ts * s_s * s_s * inv_var_t));
        x = mean + std_post * rng.normal_vector(d);
      }
      // Final step to t = 0 carries no noise: the posterior collapses onto x0.
      const double t_last = grid.back();
      const auto [a, s] = alpha_sigma(t_last);
      const Vector x0 = (x - s * noise_prediction(guided, x, t_last)) / a;
      if (!x0.allFinite()) throw NumericError("ancestral sampler produced a non-finite sample");
      out[static_cast<std::size_t>(chain)] = x0;
    } catch (...) {
#ifdef VSDLAB_HAVE_OPENMP
#pragma omp critical
#endif
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<std::size_t> mode_assign(const std::vector<Vector>& samples,
                                     const GaussianMixture& model) {
  std::vector<std::size_t> hist(model.size(), 0);
  for (const auto& x : samples) {
    const Vector r = model.responsibilities(x);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < r.size(); ++k) {
      if (r[k] > r[best]) best = k;
    }
    ++hist[static_cast<std::size_t>(best)];
  }
  return hist;
}

}  // namespace vsdlab
