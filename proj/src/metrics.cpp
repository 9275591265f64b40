#include "vsdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace vsdlab {

namespace {

constexpr double kSkipBelow = 1e-300;
constexpr double kDivergenceFloor = 1e-12;

}  // namespace

GridSpec GridSpec::square(Eigen::Index dim, double half_width, std::int64_t points) {
  if (points < 0) points = dim == 1 ? 512 : 256;
  GridSpec g;
  for (Eigen::Index k = 0; k < dim; ++k) {
    g.bounds.push_back({-half_width, half_width});
    g.points.push_back(points);
  }
  return g;
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (auto p : points) n *= static_cast<std::size_t>(p);
  return n;
}

void GridSpec::validate() const {
  if (bounds.empty() || bounds.size() > 2 || bounds.size() != points.size()) {
    throw InvariantError("grid must be one- or two-dimensional");
  }
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    if (points[k] < 16) throw InvariantError("grid needs at least 16 points per dimension");
    if (!std::isfinite(bounds[k].lo) || !std::isfinite(bounds[k].hi) || !(bounds[k].lo < bounds[k].hi)) {
      throw InvariantError("grid bounds must be finite with lower < upper");
    }
  }
}

std::vector<double> GridSpec::axis(Eigen::Index k) const {
  const auto ku = static_cast<std::size_t>(k);
  const auto n = static_cast<std::size_t>(points[ku]);
  std::vector<double> xs(n);
  const double lo = bounds[ku].lo;
  const double step = (bounds[ku].hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) xs[i] = lo + step * static_cast<double>(i);
  xs.back() = bounds[ku].hi;
  return xs;
}

Vector GridSpec::node(std::size_t i) const {
  const Eigen::Index d = dimension();
  Vector x(d);
  for (Eigen::Index k = d - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto n = static_cast<std::size_t>(points[ku]);
    const std::size_t j = i % n;
    i /= n;
    const double step = (bounds[ku].hi - bounds[ku].lo) / static_cast<double>(n - 1);
    x[k] = j + 1 == n ? bounds[ku].hi : bounds[ku].lo + step * static_cast<double>(j);
  }
  return x;
}

double GridSpec::weight(std::size_t i) const {
  double w = 1.0;
  for (Eigen::Index k = dimension() - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto n = static_cast<std::size_t>(points[ku]);
    const std::size_t j = i % n;
    i /= n;
    const double step = (bounds[ku].hi - bounds[ku].lo) / static_cast<double>(n - 1);
    w *= (j == 0 || j + 1 == n) ? 0.5 * step : step;
  }
  return w;
}

std::vector<double> evaluate_on_grid(const LogDensityFn& log_density, const GridSpec& grid) {
  grid.validate();
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_density(grid.node(i));
  return out;
}

KlResult grid_kl(const std::vector<double>& log_q, const std::vector<double>& log_p,
                 const GridSpec& grid) {
  grid.validate();
  const std::size_t n = grid.size();
  if (log_q.size() != n || log_p.size() != n) throw DimensionError("grid_kl: value count mismatch");

  auto log_mass = [&](const std::vector<double>& lv) {
    const double m = *std::max_element(lv.begin(), lv.end());
    if (!std::isfinite(m)) throw NumericError("grid_kl: density vanishes on the whole grid");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += grid.weight(i) * std::exp(lv[i] - m);
    return m + std::log(s);
  };
  const double log_zq = log_mass(log_q);
  const double log_zp = log_mass(log_p);

  KlResult r;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::exp(log_q[i]);
    if (!(q >= kSkipBelow)) continue;
    if (!(std::exp(log_p[i]) > 0.0) && q > kDivergenceFloor) {
      r.divergent = true;
      continue;
    }
    const double qn = std::exp(log_q[i] - log_zq);
    r.value += grid.weight(i) * qn * ((log_q[i] - log_zq) - (log_p[i] - log_zp));
  }
  return r;
}

KlResult grid_kl(const LogDensityFn& log_q, const LogDensityFn& log_p, const GridSpec& grid) {
  return grid_kl(evaluate_on_grid(log_q, grid), evaluate_on_grid(log_p, grid), grid);
}

std::vector<double> empirical_log_density_on_grid(const ParticleEnsemble& ensemble,
                                                  const Renderer& renderer, const Camera& c,
                                                  double t, const GridSpec& grid) {
  grid.validate();
  if (grid.dimension() != renderer.image_dim()) {
    throw DimensionError("objective grid dimension must equal the renderer image_dim");
  }
  const auto [alpha, sigma] = alpha_sigma(t);
  if (!(sigma > 0.0)) throw SingularTimeError("smoothed empirical density requires t > 0");
  const auto n = static_cast<Eigen::Index>(ensemble.size());
  const Eigen::Index m = renderer.image_dim();
  Matrix y(m, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y.col(i) = alpha * renderer.render(ensemble[static_cast<std::size_t>(i)], c);
  }
  const double inv = 0.5 / (sigma * sigma);
  auto kernel = [&](Eigen::Index k) {
    const std::vector<double> xs = grid.axis(k);
    Matrix g(static_cast<Eigen::Index>(xs.size()), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index p = 0; p < g.rows(); ++p) {
        const double d = xs[static_cast<std::size_t>(p)] - y(k, i);
        g(p, i) = std::exp(-d * d * inv);
      }
    }
    return g;
  };
  const double log_norm = -std::log(static_cast<double>(n)) -
                          0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi * sigma * sigma);
  std::vector<double> out(grid.size());
  if (m == 1) {
    const Vector q = kernel(0).rowwise().sum();
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::log(q[static_cast<Eigen::Index>(p)]) + log_norm;
  } else {
    const Matrix q = kernel(0) * kernel(1).transpose();
    const auto n1 = q.cols();
    for (std::size_t p = 0; p < out.size(); ++p) {
      const auto row = static_cast<Eigen::Index>(p) / n1;
      const auto col = static_cast<Eigen::Index>(p) % n1;
      out[p] = std::log(q(row, col)) + log_norm;
    }
  }
  return out;
}

std::vector<Camera> objective_cameras(const Renderer& renderer, std::size_t count) {
  if (renderer.kind() == RendererKind::Identity) return {Camera{}};
  std::vector<Camera> cams;
  for (std::size_t k = 0; k < count; ++k) {
    cams.push_back({2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count)});
  }
  return cams;
}

double distillation_objective(const ParticleEnsemble& ensemble, const Renderer& renderer,
                              const GuidedModel& guided, const GridSpec& grid,
                              const std::vector<double>& t_samples,
                              const std::vector<Camera>& cameras) {
  if (ensemble.empty()) throw InvariantError("objective needs a nonempty ensemble");
  if (t_samples.empty() || cameras.empty()) throw InvariantError("objective needs t samples and cameras");
  double total = 0.0;
  for (double t : t_samples) {
    if (!(t > 0.0 && t < 1.0)) {
      throw DomainError("objective times must lie in (0, 1); sigma/alpha is singular at t = 1");
    }
    const auto [alpha, sigma] = alpha_sigma(t);
    const double w = (sigma / alpha) * weight(t);
    const GaussianMixture& target = guided.conditional;
    const std::vector<double> log_p =
        evaluate_on_grid([&](const Vector& x) { return target.diffused_log_density(x, t); }, grid);
    for (const Camera& c : cameras) {
      const auto log_q = empirical_log_density_on_grid(ensemble, renderer, c, t, grid);
      total += w * grid_kl(log_q, log_p, grid).value;
    }
  }
  return total / static_cast<double>(t_samples.size() * cameras.size());
}

double distillation_objective(const ParticleEnsemble& ensemble, const Renderer& renderer,
                              const GuidedModel& guided, const GridSpec& grid,
                              const std::vector<double>& t_samples) {
  return distillation_objective(ensemble, renderer, guided, grid, t_samples,
                                objective_cameras(renderer));
}

double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvariantError("W2 needs nonempty sample sets");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Breakpoints of both quantile functions on the common grid 1 / (na nb).
  const auto na = static_cast<std::uint64_t>(a.size());
  const auto nb = static_cast<std::uint64_t>(b.size());
  std::uint64_t i = 0, j = 0, prev = 0;
  double acc = 0.0;
  while (i < na && j < nb) {
    const std::uint64_t next_a = (i + 1) * nb;
    const std::uint64_t next_b = (j + 1) * na;
    const std::uint64_t next = std::min(next_a, next_b);
    const double diff = a[i] - b[j];
    acc += static_cast<double>(next - prev) * diff * diff;
    prev = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return acc / (static_cast<double>(na) * static_cast<double>(nb));
}

double sliced_w2(const std::vector<Vector>& a, const std::vector<Vector>& b,
                 std::int64_t n_projections, Rng& rng) {
  if (a.empty() || b.empty()) throw InvariantError("sliced W2 needs nonempty sample sets");
  if (n_projections < 1) throw InvariantError("sliced W2 needs at least one projection");
  const Eigen::Index d = a.front().size();
  for (const auto* set : {&a, &b}) {
    for (const auto& v : *set) require_dim(v, d, "sliced W2 sample");
  }
  std::vector<double> pa(a.size()), pb(b.size());
  double total = 0.0;
  for (std::int64_t p = 0; p < n_projections; ++p) {
    Vector dir = rng.normal_vector(d);
    while (dir.norm() == 0.0) dir = rng.normal_vector(d);
    dir.normalize();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dir.dot(a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dir.dot(b[i]);
    total += std::sqrt(w2_squared_1d(pa, pb));
  }
  return total / static_cast<double>(n_projections);
}

double diversity(const std::vector<Vector>& points) {
  if (points.size() < 2) throw InvariantError("diversity needs at least two points");
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) sum += (points[i] - points[j]).norm();
  }
  const double n = static_cast<double>(points.size());
  return sum / (0.5 * n * (n - 1.0));
}

double finite_diff_score_audit(const GaussianMixture& model, const std::vector<Vector>& points,
                               double h) {
  double worst = 0.0;
  const Eigen::Index d = model.dimension();
  for (const auto& x : points) {
    const Vector s = model.score(x);
    Vector fd(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      Vector xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      fd[k] = (model.log_density(xp) - model.log_density(xm)) / (2.0 * h);
    }
    const double err = (fd - s).cwiseAbs().maxCoeff() / std::max(s.cwiseAbs().maxCoeff(), 1.0);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace vsdlab
