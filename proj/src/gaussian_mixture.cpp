#include "vsdlab/gaussian_mixture.hpp"

#include "vsdlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace vsdlab {

namespace {

constexpr double kWeightTolerance = 1e-12;

}  // namespace

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components) {
  if (components.empty()) throw InvariantError("mixture needs at least one component");
  dim_ = components.front().mean.size();
  if (dim_ <= 0) throw InvariantError("mixture dimension must be positive");

  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw InvariantError("mixture weights must be strictly positive");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw InvariantError("mixture weights must sum to 1, got " + std::to_string(total));
  }

  comps_.reserve(components.size());
  for (auto& c : components) {
    if (c.mean.size() != dim_ || c.cov.rows() != dim_ || c.cov.cols() != dim_) {
      throw InvariantError("mixture components must share dimension " + std::to_string(dim_));
    }
    if (!c.mean.allFinite() || !c.cov.allFinite()) {
      throw InvariantError("mixture parameters must be finite");
    }
    const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
    if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InvariantError("mixture covariance must be symmetric");
    }
    Eigen::LLT<Matrix> llt(c.cov);
    if (llt.info() != Eigen::Success) {
      throw InvariantError("mixture covariance is not positive definite (Cholesky failed)");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c.cov);
    if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
      throw InvariantError("mixture covariance is not positive definite");
    }
    Cached cached;
    cached.chol = llt.matrixL();
    cached.eigvecs = eig.eigenvectors();
    cached.eigvals = eig.eigenvalues();
    cached.log_weight = std::log(c.weight);
    cached.spec = std::move(c);
    comps_.push_back(std::move(cached));
  }
}

GaussianMixture GaussianMixture::standard_normal(Eigen::Index dim) {
  return isotropic(Vector::Zero(dim), 1.0);
}

GaussianMixture GaussianMixture::isotropic(const Vector& mean, double variance) {
  return GaussianMixture({{1.0, mean, variance * Matrix::Identity(mean.size(), mean.size())}});
}

GaussianMixture GaussianMixture::diffused(double t) const {
  const auto [alpha, sigma] = alpha_sigma(t);
  std::vector<GaussianComponent> out;
  out.reserve(comps_.size());
  for (const auto& c : comps_) {
    Matrix cov = alpha * alpha * c.spec.cov;
    cov.diagonal().array() += sigma * sigma;
    out.push_back({c.spec.weight, alpha * c.spec.mean, std::move(cov)});
  }
  return GaussianMixture(std::move(out));
}

void GaussianMixture::component_log_densities(const Vector& x, double alpha, double sigma,
                                              Vector& out) const {
  require_dim(x, dim_, "mixture query");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  out.resize(static_cast<Eigen::Index>(comps_.size()));
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const auto& c = comps_[k];
    const Vector var = (alpha * alpha) * c.eigvals.array() + sigma * sigma;
    const Vector z = c.eigvecs.transpose() * (x - alpha * c.spec.mean);
    const double quad = (z.array().square() / var.array()).sum();
    const double log_det = var.array().log().sum();
    out[static_cast<Eigen::Index>(k)] =
        c.log_weight - 0.5 * (quad + log_det + static_cast<double>(dim_) * log_2pi);
  }
}

double GaussianMixture::diffused_log_density(const Vector& x, double t) const {
  const auto [alpha, sigma] = alpha_sigma(t);
  Vector logs;
  component_log_densities(x, alpha, sigma, logs);
  return log_sum_exp(logs);
}

Vector GaussianMixture::diffused_score(const Vector& x, double t) const {
  const auto [alpha, sigma] = alpha_sigma(t);
  Vector logs;
  component_log_densities(x, alpha, sigma, logs);
  const Vector resp = (logs.array() - log_sum_exp(logs)).exp();
  Vector g = Vector::Zero(dim_);
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const auto& c = comps_[k];
    const Vector var = (alpha * alpha) * c.eigvals.array() + sigma * sigma;
    const Vector z = c.eigvecs.transpose() * (x - alpha * c.spec.mean);
    g.noalias() -= resp[static_cast<Eigen::Index>(k)] *
                   (c.eigvecs * (z.array() / var.array()).matrix());
  }
  return g;
}

double GaussianMixture::log_density(const Vector& x) const { return diffused_log_density(x, 0.0); }

Vector GaussianMixture::score(const Vector& x) const { return diffused_score(x, 0.0); }

Vector GaussianMixture::responsibilities(const Vector& x) const {
  Vector logs;
  component_log_densities(x, 1.0, 0.0, logs);
  return (logs.array() - log_sum_exp(logs)).exp();
}

std::vector<Vector> GaussianMixture::sample(std::size_t n, Rng& rng) const {
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double cumulative = comps_[0].spec.weight;
    while (k + 1 < comps_.size() && u >= cumulative) {
      ++k;
      cumulative += comps_[k].spec.weight;
    }
    const auto& c = comps_[k];
    out.push_back(c.spec.mean + c.chol * rng.normal_vector(dim_));
  }
  return out;
}

bool GaussianMixture::operator==(const GaussianMixture& other) const {
  if (dim_ != other.dim_ || comps_.size() != other.comps_.size()) return false;
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const auto& a = comps_[k].spec;
    const auto& b = other.comps_[k].spec;
    if (a.weight != b.weight || a.mean != b.mean || a.cov != b.cov) return false;
  }
  return true;
}

GuidedModel::GuidedModel(GaussianMixture cond, GaussianMixture uncond, double s)
    : conditional(std::move(cond)), unconditional(std::move(uncond)), guidance_scale(s) {
  if (conditional.dimension() != unconditional.dimension()) {
    throw InvariantError("conditional and unconditional mixtures must share dimension");
  }
  if (!(s >= 0.0) || !std::isfinite(s)) throw InvariantError("guidance scale must be >= 0");
}

GaussianMixture broadened(const GaussianMixture& model, double cov_scale, double mean_scale) {
  std::vector<GaussianComponent> out;
  out.reserve(model.size());
  for (std::size_t k = 0; k < model.size(); ++k) {
    const auto& c = model.component(k);
    out.push_back({c.weight, mean_scale * c.mean, cov_scale * c.cov});
  }
  return GaussianMixture(std::move(out));
}

Vector guide(const Vector& eps_cond, const Vector& eps_uncond, double s) {
  require_dim(eps_uncond, eps_cond.size(), "guidance");
  // (1 + s) eps_c - s eps_u, arranged so identical predictions cancel exactly.
  return eps_cond + s * (eps_cond - eps_uncond);
}

Vector noise_prediction(const GuidedModel& guided, const Vector& x_t, double t) {
  const double sigma = alpha_sigma(t).sigma;
  if (!(sigma > 0.0)) throw SingularTimeError("noise prediction requires sigma_t > 0 (t > 0)");
  const double s = guided.guidance_scale;
  const Vector eps_c = -sigma * guided.conditional.diffused_score(x_t, t);
  if (s == 0.0) return eps_c;
  const Vector eps_u = -sigma * guided.unconditional.diffused_score(x_t, t);
  return guide(eps_c, eps_u, s);
}

}  // namespace vsdlab
