#include "vsdlab/renderer.hpp"

#include <cmath>
#include <numbers>

namespace vsdlab {

Renderer::Renderer(RendererKind kind, Eigen::Index param_dim, Eigen::Index image_dim)
    : kind_(kind), param_dim_(param_dim), image_dim_(image_dim) {
  if (param_dim <= 0 || image_dim <= 0) throw InvariantError("renderer dimensions must be positive");
  if (kind == RendererKind::Identity && image_dim != param_dim) {
    throw InvariantError("identity renderer requires image_dim == param_dim");
  }
  if (kind == RendererKind::LinearProjection && (param_dim < 2 || image_dim > param_dim)) {
    throw InvariantError("linear projection requires param_dim >= 2 and image_dim <= param_dim");
  }
}

Renderer Renderer::identity(Eigen::Index dim) { return {RendererKind::Identity, dim, dim}; }

Renderer Renderer::linear_projection(Eigen::Index param_dim, Eigen::Index image_dim) {
  return {RendererKind::LinearProjection, param_dim, image_dim};
}

Camera Renderer::sample_camera(Rng& rng) const {
  if (kind_ == RendererKind::Identity) return {};
  return {rng.uniform(0.0, 2.0 * std::numbers::pi)};
}

Matrix Renderer::jacobian(const Camera& c) const {
  if (!std::isfinite(c.angle)) throw DomainError("camera angle must be finite");
  if (kind_ == RendererKind::Identity) return Matrix::Identity(param_dim_, param_dim_);
  Matrix j = Matrix::Zero(image_dim_, param_dim_);
  for (Eigen::Index k = 0; k < image_dim_; ++k) {
    const double a = c.angle + static_cast<double>(k) * std::numbers::pi / static_cast<double>(image_dim_);
    j(k, 0) = std::cos(a);
    j(k, 1) = std::sin(a);
  }
  return j;
}

Vector Renderer::render(const Vector& theta, const Camera& c) const {
  require_dim(theta, param_dim_, "render theta");
  if (kind_ == RendererKind::Identity) return theta;
  return jacobian(c) * theta;
}

Vector Renderer::apply_jacobian_transpose(const Vector& theta, const Camera& c,
                                          const Vector& v) const {
  require_dim(theta, param_dim_, "jacobian-transpose theta");
  require_dim(v, image_dim_, "jacobian-transpose cotangent");
  if (kind_ == RendererKind::Identity) return v;
  return jacobian(c).transpose() * v;
}

}  // namespace vsdlab
