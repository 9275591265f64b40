#pragma once

#include "vsdlab/rng.hpp"
#include "vsdlab/types.hpp"

namespace vsdlab {

struct Camera {
  double angle = 0.0;

  bool operator==(const Camera&) const = default;
};

enum class RendererKind { Identity, LinearProjection };

// Linear differentiable renderer g(theta, c).
//   Identity:          g(theta, c) = theta, camera ignored.
//   LinearProjection:  row k is the unit vector at angle c + k pi / m embedded
//                      in the first two parameter coordinates.
class Renderer {
 public:
  static Renderer identity(Eigen::Index dim);
  static Renderer linear_projection(Eigen::Index param_dim = 2, Eigen::Index image_dim = 1);

  RendererKind kind() const { return kind_; }
  Eigen::Index param_dim() const { return param_dim_; }
  Eigen::Index image_dim() const { return image_dim_; }

  Camera sample_camera(Rng& rng) const;
  Vector render(const Vector& theta, const Camera& c) const;
  Vector apply_jacobian_transpose(const Vector& theta, const Camera& c, const Vector& v) const;
  // The (image_dim x param_dim) Jacobian; constant in theta.
  Matrix jacobian(const Camera& c) const;

  bool operator==(const Renderer&) const = default;

 private:
  Renderer(RendererKind kind, Eigen::Index param_dim, Eigen::Index image_dim);

  RendererKind kind_;
  Eigen::Index param_dim_;
  Eigen::Index image_dim_;
};

}  // namespace vsdlab
