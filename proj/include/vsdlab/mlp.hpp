#pragma once

#include "vsdlab/rng.hpp"
#include "vsdlab/types.hpp"

#include <span>
#include <string>

namespace vsdlab {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 1e-4;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

// First-order optimizer over a flat parameter vector. Holds its own moment
// buffers; step() applies one update in place.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, Eigen::Index n_params);

  void step(Vector& params, const Vector& grad);

  const OptimizerConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return steps_; }

  // Moment buffers, exposed for checkpointing.
  Vector& first_moment() { return m_; }
  Vector& second_moment() { return v_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  OptimizerConfig config_;
  Vector m_;
  Vector v_;
  std::int64_t steps_ = 0;
};

// Fully connected network: input -> [hidden, tanh] x 2 -> output (linear).
// Parameters live in one flat vector in the order W1 b1 W2 b2 W3 b3, each
// matrix column-major. The output layer starts at zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index output_dim, Rng& init_rng);

  Eigen::Index input_dim() const { return in_; }
  Eigen::Index hidden() const { return hidden_; }
  Eigen::Index output_dim() const { return out_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Vector forward(const Vector& input) const;

  // Mean over the batch (columns) of ||f(x) - target||^2. Accumulates the
  // exact gradient with respect to the parameters into `grad` (resized).
  double loss_and_gradient(const Matrix& inputs, const Matrix& targets, Vector& grad) const;

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

 private:
  struct Layout {
    Eigen::Index w1, b1, w2, b2, w3, b3, total;
  };
  Layout layout() const;

  Eigen::Index in_ = 0;
  Eigen::Index hidden_ = 0;
  Eigen::Index out_ = 0;
  Vector params_;
};

}  // namespace vsdlab
