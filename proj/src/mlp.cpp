#include "vsdlab/mlp.hpp"

#include <cmath>

namespace vsdlab {

Optimizer::Optimizer(OptimizerConfig config, Eigen::Index n_params)
    : config_(config), m_(Vector::Zero(n_params)), v_(Vector::Zero(n_params)) {}

void Optimizer::step(Vector& params, const Vector& grad) {
  ++steps_;
  const double lr = config_.lr;
  if (config_.kind == OptimizerKind::Sgd) {
    if (config_.momentum == 0.0) {
      params.noalias() -= lr * grad;
      return;
    }
    m_ = config_.momentum * m_ + grad;
    params.noalias() -= lr * m_;
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

Mlp::Layout Mlp::layout() const {
  Layout l{};
  l.w1 = 0;
  l.b1 = l.w1 + hidden_ * in_;
  l.w2 = l.b1 + hidden_;
  l.b2 = l.w2 + hidden_ * hidden_;
  l.w3 = l.b2 + hidden_;
  l.b3 = l.w3 + out_ * hidden_;
  l.total = l.b3 + out_;
  return l;
}

Mlp::Mlp(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index output_dim, Rng& init_rng)
    : in_(input_dim), hidden_(hidden), out_(output_dim) {
  if (in_ <= 0 || hidden_ <= 0 || out_ <= 0) throw InvariantError("network sizes must be positive");
  const Layout l = layout();
  params_ = Vector::Zero(l.total);
  // Glorot-uniform hidden weights, zero biases, zero output layer.
  const double r1 = std::sqrt(6.0 / static_cast<double>(in_ + hidden_));
  const double r2 = std::sqrt(6.0 / static_cast<double>(hidden_ + hidden_));
  for (Eigen::Index i = 0; i < hidden_ * in_; ++i) params_[l.w1 + i] = init_rng.uniform(-r1, r1);
  for (Eigen::Index i = 0; i < hidden_ * hidden_; ++i) params_[l.w2 + i] = init_rng.uniform(-r2, r2);
}

Vector Mlp::forward(const Vector& input) const {
  require_dim(input, in_, "network input");
  const Layout l = layout();
  using CMap = Eigen::Map<const Matrix>;
  using VMap = Eigen::Map<const Vector>;
  const CMap w1(params_.data() + l.w1, hidden_, in_);
  const VMap b1(params_.data() + l.b1, hidden_);
  const CMap w2(params_.data() + l.w2, hidden_, hidden_);
  const VMap b2(params_.data() + l.b2, hidden_);
  const CMap w3(params_.data() + l.w3, out_, hidden_);
  const VMap b3(params_.data() + l.b3, out_);
  const Vector h1 = (w1 * input + b1).array().tanh();
  const Vector h2 = (w2 * h1 + b2).array().tanh();
  return w3 * h2 + b3;
}

double Mlp::loss_and_gradient(const Matrix& inputs, const Matrix& targets, Vector& grad) const {
  if (inputs.rows() != in_ || targets.rows() != out_ || inputs.cols() != targets.cols() ||
      inputs.cols() == 0) {
    throw DimensionError("network batch shape mismatch");
  }
  const Layout l = layout();
  using CMap = Eigen::Map<const Matrix>;
  using VMap = Eigen::Map<const Vector>;
  const CMap w1(params_.data() + l.w1, hidden_, in_);
  const VMap b1(params_.data() + l.b1, hidden_);
  const CMap w2(params_.data() + l.w2, hidden_, hidden_);
  const VMap b2(params_.data() + l.b2, hidden_);
  const CMap w3(params_.data() + l.w3, out_, hidden_);
  const VMap b3(params_.data() + l.b3, out_);

  const auto batch = inputs.cols();
  const Matrix h1 = ((w1 * inputs).colwise() + b1).array().tanh();
  const Matrix h2 = ((w2 * h1).colwise() + b2).array().tanh();
  const Matrix out = (w3 * h2).colwise() + b3;
  const Matrix resid = out - targets;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double loss = resid.squaredNorm() * inv_batch;

  grad.setZero(l.total);
  Eigen::Map<Matrix> gw1(grad.data() + l.w1, hidden_, in_);
  Eigen::Map<Vector> gb1(grad.data() + l.b1, hidden_);
  Eigen::Map<Matrix> gw2(grad.data() + l.w2, hidden_, hidden_);
  Eigen::Map<Vector> gb2(grad.data() + l.b2, hidden_);
  Eigen::Map<Matrix> gw3(grad.data() + l.w3, out_, hidden_);
  Eigen::Map<Vector> gb3(grad.data() + l.b3, out_);

  const Matrix d_out = (2.0 * inv_batch) * resid;
  gw3.noalias() = d_out * h2.transpose();
  gb3 = d_out.rowwise().sum();
  const Matrix d_h2 = (w3.transpose() * d_out).array() * (1.0 - h2.array().square());
  gw2.noalias() = d_h2 * h1.transpose();
  gb2 = d_h2.rowwise().sum();
  const Matrix d_h1 = (w2.transpose() * d_h2).array() * (1.0 - h1.array().square());
  gw1.noalias() = d_h1 * inputs.transpose();
  gb1 = d_h1.rowwise().sum();
  return loss;
}

}  // namespace vsdlab
