#include "vsdlab/variational_score.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>

namespace vsdlab {

ParticleEnsemble::ParticleEnsemble(std::vector<Vector> particles) : particles_(std::move(particles)) {
  if (!particles_.empty()) dim_ = particles_.front().size();
  for (const auto& p : particles_) {
    if (p.size() != dim_) throw InvariantError("ensemble particles must share dimension");
  }
}

Vector dirac_estimate(const Vector& /*x_t*/, double /*t*/, const Vector& noise) { return noise; }

EmpiricalScore::EmpiricalScore(const ParticleEnsemble& ensemble, const Renderer& renderer)
    : renderer_(renderer) {
  if (ensemble.empty()) throw InvariantError("empirical score needs a nonempty ensemble");
  if (ensemble.dimension() != renderer.param_dim()) {
    throw DimensionError("ensemble dimension does not match renderer param_dim");
  }
  const auto& ps = ensemble.particles();
  std::vector<std::size_t> order(ps.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(ps[a].begin(), ps[a].end(), ps[b].begin(), ps[b].end());
  });
  particles_.resize(ensemble.dimension(), static_cast<Eigen::Index>(ps.size()));
  for (std::size_t j = 0; j < order.size(); ++j) {
    particles_.col(static_cast<Eigen::Index>(j)) = ps[order[j]];
  }
}

const Matrix& EmpiricalScore::renders(const Camera& c, Matrix& scratch) const {
  if (renderer_.kind() == RendererKind::Identity) return particles_;
  scratch.noalias() = renderer_.jacobian(c) * particles_;
  return scratch;
}

namespace {

// Unnormalized log weights -||x - alpha y_i||^2 / (2 sigma^2); returns their
// maximum.
double smoothed_logits(const Matrix& y, const Vector& x, double alpha, double sigma,
                       Eigen::ArrayXd& logits) {
  const double inv = 0.5 / (sigma * sigma);
  logits = -inv * ((alpha * y).colwise() - x).colwise().squaredNorm().transpose().array();
  return logits.maxCoeff();
}

}  // namespace

Vector EmpiricalScore::estimate(const Vector& x_t, double t, const Camera& c) const {
  require_dim(x_t, renderer_.image_dim(), "empirical estimate x_t");
  const auto [alpha, sigma] = alpha_sigma(t);
  if (!(sigma > 0.0)) throw SingularTimeError("empirical estimate requires sigma_t > 0 (t > 0)");
  Matrix projected;
  const Matrix& y = renders(c, projected);
  Eigen::ArrayXd w;
  const double max_logit = smoothed_logits(y, x_t, alpha, sigma, w);
  w = (w - max_logit).exp();
  const double total = w.sum();
  // -sigma * score = sum_i r_i (x - alpha y_i) / sigma
  const Vector acc = x_t * total - alpha * (y * w.matrix());
  return acc / (total * sigma);
}

double EmpiricalScore::log_density(const Vector& x, double t, const Camera& c) const {
  require_dim(x, renderer_.image_dim(), "empirical density x");
  const auto [alpha, sigma] = alpha_sigma(t);
  if (!(sigma > 0.0)) throw SingularTimeError("empirical density requires sigma_t > 0 (t > 0)");
  Matrix projected;
  const Matrix& y = renders(c, projected);
  Eigen::ArrayXd logits;
  const double max_logit = smoothed_logits(y, x, alpha, sigma, logits);
  const double total = (logits - max_logit).exp().sum();
  const double m = static_cast<double>(y.rows());
  return max_logit + std::log(total / static_cast<double>(y.cols())) -
         0.5 * m * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

Vector empirical_estimate(const ParticleEnsemble& ensemble, const Renderer& renderer,
                          const Camera& c, const Vector& x_t, double t) {
  return EmpiricalScore(ensemble, renderer).estimate(x_t, t, c);
}

LearnedEstimator::LearnedEstimator(Eigen::Index image_dim, const LearnedEstimatorConfig& config,
                                   Rng& init_rng)
    : image_dim_(image_dim),
      config_(config),
      net_(image_dim + 5, config.hidden, image_dim, init_rng),
      opt_(config.optimizer, net_.parameter_count()) {
  if (config.batch < 1) throw InvariantError("estimator batch must be >= 1");
}

Vector LearnedEstimator::features(const Vector& x_t, double t, const Camera& c) const {
  require_dim(x_t, image_dim_, "learned estimate x_t");
  Vector f(image_dim_ + 5);
  f.head(image_dim_) = x_t;
  const double phase = 2.0 * std::numbers::pi * t;
  f[image_dim_ + 0] = std::sin(phase);
  f[image_dim_ + 1] = std::cos(phase);
  f[image_dim_ + 2] = t;
  f[image_dim_ + 3] = std::cos(c.angle);
  f[image_dim_ + 4] = std::sin(c.angle);
  return f;
}

Vector learned_estimate(const LearnedEstimator& est, const Vector& x_t, double t, const Camera& c) {
  Vector out = est.network().forward(est.features(x_t, t, c));
  if (!out.allFinite()) throw NumericError("learned estimator produced a non-finite prediction");
  return out;
}

double train_step(LearnedEstimator& est, const ParticleEnsemble& ensemble,
                  const Renderer& renderer, Rng& rng, double lr, Interval times) {
  if (ensemble.empty()) throw InvariantError("cannot train the estimator on an empty ensemble");
  if (!(lr >= 0.0)) throw InvariantError("estimator learning rate must be >= 0");
  const auto batch = static_cast<Eigen::Index>(est.config().batch);
  const Eigen::Index m = est.image_dim();
  Matrix inputs(m + 5, batch);
  Matrix targets(m, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const std::size_t i = rng.below(ensemble.size());
    const double t = rng.uniform(times.lo, times.hi);
    const Camera c = renderer.sample_camera(rng);
    const Vector eps = rng.normal_vector(m);
    const Vector x_t = perturb(renderer.render(ensemble[i], c), t, eps);
    inputs.col(b) = est.features(x_t, t, c);
    targets.col(b) = eps;
  }
  Vector grad;
  const double loss = est.network().loss_and_gradient(inputs, targets, grad);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw NumericError("estimator training produced a non-finite loss");
  }
  if (lr > 0.0) {
    est.optimizer().set_lr(lr);
    est.optimizer().step(est.network().parameters(), grad);
  }
  return loss;
}

}  // namespace vsdlab
