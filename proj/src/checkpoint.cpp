#include "vsdlab/checkpoint.hpp"

#include "vsdlab/format.hpp"

#include <charconv>
#include <limits>
#include <sstream>
#include <vector>

namespace vsdlab {
namespace {

void write_vector(std::ostream& out, const char* tag, const Vector& v) {
  out << tag << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
  out << '\n';
}

void write_doubles(std::ostream& out, const char* tag, const std::vector<double>& v) {
  write_vector(out, tag, Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
}

void write_optimizer_config(std::ostream& out, const OptimizerConfig& c) {
  out << "optimizer_config " << (c.kind == OptimizerKind::Sgd ? "sgd" : "adam") << ' '
      << format_double(c.lr) << ' ' << format_double(c.momentum) << ' ' << format_double(c.beta1)
      << ' ' << format_double(c.beta2) << ' ' << format_double(c.epsilon) << '\n';
}

void write_optimizer(std::ostream& out, const Optimizer& opt) {
  write_optimizer_config(out, opt.config());
  out << "optimizer_steps " << opt.steps() << '\n';
  write_vector(out, "m", opt.first_moment());
  write_vector(out, "v", opt.second_moment());
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of checkpoint");
    return w;
  }

  void expect(const std::string& tag) {
    const std::string w = word();
    if (w != tag) fail("expected '" + tag + "', found '" + w + "'");
  }

  double number() {
    const std::string w = word();
    if (w == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (w == "inf") return std::numeric_limits<double>::infinity();
    if (w == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc() || r.ptr != w.data() + w.size()) fail("bad number '" + w + "'");
    return v;
  }

  template <typename Int>
  Int integer() {
    const std::string w = word();
    Int v = 0;
    const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc() || r.ptr != w.data() + w.size()) fail("bad integer '" + w + "'");
    return v;
  }

  Vector vector(const std::string& tag) {
    expect(tag);
    const auto n = integer<std::int64_t>();
    if (n < 0) fail("negative length for '" + tag + "'");
    Vector v(n);
    for (std::int64_t i = 0; i < n; ++i) v[i] = number();
    return v;
  }

  std::vector<double> doubles(const std::string& tag) {
    const Vector v = vector(tag);
    return {v.data(), v.data() + v.size()};
  }

  OptimizerConfig optimizer_config() {
    expect("optimizer_config");
    OptimizerConfig c;
    const std::string kind = word();
    if (kind == "sgd") {
      c.kind = OptimizerKind::Sgd;
    } else if (kind == "adam") {
      c.kind = OptimizerKind::Adam;
    } else {
      fail("unknown optimizer '" + kind + "'");
    }
    c.lr = number();
    c.momentum = number();
    c.beta1 = number();
    c.beta2 = number();
    c.epsilon = number();
    return c;
  }

  void optimizer_into(Optimizer& opt, Eigen::Index n) {
    expect("optimizer_steps");
    opt.set_steps(integer<std::int64_t>());
    opt.first_moment() = vector("m");
    opt.second_moment() = vector("v");
    if (opt.first_moment().size() != n || opt.second_moment().size() != n) {
      fail("optimizer moment size mismatch");
    }
  }

  std::string line() {
    std::string l;
    if (!std::getline(in_, l)) fail("unexpected end of checkpoint");
    return l;
  }

  [[noreturn]] static void fail(const std::string& what) { throw CheckpointError("checkpoint: " + what); }

 private:
  std::istream& in_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& cp) {
  const DistillState& s = cp.state;
  out << "vsdlab-checkpoint " << kCheckpointVersion << '\n';
  std::vector<std::string> lines;
  {
    std::istringstream is(cp.config_text);
    for (std::string l; std::getline(is, l);) lines.push_back(l);
  }
  out << "config " << lines.size() << '\n';
  for (const auto& l : lines) out << l << '\n';
  out << "seed " << cp.seed << '\n';
  out << "next_step " << s.next_step << '\n';
  out << "particles " << s.ensemble.size() << ' ' << s.ensemble.dimension() << '\n';
  for (const auto& p : s.ensemble.particles()) write_vector(out, "p", p);
  write_doubles(out, "last_grad_norm", s.last_grad_norm);
  write_doubles(out, "last_t", s.last_t);
  out << "last_est_loss " << format_double(s.last_est_loss) << '\n';
  out << "particle_optimizers " << s.particle_optimizers.size() << '\n';
  for (const auto& opt : s.particle_optimizers) write_optimizer(out, opt);
  if (s.estimator) {
    const LearnedEstimator& est = *s.estimator;
    out << "estimator 1\n";
    out << "estimator_shape " << est.image_dim() << ' ' << est.config().hidden << ' '
        << est.config().batch << '\n';
    write_optimizer_config(out, est.config().optimizer);
    write_vector(out, "params", est.network().parameters());
    write_optimizer(out, est.optimizer());
  } else {
    out << "estimator 0\n";
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  std::string magic;
  if (!(in >> magic) || magic != "vsdlab-checkpoint") Reader::fail("not a vsdlab checkpoint");
  const int version = r.integer<int>();
  if (version != kCheckpointVersion) {
    Reader::fail("unsupported version " + std::to_string(version) + " (expected " +
                 std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint cp;
  r.expect("config");
  const auto n_lines = r.integer<std::size_t>();
  r.line();  // rest of the "config" line
  for (std::size_t i = 0; i < n_lines; ++i) cp.config_text += r.line() + "\n";
  r.expect("seed");
  cp.seed = r.integer<std::uint64_t>();
  DistillState& s = cp.state;
  r.expect("next_step");
  s.next_step = r.integer<std::int64_t>();
  r.expect("particles");
  const auto n = r.integer<std::size_t>();
  const auto d = r.integer<std::int64_t>();
  std::vector<Vector> particles;
  for (std::size_t i = 0; i < n; ++i) {
    particles.push_back(r.vector("p"));
    if (particles.back().size() != d) Reader::fail("particle dimension mismatch");
  }
  s.ensemble = ParticleEnsemble(std::move(particles));
  s.last_grad_norm = r.doubles("last_grad_norm");
  s.last_t = r.doubles("last_t");
  if (s.last_grad_norm.size() != n || s.last_t.size() != n) Reader::fail("per-particle record size mismatch");
  r.expect("last_est_loss");
  s.last_est_loss = r.number();
  r.expect("particle_optimizers");
  const auto n_opt = r.integer<std::size_t>();
  if (n_opt != 0 && n_opt != n) Reader::fail("optimizer count mismatch");
  for (std::size_t i = 0; i < n_opt; ++i) {
    Optimizer opt(r.optimizer_config(), d);
    r.optimizer_into(opt, d);
    s.particle_optimizers.push_back(std::move(opt));
  }
  r.expect("estimator");
  if (r.integer<int>() == 1) {
    r.expect("estimator_shape");
    const auto image_dim = r.integer<std::int64_t>();
    LearnedEstimatorConfig ec;
    ec.hidden = r.integer<std::int64_t>();
    ec.batch = r.integer<std::int64_t>();
    ec.optimizer = r.optimizer_config();
    Rng unused(0, Stream::EstimatorInit);
    LearnedEstimator est(image_dim, ec, unused);
    const Vector params = r.vector("params");
    if (params.size() != est.network().parameter_count()) Reader::fail("estimator parameter count mismatch");
    est.network().parameters() = params;
    est.optimizer() = Optimizer(r.optimizer_config(), params.size());
    r.optimizer_into(est.optimizer(), params.size());
    s.estimator.emplace(std::move(est));
  }
  r.expect("end");
  return cp;
}

}  // namespace vsdlab
