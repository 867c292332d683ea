#pragma once

// Finite-width particle training. The network f = (1/m) sum_j c_j relu(a_j.x + b_j)
// is trained on
//
//   L = (1/n) sum_i 1/2 (f(x_i) - y_i)^2 + (lambda/m) sum_j V(theta_j)
//
// by full-batch gradient descent, or by single-sample SGD on noisy labels
// y + eta r. Each particle moves by eps * m * grad_{theta_j}, i.e. along the
// per-particle (mean-field) velocity, so step sizes do not depend on m.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relusparse/analysis.hpp"
#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"
#include "relusparse/error.hpp"
#include "relusparse/potentials.hpp"
#include "relusparse/rng.hpp"

namespace relusparse {

enum class NoiseKind { rademacher, gaussian };
enum class DecayForm { path_norm, weight_decay };

inline const char* to_string(NoiseKind k) { return k == NoiseKind::rademacher ? "rademacher" : "gaussian"; }
inline const char* to_string(DecayForm f) { return f == DecayForm::path_norm ? "path-norm" : "weight-decay"; }

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "rademacher") return NoiseKind::rademacher;
  if (s == "gaussian") return NoiseKind::gaussian;
  throw Error(ErrorCode::invalid_argument, "unknown noise '" + s + "' (expected rademacher or gaussian)");
}

inline DecayForm parse_decay_form(const std::string& s) {
  if (s == "path-norm") return DecayForm::path_norm;
  if (s == "weight-decay") return DecayForm::weight_decay;
  throw Error(ErrorCode::invalid_argument, "unknown decay '" + s + "' (expected path-norm or weight-decay)");
}

struct TrainConfig {
  std::size_t width = 200;
  std::size_t steps = 10000;
  double step_size = 0.05;
  double lambda = 0.0;
  double eta = 0.0;
  NoiseKind noise = NoiseKind::rademacher;
  /// path_norm: V = |c| w(a, b) with w from `potential`;
  /// weight_decay: V = (|(a, b)|^2 + c^2) / 2.
  DecayForm decay = DecayForm::weight_decay;
  PotentialKind potential = PotentialKind::tv;
  std::uint64_t seed = 0;
  double init_scale = 1.0;
  std::size_t record_stride = 100;
  double interpolation_tol = 1e-4;
  std::size_t interpolation_records = 100;
  double divergence_factor = 1e6;
  SupportThresholds support = SupportThresholds::for_training();

  void validate() const {
    require(step_size > 0.0, ErrorCode::invalid_argument, "step size must be positive");
    require(steps >= 1, ErrorCode::invalid_argument, "at least one step is required");
    require(width >= 1, ErrorCode::invalid_argument, "width must be at least 1");
    require(lambda >= 0.0 && eta >= 0.0, ErrorCode::invalid_argument, "lambda and eta must be nonnegative");
    require(record_stride >= 1, ErrorCode::invalid_argument, "record stride must be at least 1");
    require(potential != PotentialKind::label_noise_exact || decay != DecayForm::path_norm,
            ErrorCode::invalid_argument, "the exact label-noise potential has no global weight for path-norm decay");
  }
};

struct TraceRecord {
  std::size_t step = 0;
  double loss = 0.0;     // noise-free data term
  double lambda = 0.0;   // implicit regulariser
  double reg = 0.0;      // (1/m) sum_j V(theta_j)
  std::size_t support = 0;
  double gradnorm = 0.0;  // full-batch per-particle gradient norm
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  std::optional<std::size_t> first_interpolation;  // first recorded step with loss < tol
  bool interpolated = false;                        // loss < tol over the required run of records
  bool diverged = false;
  std::string diagnostics;
};

struct TrainResult {
  ParticleNetwork network;
  TrainTrace trace;
};

/// c^2 (1 + |x|^2) 1{a.x + b >= 0} + relu(a.x + b)^2 = |grad_theta phi|^2.
inline double grad_phi_sq(const Neuron& neuron, const Vector& x) {
  detail::check_input_dim(neuron.dim(), x.size());
  const double z = neuron.a.dot(x) + neuron.b;
  const double chi = z >= 0.0 ? 1.0 : 0.0;
  return neuron.c * neuron.c * (1.0 + x.squaredNorm()) * chi + relu(z) * relu(z);
}

inline double implicit_lambda(const ParticleNetwork& net, const Dataset& data) {
  require(net.width() >= 1, ErrorCode::invalid_argument, "network must have at least one neuron");
  double s = 0.0;
  for (const auto& neuron : net.neurons)
    for (std::size_t i = 0; i < data.size(); ++i) s += grad_phi_sq(neuron, data.point(i));
  return s / (static_cast<double>(net.width()) * static_cast<double>(data.size()));
}

/// Random initial network: a, b ~ N(0, s^2/(d+1)), c uniform on {-s, +s}.
inline ParticleNetwork init_network(std::size_t dim, const TrainConfig& cfg) {
  auto gen = make_stream(cfg.seed, "init");
  std::normal_distribution<double> normal(0.0, cfg.init_scale / std::sqrt(static_cast<double>(dim + 1)));
  std::bernoulli_distribution coin(0.5);
  ParticleNetwork net;
  net.neurons.reserve(cfg.width);
  for (std::size_t j = 0; j < cfg.width; ++j) {
    Neuron neuron{Vector(Index(dim)), 0.0, 0.0};
    for (Index k = 0; k < Index(dim); ++k) neuron.a(k) = normal(gen);
    neuron.b = normal(gen);
    neuron.c = coin(gen) ? cfg.init_scale : -cfg.init_scale;
    net.neurons.push_back(std::move(neuron));
  }
  return net;
}

namespace detail {

// Particles as rows of Theta (m x (d+1)) plus outer weights c.
struct Particles {
  Matrix theta;
  Vector c;

  static Particles from(const ParticleNetwork& net) {
    Particles p;
    const Index m = Index(net.width());
    const Index q = m > 0 ? Index(net.neurons[0].dim() + 1) : 0;
    p.theta.resize(m, q);
    p.c.resize(m);
    for (Index j = 0; j < m; ++j) {
      p.theta.row(j) = net.neurons[std::size_t(j)].theta().transpose();
      p.c(j) = net.neurons[std::size_t(j)].c;
    }
    return p;
  }

  ParticleNetwork network() const {
    ParticleNetwork net;
    for (Index j = 0; j < theta.rows(); ++j) net.neurons.push_back(Neuron::from_theta(theta.row(j).transpose(), c(j)));
    return net;
  }
};

inline double relu_derivative_checked(double z) { return relu_derivative(z); }

// Decay value V and its gradient for one particle.
inline double decay_terms(const TrainConfig& cfg, const Dataset& data, const Vector& th, double c, Vector* g_theta,
                          double* g_c) {
  if (cfg.decay == DecayForm::weight_decay) {
    if (g_theta) *g_theta = th;
    if (g_c) *g_c = c;
    return 0.5 * (th.squaredNorm() + c * c);
  }
  const double sgn = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
  if (cfg.potential == PotentialKind::tv) {
    const double w = th.norm();
    if (g_theta) *g_theta = w > 0.0 ? Vector(std::abs(c) * th / w) : Vector::Zero(th.size());
    if (g_c) *g_c = sgn * w;
    return std::abs(c) * w;
  }
  const Vector pre = data.lifted() * th;
  const double n = static_cast<double>(data.size());
  Vector acc = Vector::Zero(th.size());
  double sq = 0.0;
  for (Index i = 0; i < pre.size(); ++i) {
    const double r = relu(pre(i));
    sq += r * r;
    acc += r * data.lifted().row(i).transpose();
  }
  const double w = std::sqrt(sq / n);
  if (g_theta) *g_theta = w > 0.0 ? Vector(std::abs(c) * acc / (n * w)) : Vector::Zero(th.size());
  if (g_c) *g_c = sgn * w;
  return std::abs(c) * w;
}

// Per-particle velocities m * dL/dtheta_j and m * dL/dc_j (full batch).
inline double full_batch(const Particles& P, const Dataset& data, const TrainConfig& cfg, Matrix* g_theta, Vector* g_c,
                         double* loss_out = nullptr) {
  const Matrix& X = data.lifted();
  const Index m = P.theta.rows();
  const double n = static_cast<double>(data.size());
  const Matrix pre = P.theta * X.transpose();  // m x n
  const Matrix act = pre.unaryExpr([](double z) { return relu(z); });
  const Vector f = act.transpose() * P.c / static_cast<double>(m);
  const Vector resid = f - data.targets();
  const double loss = 0.5 * resid.squaredNorm() / n;
  if (loss_out) *loss_out = loss;
  double reg = 0.0;
  if (g_theta) g_theta->resize(m, P.theta.cols());
  if (g_c) g_c->resize(m);
  const Vector r = resid / n;
  const Matrix chi = pre.unaryExpr([](double z) { return relu_derivative_checked(z); });
  if (g_theta) *g_theta = P.c.asDiagonal() * (chi * r.asDiagonal()) * X;
  if (g_c) *g_c = act * r;
  for (Index j = 0; j < m; ++j) {
    Vector gt;
    double gc = 0.0;
    const double v = decay_terms(cfg, data, P.theta.row(j).transpose(), P.c(j), g_theta ? &gt : nullptr, &gc);
    reg += v;
    if (cfg.lambda > 0.0) {
      if (g_theta) g_theta->row(j) += cfg.lambda * gt.transpose();
      if (g_c) (*g_c)(j) += cfg.lambda * gc;
    }
  }
  return reg / static_cast<double>(m);
}

}  // namespace detail

inline double training_loss(const ParticleNetwork& net, const Dataset& data) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = predict_network(net, data.point(i)) - data.target(i);
    s += 0.5 * r * r;
  }
  return s / static_cast<double>(data.size());
}

/// (1/m) sum_j V(theta_j).
inline double decay_value(const ParticleNetwork& net, const Dataset& data, const TrainConfig& cfg) {
  double s = 0.0;
  for (const auto& neuron : net.neurons) s += detail::decay_terms(cfg, data, neuron.theta(), neuron.c, nullptr, nullptr);
  return s / static_cast<double>(net.width());
}

inline double training_objective(const ParticleNetwork& net, const Dataset& data, const TrainConfig& cfg) {
  return training_loss(net, data) + cfg.lambda * decay_value(net, data, cfg);
}

/// Parameters laid out neuron by neuron as (a, b, c).
inline Vector flatten(const ParticleNetwork& net) {
  const Index q = net.width() ? Index(net.neurons[0].dim() + 2) : 0;
  Vector v(Index(net.width()) * q);
  for (std::size_t j = 0; j < net.width(); ++j) {
    const auto& nr = net.neurons[j];
    v.segment(Index(j) * q, q - 1) = nr.theta();
    v(Index(j) * q + q - 1) = nr.c;
  }
  return v;
}

inline ParticleNetwork unflatten(const Vector& v, std::size_t dim) {
  const Index q = Index(dim + 2);
  require(v.size() % q == 0, ErrorCode::dimension_mismatch, "parameter vector length is not a multiple of d+2");
  ParticleNetwork net;
  for (Index j = 0; j < v.size() / q; ++j)
    net.neurons.push_back(Neuron::from_theta(v.segment(j * q, q - 1), v(j * q + q - 1)));
  return net;
}

/// Exact gradient of training_objective in the flatten() layout.
inline Vector objective_gradient(const ParticleNetwork& net, const Dataset& data, const TrainConfig& cfg) {
  const auto P = detail::Particles::from(net);
  Matrix gt;
  Vector gc;
  detail::full_batch(P, data, cfg, &gt, &gc);
  const Index m = P.theta.rows();
  const Index q = P.theta.cols() + 1;
  Vector g(m * q);
  for (Index j = 0; j < m; ++j) {
    g.segment(j * q, q - 1) = gt.row(j).transpose() / static_cast<double>(m);
    g(j * q + q - 1) = gc(j) / static_cast<double>(m);
  }
  return g;
}

namespace detail {

class Recorder {
 public:
  Recorder(const Dataset& data, const TrainConfig& cfg, const CellDecomposition& decomp)
      : data_(data), cfg_(cfg), decomp_(decomp) {}

  // Returns false when the run has diverged.
  bool record(std::size_t step, const Particles& P, TrainTrace& trace) {
    Matrix gt;
    Vector gc;
    double loss = 0.0;
    const double reg = full_batch(P, data_, cfg_, &gt, &gc, &loss);
    const ParticleNetwork net = P.network();
    TraceRecord r;
    r.step = step;
    r.loss = loss;
    r.reg = reg;
    r.lambda = implicit_lambda(net, data_);
    r.gradnorm = std::sqrt(gt.squaredNorm() + gc.squaredNorm());
    if (!std::isfinite(loss) || !P.theta.allFinite() || !P.c.allFinite()) {
      trace.diverged = true;
      trace.diagnostics = "non-finite parameters or loss at step " + std::to_string(step);
      trace.records.push_back(r);
      return false;
    }
    r.support = effective_support(net, decomp_, cfg_.support).size();
    if (trace.records.empty()) initial_loss_ = loss;
    trace.records.push_back(r);
    if (loss > cfg_.divergence_factor * std::max(initial_loss_, 1e-300) && loss > 1e-12) {
      trace.diverged = true;
      trace.diagnostics = "loss " + std::to_string(loss) + " exceeds " + std::to_string(cfg_.divergence_factor) +
                          " times the initial loss at step " + std::to_string(step);
      return false;
    }
    if (loss < cfg_.interpolation_tol) {
      if (!trace.first_interpolation) trace.first_interpolation = step;
      if (++below_ >= cfg_.interpolation_records) trace.interpolated = true;
    } else {
      below_ = 0;
    }
    return true;
  }

 private:
  const Dataset& data_;
  const TrainConfig& cfg_;
  const CellDecomposition& decomp_;
  double initial_loss_ = 0.0;
  std::size_t below_ = 0;
};

}  // namespace detail

/// Full-batch gradient descent on the regularised loss.
inline TrainResult gd_weight_decay(const Dataset& data, const TrainConfig& cfg, const CellDecomposition& decomp) {
  cfg.validate();
  auto P = detail::Particles::from(init_network(data.dim(), cfg));
  TrainResult out;
  detail::Recorder rec(data, cfg, decomp);
  bool alive = rec.record(0, P, out.trace);
  Matrix gt;
  Vector gc;
  for (std::size_t t = 1; t <= cfg.steps && alive; ++t) {
    detail::full_batch(P, data, cfg, &gt, &gc);
    P.theta -= cfg.step_size * gt;
    P.c -= cfg.step_size * gc;
    if (t % cfg.record_stride == 0 || t == cfg.steps) alive = rec.record(t, P, out.trace);
  }
  out.network = P.network();
  return out;
}

inline TrainResult gd_weight_decay(const Dataset& data, const TrainConfig& cfg) {
  return gd_weight_decay(data, cfg, enumerate_cells(data));
}

namespace detail {

// Single-sample SGD; with_noise = false draws no noise at all.
inline TrainResult run_sgd(const Dataset& data, const TrainConfig& cfg, const CellDecomposition& decomp,
                           bool with_noise) {
  cfg.validate();
  auto P = Particles::from(init_network(data.dim(), cfg));
  auto index_gen = make_stream(cfg.seed, "sgd-index");
  auto noise_gen = make_stream(cfg.seed, "sgd-noise");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  TrainConfig record_cfg = cfg;
  record_cfg.lambda = 0.0;
  TrainResult out;
  Recorder rec(data, record_cfg, decomp);
  bool alive = rec.record(0, P, out.trace);
  const Index m = P.theta.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  Vector pre(m);
  for (std::size_t t = 1; t <= cfg.steps && alive; ++t) {
    const std::size_t i = pick(index_gen);
    double target = data.target(i);
    if (with_noise) {
      const double r = cfg.noise == NoiseKind::rademacher ? (coin(noise_gen) ? 1.0 : -1.0) : normal(noise_gen);
      target += cfg.eta * r;
    }
    const auto x = data.lifted().row(Index(i));
    pre.noalias() = P.theta * x.transpose();
    double f = 0.0;
    for (Index j = 0; j < m; ++j) f += P.c(j) * relu(pre(j));
    f *= inv_m;
    const double e = f - target;
    for (Index j = 0; j < m; ++j) {
      const double z = pre(j);
      const double gc = e * relu(z);
      const double s = e * P.c(j) * relu_derivative(z);
      if (s != 0.0) P.theta.row(j) -= cfg.step_size * s * x;
      P.c(j) -= cfg.step_size * gc;
    }
    if (t % cfg.record_stride == 0 || t == cfg.steps) alive = rec.record(t, P, out.trace);
  }
  out.network = P.network();
  return out;
}

}  // namespace detail

/// Single-sample SGD on labels y + eta r with r ~ noise; no explicit penalty.
inline TrainResult sgd_label_noise(const Dataset& data, const TrainConfig& cfg, const CellDecomposition& decomp) {
  return detail::run_sgd(data, cfg, decomp, true);
}

inline TrainResult sgd_label_noise(const Dataset& data, const TrainConfig& cfg) {
  return sgd_label_noise(data, cfg, enumerate_cells(data));
}

/// Single-sample SGD on the clean labels.
inline TrainResult sgd_plain(const Dataset& data, const TrainConfig& cfg, const CellDecomposition& decomp) {
  return detail::run_sgd(data, cfg, decomp, false);
}

}  // namespace relusparse
