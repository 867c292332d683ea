#pragma once

// Shallow ReLU network representations: finite networks, lifted atomic
// measures over (a, b, c), and signed Radon measures on the sphere S^d.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "relusparse/error.hpp"

namespace relusparse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Derivative of the ReLU used at the hinge t == 0.
inline constexpr double kReluHingeDerivative = 0.0;

/// Two unit directions closer than this (radians) are the same ray.
inline constexpr double kDirectionMergeAngle = 1e-10;

inline double relu(double t) { return t > 0.0 ? t : 0.0; }

inline double relu_derivative(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? 0.0 : kReluHingeDerivative); }

/// Appends the constant 1 to x.
inline Vector lift(const Vector& x) {
  Vector out(x.size() + 1);
  out.head(x.size()) = x;
  out(x.size()) = 1.0;
  return out;
}

/// Angle between two nonzero vectors, accurate for nearly parallel inputs.
inline double angular_distance(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const double chord = (u / nu - v / nv).norm();
  return 2.0 * std::asin(std::min(1.0, chord / 2.0));
}

/// n labelled points in R^d together with their lifted forms (x, 1).
class Dataset {
 public:
  Dataset() = default;

  Dataset(Matrix points, Vector targets) : points_(std::move(points)), targets_(std::move(targets)) {
    require(points_.rows() >= 1, ErrorCode::invalid_argument, "dataset needs at least one point");
    require(points_.cols() >= 1, ErrorCode::invalid_argument, "dataset dimension must be at least 1");
    require(targets_.size() == points_.rows(), ErrorCode::dimension_mismatch,
            "number of targets does not match number of points");
    require(points_.allFinite() && targets_.allFinite(), ErrorCode::invalid_argument,
            "dataset entries must be finite");
    lifted_.resize(points_.rows(), points_.cols() + 1);
    lifted_.leftCols(points_.cols()) = points_;
    lifted_.col(points_.cols()).setOnes();
  }

  static Dataset from_rows(const std::vector<std::vector<double>>& points, const std::vector<double>& targets) {
    require(!points.empty(), ErrorCode::invalid_argument, "dataset needs at least one point");
    const std::size_t d = points.front().size();
    Matrix x(static_cast<Index>(points.size()), static_cast<Index>(d));
    for (std::size_t i = 0; i < points.size(); ++i) {
      require(points[i].size() == d, ErrorCode::dimension_mismatch,
              "point " + std::to_string(i) + " has dimension " + std::to_string(points[i].size()) +
                  ", expected " + std::to_string(d));
      for (std::size_t k = 0; k < d; ++k) x(static_cast<Index>(i), static_cast<Index>(k)) = points[i][k];
    }
    Vector y = Eigen::Map<const Vector>(targets.data(), static_cast<Index>(targets.size()));
    return Dataset(std::move(x), std::move(y));
  }

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }

  Vector point(std::size_t i) const { return points_.row(static_cast<Index>(i)).transpose(); }
  Vector lifted_point(std::size_t i) const { return lifted_.row(static_cast<Index>(i)).transpose(); }
  double target(std::size_t i) const { return targets_(static_cast<Index>(i)); }

  const Matrix& points() const { return points_; }
  const Matrix& lifted() const { return lifted_; }
  const Vector& targets() const { return targets_; }

  Dataset with_targets(Vector targets) const { return Dataset(points_, std::move(targets)); }

 private:
  Matrix points_;
  Vector targets_;
  Matrix lifted_;
};

/// One hidden unit x -> c * relu(a.x + b).
struct Neuron {
  Vector a;
  double b = 0.0;
  double c = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(a.size()); }

  /// The inner parameters (a, b) stacked into one (d+1)-vector.
  Vector theta() const { return lift_with(b); }

  static Neuron from_theta(const Vector& theta, double c) {
    require(theta.size() >= 2, ErrorCode::dimension_mismatch, "theta must have at least two entries");
    return Neuron{theta.head(theta.size() - 1), theta(theta.size() - 1), c};
  }

  bool finite() const { return a.allFinite() && std::isfinite(b) && std::isfinite(c); }

 private:
  Vector lift_with(double bias) const {
    Vector out(a.size() + 1);
    out.head(a.size()) = a;
    out(a.size()) = bias;
    return out;
  }
};

struct ParticleNetwork {
  std::vector<Neuron> neurons;

  std::size_t width() const { return neurons.size(); }
};

struct Atom {
  Neuron neuron;
  double mass = 0.0;
};

/// Finitely supported nonnegative measure over neuron parameters.
struct AtomicMeasure {
  std::vector<Atom> atoms;

  double total_mass() const {
    double s = 0.0;
    for (const auto& atom : atoms) s += atom.mass;
    return s;
  }

  /// The empirical measure (1/m) sum_j delta_{theta_j}.
  static AtomicMeasure empirical(const ParticleNetwork& net) {
    AtomicMeasure mu;
    const double w = net.neurons.empty() ? 0.0 : 1.0 / static_cast<double>(net.neurons.size());
    mu.atoms.reserve(net.neurons.size());
    for (const auto& neuron : net.neurons) mu.atoms.push_back({neuron, w});
    return mu;
  }
};

struct RadonAtom {
  Vector direction;  // unit (d+1)-vector
  double mass = 0.0;  // signed
};

/// Signed measure on S^d; evaluates x -> sum_s z_s relu(<(x,1), theta_s>).
struct RadonMeasure {
  std::vector<RadonAtom> atoms;

  double tv_norm() const {
    double s = 0.0;
    for (const auto& atom : atoms) s += std::abs(atom.mass);
    return s;
  }

  double total_signed_mass() const {
    double s = 0.0;
    for (const auto& atom : atoms) s += atom.mass;
    return s;
  }
};

namespace detail {

inline void check_input_dim(std::size_t expected, Index got) {
  require(static_cast<Index>(expected) == got, ErrorCode::dimension_mismatch,
          "input has dimension " + std::to_string(got) + ", expected " + std::to_string(expected));
}

}  // namespace detail

inline double phi(const Neuron& neuron, const Vector& x) {
  detail::check_input_dim(neuron.dim(), x.size());
  return neuron.c * relu(neuron.a.dot(x) + neuron.b);
}

inline double predict_network(const ParticleNetwork& net, const Vector& x) {
  require(net.width() >= 1, ErrorCode::invalid_argument, "network must have at least one neuron");
  double s = 0.0;
  for (const auto& neuron : net.neurons) s += phi(neuron, x);
  return s / static_cast<double>(net.width());
}

inline double predict_measure(const AtomicMeasure& mu, const Vector& x) {
  double s = 0.0;
  for (const auto& atom : mu.atoms) s += atom.mass * phi(atom.neuron, x);
  return s;
}

inline double predict_radon(const RadonMeasure& nu, const Vector& x) {
  double s = 0.0;
  for (const auto& atom : nu.atoms) {
    detail::check_input_dim(static_cast<std::size_t>(atom.direction.size()) - 1, x.size());
    const Index d = x.size();
    s += atom.mass * relu(atom.direction.head(d).dot(x) + atom.direction(d));
  }
  return s;
}

/// Projects a lifted measure onto S^d: atom (a, b, c, p) goes to direction
/// (a,b)/|(a,b)| with signed mass p c |(a,b)|. Atoms on the same ray merge.
inline RadonMeasure project_to_sphere(const AtomicMeasure& mu) {
  RadonMeasure nu;
  for (const auto& atom : mu.atoms) {
    const Vector theta = atom.neuron.theta();
    const double norm = theta.norm();
    if (atom.neuron.c == 0.0 || atom.mass == 0.0) continue;
    require(norm > 0.0, ErrorCode::invalid_argument, "atom with zero direction carries nonzero outer weight");
    const Vector direction = theta / norm;
    const double z = atom.mass * atom.neuron.c * norm;
    auto same_ray = std::find_if(nu.atoms.begin(), nu.atoms.end(), [&](const RadonAtom& other) {
      return angular_distance(other.direction, direction) < kDirectionMergeAngle;
    });
    if (same_ray != nu.atoms.end()) {
      same_ray->mass += z;
    } else {
      nu.atoms.push_back({direction, z});
    }
  }
  return nu;
}

/// Moves a neuron along its degeneracy orbit (a, b, c) -> (la, lb, c/l).
inline Neuron rescale(const Neuron& neuron, double lambda) {
  require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::invalid_argument, "rescale factor must be positive");
  return Neuron{neuron.a * lambda, neuron.b * lambda, neuron.c / lambda};
}

/// Scales all parameters: phi(t theta, x) = t^2 phi(theta, x) for t > 0.
inline Neuron scale_parameters(const Neuron& neuron, double t) { return Neuron{neuron.a * t, neuron.b * t, neuron.c * t}; }

}  // namespace relusparse
