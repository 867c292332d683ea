#pragma once

// 1-homogeneous regularisation weights w(a, b) and the potentials
// V(a, b, c) = |c| w(a, b) built from them.
//
//   tv                  w = |(a, b)|_2
//   label_noise   w = sqrt(E_D[(a.x + b)_+^2])
//   label_noise_exact   min over the degeneracy orbit of the raw label-noise
//                       potential E_D[(a.x+b)_+^2 + (1 + |x|^2) c^2 1{a.x+b >= 0}]

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>

#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"
#include "relusparse/error.hpp"

namespace relusparse {

enum class PotentialKind { tv, label_noise, label_noise_exact };

inline const char* to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::tv: return "tv";
    case PotentialKind::label_noise: return "label-noise";
    case PotentialKind::label_noise_exact: return "label-noise-exact";
  }
  return "unknown";
}

inline PotentialKind parse_potential_kind(const std::string& s) {
  if (s == "tv") return PotentialKind::tv;
  if (s == "label-noise") return PotentialKind::label_noise;
  if (s == "label-noise-exact") return PotentialKind::label_noise_exact;
  throw Error(ErrorCode::invalid_argument, "unknown potential '" + s + "' (expected tv, label-noise, label-noise-exact)");
}

inline double weight_tv(const Vector& theta) { return theta.norm(); }

inline double weight_tv(const Vector& a, double b) { return std::sqrt(a.squaredNorm() + b * b); }

/// sqrt((1/n) sum_i relu(<theta, x~_i>)^2).
inline double weight_label_noise(const Vector& theta, const Dataset& data) {
  require(theta.size() == static_cast<Index>(data.dim() + 1), ErrorCode::dimension_mismatch,
          "theta must have dimension d+1");
  const Vector pre = data.lifted() * theta;
  double s = 0.0;
  for (Index i = 0; i < pre.size(); ++i) s += relu(pre(i)) * relu(pre(i));
  return std::sqrt(s / static_cast<double>(data.size()));
}

inline double weight_label_noise(const Vector& a, double b, const Dataset& data) {
  return weight_label_noise(Neuron{a, b, 0.0}.theta(), data);
}

namespace detail {

// A = E[(a.x+b)_+^2], chi = E[(1 + |x|^2) 1{a.x+b >= 0}].
struct LabelNoiseTerms {
  double activation = 0.0;
  double chi = 0.0;
};

inline LabelNoiseTerms label_noise_terms(const Vector& theta, const Dataset& data) {
  require(theta.size() == static_cast<Index>(data.dim() + 1), ErrorCode::dimension_mismatch,
          "theta must have dimension d+1");
  LabelNoiseTerms t;
  const Vector pre = data.lifted() * theta;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double z = pre(Index(i));
    t.activation += relu(z) * relu(z);
    if (z >= 0.0) t.chi += 1.0 + data.points().row(Index(i)).squaredNorm();
  }
  const double n = static_cast<double>(data.size());
  t.activation /= n;
  t.chi /= n;
  return t;
}

}  // namespace detail

/// The raw implicit label-noise potential of a single neuron, with the
/// closed-halfspace indicator 1{a.x + b >= 0}.
inline double v_tilde(const Neuron& neuron, const Dataset& data) {
  const auto t = detail::label_noise_terms(neuron.theta(), data);
  return t.activation + neuron.c * neuron.c * t.chi;
}

struct RescaleResult {
  double scale = 1.0;  // minimising lambda
  double value = 0.0;
};

/// min over lambda > 0 of v_tilde(lambda a, lambda b, c / lambda). The
/// indicator is invariant along the orbit, so the objective is
/// lambda^2 A + B / lambda^2 with minimum 2 sqrt(AB) at (B/A)^{1/4}.
/// Degenerate orbits (A = 0 or B = 0) have infimum 0 and report scale 1.
inline RescaleResult rescale_minimize(const Neuron& neuron, const Dataset& data) {
  const auto t = detail::label_noise_terms(neuron.theta(), data);
  const double A = t.activation;
  const double B = neuron.c * neuron.c * t.chi;
  if (A <= 0.0 || B <= 0.0) return {1.0, 0.0};
  return {std::pow(B / A, 0.25), 2.0 * std::sqrt(A * B)};
}

/// A potential V(a, b, c) = |c| w(a, b) bound to its dataset when needed.
class Potential {
 public:
  explicit Potential(PotentialKind kind) : kind_(kind) {
    require(kind == PotentialKind::tv, ErrorCode::invalid_argument, "label-noise potentials need a dataset");
  }
  Potential(PotentialKind kind, Dataset data) : kind_(kind), data_(std::move(data)) {}

  PotentialKind kind() const { return kind_; }
  const std::optional<Dataset>& dataset() const { return data_; }

  /// The weight w(theta), theta = (a, b).
  double weight(const Vector& theta) const {
    switch (kind_) {
      case PotentialKind::tv: return weight_tv(theta);
      case PotentialKind::label_noise: return weight_label_noise(theta, *data_);
      case PotentialKind::label_noise_exact: {
        const auto t = detail::label_noise_terms(theta, *data_);
        return 2.0 * std::sqrt(t.activation * t.chi);
      }
    }
    return 0.0;
  }

  double operator()(const Neuron& neuron) const { return std::abs(neuron.c) * weight(neuron.theta()); }

  /// <V, mu>.
  double integrate(const AtomicMeasure& mu) const {
    double s = 0.0;
    for (const auto& atom : mu.atoms) s += atom.mass * (*this)(atom.neuron);
    return s;
  }

 private:
  PotentialKind kind_;
  std::optional<Dataset> data_;
};

inline double potential(PotentialKind kind, const Neuron& neuron, const Dataset* data = nullptr) {
  if (kind == PotentialKind::tv) return std::abs(neuron.c) * weight_tv(neuron.theta());
  require(data != nullptr, ErrorCode::invalid_argument, "label-noise potentials need a dataset");
  if (kind == PotentialKind::label_noise) return std::abs(neuron.c) * weight_label_noise(neuron.theta(), *data);
  return rescale_minimize(neuron, *data).value;
}

/// Restriction of a weight to one cell: g(v) = kappa sqrt(v^T Q v). The
/// eigendecomposition of Q is kept for proximal steps.
struct CellGauge {
  std::size_t cell = 0;
  Matrix Q;
  double kappa = 1.0;
  Vector eigenvalues;   // clamped at 0
  Matrix eigenvectors;  // columns
  std::size_t rank = 0;

  double operator()(const Vector& v) const {
    if (kappa == 0.0) return 0.0;
    const double q = v.dot(Q * v);
    return kappa * std::sqrt(std::max(0.0, q));
  }

  bool degenerate() const { return rank < static_cast<std::size_t>(Q.rows()); }

  static CellGauge from_form(std::size_t cell, Matrix Q, double kappa) {
    CellGauge g;
    g.cell = cell;
    g.kappa = kappa;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (Q + Q.transpose()));
    g.eigenvalues = eig.eigenvalues();
    g.eigenvectors = eig.eigenvectors();
    const double scale = std::max(1.0, g.eigenvalues.cwiseAbs().maxCoeff());
    for (Index k = 0; k < g.eigenvalues.size(); ++k) {
      if (g.eigenvalues(k) <= 1e-12 * scale) {
        g.eigenvalues(k) = 0.0;
      } else {
        ++g.rank;
      }
    }
    g.Q = g.eigenvectors * g.eigenvalues.asDiagonal() * g.eigenvectors.transpose();
    if (kappa == 0.0) g.rank = 0;
    return g;
  }
};

/// Builds the gauge of a weight on one cell. On the cell the active set is
/// fixed, so the label-noise weight is the square root of a quadratic form.
inline CellGauge cell_gauge(PotentialKind kind, const CellDecomposition& decomp, std::size_t cell,
                            const Dataset& data) {
  const Index p = static_cast<Index>(decomp.dim + 1);
  if (kind == PotentialKind::tv) return CellGauge::from_form(cell, Matrix::Identity(p, p), 1.0);
  const auto& active = decomp.cells.at(cell).active_set;
  const double n = static_cast<double>(data.size());
  Matrix Q = Matrix::Zero(p, p);
  double chi = 0.0;
  for (std::size_t i : active) {
    const Vector x = data.lifted_point(i);
    Q += x * x.transpose() / n;
    chi += (1.0 + data.point(i).squaredNorm()) / n;
  }
  if (active.empty()) return CellGauge::from_form(cell, Q, 0.0);
  const double kappa = kind == PotentialKind::label_noise ? 1.0 : 2.0 * std::sqrt(chi);
  return CellGauge::from_form(cell, Q, kappa);
}

/// Local injectivity of theta -> (relu(<theta, x~_i>))_i: theta is off every
/// hyperplane and its active datapoints span R^{d+1}.
inline bool at_bulk(const Vector& theta, const Dataset& data, double margin = 1e-9) {
  const Vector pre = data.lifted() * theta;
  std::vector<Index> active;
  for (Index i = 0; i < pre.size(); ++i) {
    if (std::abs(pre(i)) <= margin * theta.norm()) return false;
    if (pre(i) > 0.0) active.push_back(i);
  }
  if (active.size() < data.dim() + 1) return false;
  Matrix rows(static_cast<Index>(active.size()), pre.size() ? data.lifted().cols() : 0);
  for (std::size_t k = 0; k < active.size(); ++k) rows.row(Index(k)) = data.lifted().row(active[k]);
  Eigen::FullPivLU<Matrix> lu(rows);
  lu.setThreshold(1e-9);
  return static_cast<std::size_t>(lu.rank()) == data.dim() + 1;
}

enum class ConvexityOutcome {
  strict,                 // w(mix) < mix of w
  equality_proportional,  // equality, parameters on one ray
  flat,                   // equality without proportionality: not effectively strict here
  violation,              // w(mix) > mix of w
};

inline const char* to_string(ConvexityOutcome o) {
  switch (o) {
    case ConvexityOutcome::strict: return "strict";
    case ConvexityOutcome::equality_proportional: return "equality_proportional";
    case ConvexityOutcome::flat: return "flat";
    case ConvexityOutcome::violation: return "violation";
  }
  return "unknown";
}

inline constexpr double kProportionalAngle = 1e-8;

/// Compares w(l theta + (1-l) theta') with l w(theta) + (1-l) w(theta').
inline ConvexityOutcome effective_convexity_test(const Potential& pot, const Vector& theta, const Vector& theta2,
                                                 double lambda, double rel_tol = 1e-10) {
  require(lambda > 0.0 && lambda < 1.0, ErrorCode::invalid_argument, "mixing weight must lie in (0, 1)");
  const double mixed = pot.weight(lambda * theta + (1.0 - lambda) * theta2);
  const double chord = lambda * pot.weight(theta) + (1.0 - lambda) * pot.weight(theta2);
  const double tol = rel_tol * std::max(chord, 1e-300);
  if (mixed > chord + tol) return ConvexityOutcome::violation;
  if (mixed < chord - tol) return ConvexityOutcome::strict;
  const bool proportional = theta.norm() == 0.0 || theta2.norm() == 0.0 ||
                            angular_distance(theta, theta2) < kProportionalAngle;
  return proportional ? ConvexityOutcome::equality_proportional : ConvexityOutcome::flat;
}

}  // namespace relusparse
