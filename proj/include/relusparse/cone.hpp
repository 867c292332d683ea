#pragma once

// Polyhedral cones C = {v : G^T v >= 0} and the projections the solver needs.
// Two independent routes to P_C are provided: cyclic Dykstra over the
// half-spaces, and Moreau's decomposition P_C(w) = w + G l* with
// l* = argmin_{l >= 0} |w + G l|, solved by Lawson-Hanson NNLS.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "relusparse/core.hpp"
#include "relusparse/potentials.hpp"

namespace relusparse {

struct DykstraOptions {
  double tol = 1e-10;
  std::size_t max_sweeps = 20000;
};

struct DykstraResult {
  Vector point;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Projects w onto the intersection of half-spaces {v : <normals.col(i), v> >= offsets(i)}.
inline DykstraResult dykstra_halfspaces(const Vector& w, const Matrix& normals, const Vector& offsets,
                                        const DykstraOptions& opt = {}) {
  const Index k = normals.cols();
  DykstraResult out;
  out.point = w;
  if (k == 0) {
    out.converged = true;
    return out;
  }
  Vector sq(k);
  for (Index i = 0; i < k; ++i) sq(i) = normals.col(i).squaredNorm();
  Matrix increments = Matrix::Zero(w.size(), k);
  Vector& x = out.point;
  const double scale = 1.0 + w.norm();
  for (out.sweeps = 1; out.sweeps <= opt.max_sweeps; ++out.sweeps) {
    double moved = 0.0;
    for (Index i = 0; i < k; ++i) {
      if (sq(i) == 0.0) continue;
      const Vector y = x + increments.col(i);
      const double slack = normals.col(i).dot(y) - offsets(i);
      Vector p = y;
      if (slack < 0.0) p -= (slack / sq(i)) * normals.col(i);
      increments.col(i) = y - p;
      moved += (p - x).squaredNorm();
      x = p;
    }
    if (std::sqrt(moved) <= opt.tol * scale) {
      double worst = 0.0;
      for (Index i = 0; i < k; ++i)
        if (sq(i) > 0.0) worst = std::max(worst, (offsets(i) - normals.col(i).dot(x)) / std::sqrt(sq(i)));
      if (worst <= opt.tol * scale) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

struct NnlsResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Lawson-Hanson active set method for min |B x - d| subject to x >= 0.
inline NnlsResult nnls(const Matrix& B, const Vector& d, double tol = 1e-13) {
  const Index n = B.cols();
  NnlsResult out;
  out.x = Vector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double scale = (1.0 + B.cwiseAbs().maxCoeff()) * (1.0 + d.cwiseAbs().maxCoeff());
  auto solve_passive = [&](Vector& s) {
    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (passive[std::size_t(j)]) idx.push_back(j);
    s = Vector::Zero(n);
    if (idx.empty()) return;
    Matrix Bp(B.rows(), static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Bp.col(Index(k)) = B.col(idx[k]);
    const Vector sp = Bp.colPivHouseholderQr().solve(d);
    for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(Index(k));
  };
  const std::size_t max_outer = static_cast<std::size_t>(3 * n + 10);
  for (; out.iterations < max_outer; ++out.iterations) {
    const Vector grad = B.transpose() * (d - B * out.x);
    Index t = -1;
    double best = tol * scale;
    for (Index j = 0; j < n; ++j) {
      if (!passive[std::size_t(j)] && grad(j) > best) {
        best = grad(j);
        t = j;
      }
    }
    if (t < 0) {
      out.converged = true;
      break;
    }
    passive[std::size_t(t)] = true;
    Vector s;
    for (std::size_t inner = 0; inner < static_cast<std::size_t>(3 * n + 10); ++inner) {
      solve_passive(s);
      double alpha = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) {
        if (passive[std::size_t(j)] && s(j) <= 0.0) {
          const double denom = out.x(j) - s(j);
          if (denom > 0.0) alpha = std::min(alpha, out.x(j) / denom);
        }
      }
      if (!std::isfinite(alpha)) break;
      out.x += alpha * (s - out.x);
      for (Index j = 0; j < n; ++j) {
        if (passive[std::size_t(j)] && out.x(j) <= 1e-15 * (1.0 + out.x.cwiseAbs().maxCoeff())) {
          passive[std::size_t(j)] = false;
          out.x(j) = 0.0;
        }
      }
    }
    for (Index j = 0; j < n; ++j) out.x(j) = passive[std::size_t(j)] ? std::max(0.0, s(j)) : 0.0;
  }
  return out;
}

/// Inward normals s_i x~_i of a cell, one column per datapoint.
inline Matrix cell_normals(const CellDecomposition& decomp, std::size_t cell) {
  const auto& signs = decomp.cells.at(cell).signs;
  Matrix G(decomp.lifted.cols(), static_cast<Index>(decomp.n));
  for (std::size_t i = 0; i < decomp.n; ++i)
    G.col(Index(i)) = static_cast<double>(signs[i]) * decomp.lifted.row(Index(i)).transpose();
  return G;
}

inline Vector project_cone_dykstra(const Vector& w, const Matrix& normals, const DykstraOptions& opt = {}) {
  return dykstra_halfspaces(w, normals, Vector::Zero(normals.cols()), opt).point;
}

inline Vector project_cone_exact(const Vector& w, const Matrix& normals) {
  const NnlsResult r = nnls(normals, -w);
  return w + normals * r.x;
}

/// Proximal map of t * g for a cell gauge, computed as w - P_B(w) where B is
/// the dual ball {p in range(Q) : p^T Q^+ p <= (t kappa)^2}. Directions in
/// the nullspace of Q are cost free and pass through unchanged.
inline Vector gauge_prox(const CellGauge& g, const Vector& w, double t) {
  const double radius = t * g.kappa;
  if (radius <= 0.0) return w;
  const Vector coords = g.eigenvectors.transpose() * w;
  const Vector& lam = g.eigenvalues;
  double inside = 0.0;
  for (Index k = 0; k < lam.size(); ++k)
    if (lam(k) > 0.0) inside += coords(k) * coords(k) / lam(k);
  Vector proj = Vector::Zero(lam.size());
  if (inside <= radius * radius) {
    for (Index k = 0; k < lam.size(); ++k)
      if (lam(k) > 0.0) proj(k) = coords(k);
  } else {
    // Solve sum_k c_k^2 lam_k / (lam_k + tau)^2 = r^2 for tau > 0 (decreasing in tau).
    auto excess = [&](double tau) {
      double s = 0.0;
      for (Index k = 0; k < lam.size(); ++k)
        if (lam(k) > 0.0) s += coords(k) * coords(k) * lam(k) / ((lam(k) + tau) * (lam(k) + tau));
      return s - radius * radius;
    };
    double lo = 0.0;
    double hi = 1.0;
    while (excess(hi) > 0.0) hi *= 2.0;
    double tau = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      tau = 0.5 * (lo + hi);
      if (excess(tau) > 0.0) {
        lo = tau;
      } else {
        hi = tau;
      }
      if (hi - lo <= 1e-16 * hi) break;
    }
    for (Index k = 0; k < lam.size(); ++k)
      if (lam(k) > 0.0) proj(k) = coords(k) * lam(k) / (lam(k) + tau);
  }
  return w - g.eigenvectors * proj;
}

/// sup { <q, v> : v in C, g(v) <= 1 }, evaluated through its dual
/// min_{l >= 0} g°(q + G l). Returns +inf when the minimiser leaves range(Q).
inline double restricted_dual_norm(const CellGauge& g, const Matrix& normals, const Vector& q) {
  if (g.kappa == 0.0) return q.norm() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  const Index p = q.size();
  constexpr double kNullWeight = 1e8;
  Matrix W(p, p);
  for (Index k = 0; k < p; ++k) {
    const double lam = g.eigenvalues(k);
    const double f = lam > 0.0 ? 1.0 / std::sqrt(lam) : kNullWeight;
    W.row(k) = f * g.eigenvectors.col(k).transpose();
  }
  const NnlsResult r = nnls(W * normals, -(W * q));
  const Vector p_star = q + normals * r.x;
  double range_sq = 0.0;
  double null_sq = 0.0;
  for (Index k = 0; k < p; ++k) {
    const double c = g.eigenvectors.col(k).dot(p_star);
    if (g.eigenvalues(k) > 0.0) {
      range_sq += c * c / g.eigenvalues(k);
    } else {
      null_sq += c * c;
    }
  }
  if (std::sqrt(null_sq) > 1e-7 * (1.0 + q.norm())) return std::numeric_limits<double>::infinity();
  return std::sqrt(range_sq) / g.kappa;
}

/// Replaces the cost-free (nullspace) component of v by the smallest one
/// keeping v in the cone. Gauge value and predictions on the cell's active
/// datapoints are unchanged.
inline Vector canonicalize_flat(const CellGauge& g, const Matrix& normals, const Vector& v) {
  if (!g.degenerate()) return v;
  std::vector<Index> null_cols;
  for (Index k = 0; k < g.eigenvalues.size(); ++k)
    if (g.eigenvalues(k) == 0.0 || g.kappa == 0.0) null_cols.push_back(k);
  Matrix N(v.size(), static_cast<Index>(null_cols.size()));
  for (std::size_t k = 0; k < null_cols.size(); ++k) N.col(Index(k)) = g.eigenvectors.col(null_cols[k]);
  const Vector ranged = v - N * (N.transpose() * v);
  // Constraints <G_i, ranged + N gamma> >= 0 in gamma-space.
  Matrix normals_gamma = N.transpose() * normals;
  for (Index i = 0; i < normals.cols(); ++i)
    if (normals_gamma.col(i).norm() <= 1e-12 * normals.col(i).norm()) normals_gamma.col(i).setZero();
  Vector offsets(normals.cols());
  for (Index i = 0; i < normals.cols(); ++i) offsets(i) = -normals.col(i).dot(ranged);
  DykstraOptions opt;
  opt.tol = 1e-13;
  opt.max_sweeps = 100000;
  const auto r = dykstra_halfspaces(Vector::Zero(N.cols()), normals_gamma, offsets, opt);
  const Vector candidate = ranged + N * r.point;
  // Constraints the nullspace cannot move keep whatever slack v had.
  const double tol = 1e-10 * (1.0 + v.norm());
  const double floor = std::min(0.0, (normals.transpose() * v).minCoeff());
  for (Index i = 0; i < normals.cols(); ++i)
    if (normals.col(i).dot(candidate) < floor - tol) return v;
  return candidate;
}

}  // namespace relusparse
