#pragma once

// Dense two-phase primal simplex with Bland's anti-cycling rule, plus the two
// linear programs built on it: basis pursuit (min |z|_1 s.t. Az = y) and the
// margin-maximisation subproblem used to certify arrangement cells.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "relusparse/core.hpp"
#include "relusparse/error.hpp"

namespace relusparse {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

struct SimplexOptions {
  double pivot_tol = 1e-11;
  double cost_tol = 1e-11;
  double feasibility_tol = 1e-9;
  std::size_t max_iterations = 200000;
};

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Vector x;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<Index> basis;  // basic column indices (original variables only)
};

namespace detail {

class Tableau {
 public:
  // Columns: [original N | artificial m | rhs].
  Tableau(const Matrix& A, const Vector& b) : m_(A.rows()), n_(A.cols()), t_(A.rows(), A.cols() + A.rows() + 1) {
    t_.setZero();
    t_.leftCols(n_) = A;
    t_.block(0, n_, m_, m_).setIdentity();
    t_.col(n_ + m_) = b;
    for (Index r = 0; r < m_; ++r) {
      if (t_(r, n_ + m_) < 0.0) t_.row(r) *= -1.0;
      t_(r, n_ + r) = 1.0;
    }
    basis_.resize(static_cast<std::size_t>(m_));
    for (Index r = 0; r < m_; ++r) basis_[std::size_t(r)] = n_ + r;
    rows_.resize(static_cast<std::size_t>(m_));
    for (Index r = 0; r < m_; ++r) rows_[std::size_t(r)] = r;
  }

  Index rhs_col() const { return n_ + m_; }

  // Runs Bland-rule iterations for the cost vector over allowed columns.
  LpStatus optimise(const Vector& cost, const std::vector<bool>& allowed, const SimplexOptions& opt,
                    std::size_t& iterations) {
    const Index cols = n_ + m_;
    while (true) {
      if (iterations >= opt.max_iterations) return LpStatus::iteration_limit;
      Vector cb(static_cast<Index>(rows_.size()));
      for (std::size_t k = 0; k < rows_.size(); ++k) cb(Index(k)) = cost(basis_[k]);
      Index entering = -1;
      const double scale = 1.0 + cost.cwiseAbs().maxCoeff();
      for (Index j = 0; j < cols; ++j) {
        if (!allowed[std::size_t(j)] || is_basic(j)) continue;
        double reduced = cost(j);
        for (std::size_t k = 0; k < rows_.size(); ++k) reduced -= cb(Index(k)) * t_(rows_[k], j);
        if (reduced < -opt.cost_tol * scale) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return LpStatus::optimal;

      std::size_t leave = rows_.size();
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < rows_.size(); ++k) {
        const double a = t_(rows_[k], entering);
        if (a <= opt.pivot_tol) continue;
        const double ratio = t_(rows_[k], rhs_col()) / a;
        const double tie = 1e-14 * (1.0 + std::abs(best_ratio));
        if (leave == rows_.size() || ratio < best_ratio - tie ||
            (std::abs(ratio - best_ratio) <= tie && basis_[k] < basis_[leave])) {
          best_ratio = ratio;
          leave = k;
        }
      }
      if (leave == rows_.size()) return LpStatus::unbounded;
      pivot(leave, entering);
      ++iterations;
    }
  }

  void pivot(std::size_t k, Index j) {
    const Index r = rows_[k];
    t_.row(r) /= t_(r, j);
    for (std::size_t q = 0; q < rows_.size(); ++q) {
      const Index rr = rows_[q];
      if (rr == r) continue;
      const double f = t_(rr, j);
      if (f != 0.0) t_.row(rr) -= f * t_.row(r);
    }
    t_.col(j).setZero();
    t_(r, j) = 1.0;
    basis_[k] = j;
  }

  bool is_basic(Index j) const {
    for (Index b : basis_)
      if (b == j) return true;
    return false;
  }

  // Removes artificial variables from the basis after phase 1; rows whose
  // artificial cannot leave are redundant and dropped.
  void expel_artificials(const SimplexOptions& opt) {
    for (std::size_t k = 0; k < rows_.size();) {
      if (basis_[k] < n_) {
        ++k;
        continue;
      }
      const Index r = rows_[k];
      Index best = -1;
      double best_abs = opt.pivot_tol * 100.0;
      for (Index j = 0; j < n_; ++j) {
        if (is_basic(j)) continue;
        if (std::abs(t_(r, j)) > best_abs) {
          best_abs = std::abs(t_(r, j));
          best = j;
        }
      }
      if (best >= 0) {
        pivot(k, best);
        ++k;
      } else {
        rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(k));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(k));
      }
    }
  }

  double artificial_sum() const {
    double s = 0.0;
    for (std::size_t k = 0; k < rows_.size(); ++k)
      if (basis_[k] >= n_) s += t_(rows_[k], rhs_col());
    return s;
  }

  Vector primal() const {
    Vector x = Vector::Zero(n_);
    for (std::size_t k = 0; k < rows_.size(); ++k)
      if (basis_[k] < n_) x(basis_[k]) = std::max(0.0, t_(rows_[k], rhs_col()));
    return x;
  }

  const std::vector<Index>& basis() const { return basis_; }
  const std::vector<Index>& rows() const { return rows_; }
  Index artificial_begin() const { return n_; }

 private:
  Index m_;
  Index n_;
  Matrix t_;
  std::vector<Index> basis_;
  std::vector<Index> rows_;
};

}  // namespace detail

/// Solves min c^T x s.t. A x = b, x >= 0 by the two-phase method.
/// The returned x is a basic solution, refined by a direct solve with the
/// final basis.
inline LpResult simplex_standard_form(const Matrix& A, const Vector& b, const Vector& c,
                                      const SimplexOptions& opt = {}) {
  require(b.size() == A.rows() && c.size() == A.cols(), ErrorCode::dimension_mismatch, "LP data sizes disagree");
  require(A.allFinite() && b.allFinite() && c.allFinite(), ErrorCode::invalid_argument, "LP data must be finite");
  const Index m = A.rows();
  const Index n = A.cols();
  LpResult result;
  detail::Tableau tab(A, b);

  Vector phase1_cost = Vector::Zero(n + m);
  phase1_cost.tail(m).setOnes();
  std::vector<bool> allowed(static_cast<std::size_t>(n + m), true);
  LpStatus st = tab.optimise(phase1_cost, allowed, opt, result.iterations);
  if (st == LpStatus::iteration_limit) {
    result.status = st;
    return result;
  }
  const double bscale = 1.0 + (b.size() ? b.cwiseAbs().maxCoeff() : 0.0);
  if (tab.artificial_sum() > opt.feasibility_tol * bscale) {
    result.status = LpStatus::infeasible;
    return result;
  }
  tab.expel_artificials(opt);

  Vector phase2_cost = Vector::Zero(n + m);
  phase2_cost.head(n) = c;
  for (Index j = n; j < n + m; ++j) allowed[std::size_t(j)] = false;
  st = tab.optimise(phase2_cost, allowed, opt, result.iterations);
  result.status = st;
  if (st != LpStatus::optimal) return result;

  Vector x = tab.primal();
  // Refine basic values against the original data.
  std::vector<Index> basic;
  for (Index j : tab.basis())
    if (j < n) basic.push_back(j);
  if (!basic.empty()) {
    Matrix B(m, static_cast<Index>(basic.size()));
    for (std::size_t k = 0; k < basic.size(); ++k) B.col(Index(k)) = A.col(basic[k]);
    const Vector xb = B.colPivHouseholderQr().solve(b);
    if (xb.allFinite() && xb.minCoeff() >= -1e-9 * (1.0 + x.cwiseAbs().maxCoeff()) &&
        (B * xb - b).cwiseAbs().maxCoeff() <= (A * x - b).cwiseAbs().maxCoeff() + 1e-15) {
      x.setZero();
      for (std::size_t k = 0; k < basic.size(); ++k) x(basic[k]) = std::max(0.0, xb(Index(k)));
    }
  }
  result.x = x;
  result.basis = basic;
  result.objective = c.dot(x);
  return result;
}

/// Basis pursuit data: min |z|_1 subject to A z = y.
struct LpInstance {
  Matrix A;
  Vector y;
};

struct L1Result {
  Vector z;
  std::vector<std::size_t> support;
  double objective = 0.0;
  std::size_t iterations = 0;
};

/// Solves min |z|_1 s.t. Az = y via z = z+ - z-. Basic optimal solutions
/// have at most rows(A) nonzeros.
inline L1Result lp_l1(const LpInstance& instance, const SimplexOptions& opt = {}) {
  const Matrix& A = instance.A;
  require(instance.y.size() == A.rows(), ErrorCode::dimension_mismatch, "LP right-hand side has the wrong length");
  const Index s = A.cols();
  Matrix split(A.rows(), 2 * s);
  split.leftCols(s) = A;
  split.rightCols(s) = -A;
  const Vector cost = Vector::Ones(2 * s);
  const LpResult lp = simplex_standard_form(split, instance.y, cost, opt);
  if (lp.status == LpStatus::infeasible) throw Error(ErrorCode::infeasible, "A z = y has no solution");
  if (lp.status != LpStatus::optimal)
    throw Error(ErrorCode::non_convergence, std::string("simplex stopped: ") + to_string(lp.status));
  L1Result out;
  out.z = lp.x.head(s) - lp.x.tail(s);
  out.iterations = lp.iterations;
  const double tol = 1e-12 * (1.0 + out.z.cwiseAbs().maxCoeff());
  for (Index k = 0; k < s; ++k) {
    if (std::abs(out.z(k)) > tol) {
      out.support.push_back(static_cast<std::size_t>(k));
    } else {
      out.z(k) = 0.0;
    }
  }
  out.objective = out.z.cwiseAbs().sum();
  return out;
}

struct MarginResult {
  double margin = 0.0;
  Vector witness;
};

/// Maximises t subject to signs[i] <rows.row(i), theta> >= t and
/// |theta|_inf <= box. The optimum is bounded whenever rows is nonempty.
inline MarginResult feasibility_lp(const Matrix& rows, std::span<const int> signs, double box = 1.0,
                                   const SimplexOptions& opt = {}) {
  const Index k = rows.rows();
  const Index p = rows.cols();
  require(k >= 1, ErrorCode::invalid_argument, "margin LP needs at least one constraint row");
  require(static_cast<Index>(signs.size()) == k, ErrorCode::dimension_mismatch, "one sign per row is required");
  require(box > 0.0, ErrorCode::invalid_argument, "box bound must be positive");
  // Variables: phi (p) with theta = phi - box, w (p) box slacks, t+, t-, e (k) surpluses.
  const Index nvar = 2 * p + 2 + k;
  Matrix A = Matrix::Zero(k + p, nvar);
  Vector b(k + p);
  for (Index i = 0; i < k; ++i) {
    const double s = static_cast<double>(signs[std::size_t(i)]);
    A.block(i, 0, 1, p) = s * rows.row(i);
    A(i, 2 * p) = -1.0;
    A(i, 2 * p + 1) = 1.0;
    A(i, 2 * p + 2 + i) = -1.0;
    b(i) = s * box * rows.row(i).sum();
  }
  for (Index j = 0; j < p; ++j) {
    A(k + j, j) = 1.0;
    A(k + j, p + j) = 1.0;
    b(k + j) = 2.0 * box;
  }
  Vector cost = Vector::Zero(nvar);
  cost(2 * p) = -1.0;
  cost(2 * p + 1) = 1.0;
  const LpResult lp = simplex_standard_form(A, b, cost, opt);
  if (lp.status != LpStatus::optimal)
    throw Error(ErrorCode::numerical, std::string("margin LP failed: ") + to_string(lp.status));
  MarginResult out;
  out.witness = lp.x.head(p).array() - box;
  // Report the margin actually attained by the witness.
  double t = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < k; ++i)
    t = std::min(t, static_cast<double>(signs[std::size_t(i)]) * rows.row(i).dot(out.witness));
  out.margin = t;
  return out;
}

}  // namespace relusparse
