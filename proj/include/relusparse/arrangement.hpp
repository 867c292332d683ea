#pragma once

// Cells of the central hyperplane arrangement {theta : <theta, (x_i, 1)> = 0}
// in the inner-parameter space (a, b). Two neurons share a cell exactly when
// they are active on the same datapoints.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relusparse/core.hpp"
#include "relusparse/error.hpp"
#include "relusparse/simplex.hpp"

namespace relusparse {

/// s_i = +1 when datapoint i is active, -1 otherwise.
using SignVector = std::vector<int>;

struct ArrangementOptions {
  double feasibility_eps = 1e-9;
  double boundary_eps = 1e-9;
  /// Refuse enumeration when the region-count bound exceeds this.
  std::size_t max_cells = 1'000'000;
  bool allow_large = false;
};

struct Cell {
  SignVector signs;
  std::vector<std::size_t> active_set;
  Vector witness;  // strictly interior, |witness|_inf <= 1
  double margin = 0.0;
};

struct CellDecomposition {
  std::vector<Cell> cells;
  std::map<SignVector, std::size_t> lookup;
  std::uint64_t fingerprint = 0;
  std::size_t n = 0;
  std::size_t dim = 0;  // input dimension d; parameters live in R^{d+1}
  Matrix lifted;        // n x (d+1)
  /// representative[i] is the first datapoint with the same hyperplane as i.
  std::vector<std::size_t> representative;
  std::size_t distinct_hyperplanes = 0;
  bool generic = false;
  std::vector<std::string> warnings;
  ArrangementOptions options;

  std::size_t size() const { return cells.size(); }
};

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

/// Region count of a central arrangement of n hyperplanes in general
/// position in R^{d+1}: 2 * sum_{k=0}^{d} C(n-1, k).
inline std::uint64_t central_region_count(std::size_t n, std::size_t d) {
  if (n == 0) return 1;
  std::uint64_t s = 0;
  for (std::size_t k = 0; k <= d; ++k) s += binomial(n - 1, k);
  return 2 * s;
}

/// FNV-1a over the raw bytes of the datapoints.
inline std::uint64_t dataset_fingerprint(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t n = data.size();
  const std::uint64_t d = data.dim();
  mix(&n, sizeof n);
  mix(&d, sizeof d);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t k = 0; k < data.dim(); ++k) {
      const double v = data.points()(Index(i), Index(k));
      mix(&v, sizeof v);
    }
  return h;
}

/// True when the lifted points are distinct and every subset of size
/// min(n, d+1) is linearly independent.
inline bool in_general_position(const Dataset& data, double rank_tol = 1e-9) {
  const Matrix& L = data.lifted();
  const std::size_t n = data.size();
  const std::size_t k = std::min(n, data.dim() + 1);
  if (binomial(n, k) > 2'000'000) return false;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    Matrix sub(Index(k), L.cols());
    for (std::size_t i = 0; i < k; ++i) sub.row(Index(i)) = L.row(Index(idx[i]));
    Eigen::FullPivLU<Matrix> lu(sub);
    lu.setThreshold(rank_tol);
    if (static_cast<std::size_t>(lu.rank()) < k) return false;
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return true;
}

inline std::string format_signs(const SignVector& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += s[i] > 0 ? '+' : (s[i] < 0 ? '-' : '0');
  }
  return out + ")";
}

/// Enumerates every full-dimensional cell by incremental insertion of
/// hyperplanes; each candidate sign extension is certified by the margin LP.
/// Cells are returned in lexicographic sign-vector order (-1 before +1).
inline CellDecomposition enumerate_cells(const Dataset& data, const ArrangementOptions& options = {}) {
  CellDecomposition out;
  out.n = data.size();
  out.dim = data.dim();
  out.lifted = data.lifted();
  out.fingerprint = dataset_fingerprint(data);
  out.options = options;

  // Identical datapoints give identical hyperplanes.
  std::vector<std::size_t> distinct;
  out.representative.resize(out.n);
  for (std::size_t i = 0; i < out.n; ++i) {
    out.representative[i] = i;
    for (std::size_t j : distinct) {
      if (out.lifted.row(Index(i)) == out.lifted.row(Index(j))) {
        out.representative[i] = j;
        break;
      }
    }
    if (out.representative[i] == i) {
      distinct.push_back(i);
    } else {
      out.warnings.push_back("datapoint " + std::to_string(i) + " duplicates datapoint " +
                             std::to_string(out.representative[i]) + "; hyperplane deduplicated");
    }
  }
  out.distinct_hyperplanes = distinct.size();
  out.generic = distinct.size() == out.n && in_general_position(data);

  const std::uint64_t bound = central_region_count(distinct.size(), out.dim);
  if (bound > options.max_cells && !options.allow_large) {
    throw Error(ErrorCode::enumeration_limit, "region bound " + std::to_string(bound) + " exceeds limit " +
                                                  std::to_string(options.max_cells) + "; override to proceed");
  }

  const Index p = static_cast<Index>(out.dim + 1);
  struct Partial {
    SignVector signs;
    MarginResult certificate;
  };
  std::vector<Partial> partial{Partial{{}, {}}};
  for (std::size_t h = 0; h < distinct.size(); ++h) {
    Matrix rows(Index(h + 1), p);
    for (std::size_t q = 0; q <= h; ++q) rows.row(Index(q)) = out.lifted.row(Index(distinct[q]));
    std::vector<Partial> next;
    next.reserve(partial.size() * 2);
    for (const auto& cell : partial) {
      bool any = false;
      for (int s : {-1, +1}) {
        SignVector ext = cell.signs;
        ext.push_back(s);
        const MarginResult r = feasibility_lp(rows, ext, 1.0);
        if (r.margin > options.feasibility_eps) {
          next.push_back(Partial{std::move(ext), r});
          any = true;
        }
      }
      if (!any) {
        throw Error(ErrorCode::numerical, "margin subproblem lost cell " + format_signs(cell.signs) +
                                              " when inserting hyperplane " + std::to_string(distinct[h]));
      }
    }
    partial = std::move(next);
  }

  std::vector<std::size_t> distinct_pos(out.n, 0);
  for (std::size_t q = 0; q < distinct.size(); ++q) distinct_pos[distinct[q]] = q;
  out.cells.reserve(partial.size());
  for (auto& cell : partial) {
    Cell c;
    c.signs.resize(out.n);
    for (std::size_t i = 0; i < out.n; ++i) c.signs[i] = cell.signs[distinct_pos[out.representative[i]]];
    for (std::size_t i = 0; i < out.n; ++i)
      if (c.signs[i] > 0) c.active_set.push_back(i);
    c.witness = cell.certificate.witness;
    c.margin = cell.certificate.margin;
    out.cells.push_back(std::move(c));
  }
  std::sort(out.cells.begin(), out.cells.end(), [](const Cell& x, const Cell& y) { return x.signs < y.signs; });
  for (std::size_t k = 0; k < out.cells.size(); ++k) out.lookup.emplace(out.cells[k].signs, k);
  return out;
}

struct CellLocation {
  std::optional<std::size_t> cell;
  SignVector signs;                    // resolved pattern, boundary coordinates set to +1
  std::vector<std::size_t> boundary;   // datapoints whose hyperplane contains theta
  bool fallback = false;               // resolved pattern was not a cell; a neighbour was chosen

  bool on_boundary() const { return !boundary.empty(); }
};

/// Finds the closed cell containing theta. Coordinates within
/// boundary_eps * |theta| of a hyperplane count as active (+1). When that
/// resolution is not itself a cell, the cell agreeing on every non-boundary
/// coordinate with the most +1 entries is returned and `fallback` is set.
inline CellLocation locate_cell(const CellDecomposition& decomp, const Vector& theta) {
  require(theta.size() == static_cast<Index>(decomp.dim + 1), ErrorCode::dimension_mismatch,
          "theta must have dimension d+1");
  const double norm = theta.norm();
  require(norm > 0.0, ErrorCode::invalid_argument, "cannot locate the zero vector");
  CellLocation loc;
  loc.signs.resize(decomp.n);
  const Vector values = decomp.lifted * theta;
  for (std::size_t i = 0; i < decomp.n; ++i) {
    const double v = values(Index(i));
    if (std::abs(v) <= decomp.options.boundary_eps * norm) {
      loc.signs[i] = +1;
      loc.boundary.push_back(i);
    } else {
      loc.signs[i] = v > 0.0 ? +1 : -1;
    }
  }
  if (auto it = decomp.lookup.find(loc.signs); it != decomp.lookup.end()) {
    loc.cell = it->second;
    return loc;
  }
  std::optional<std::size_t> best;
  int best_plus = -1;
  for (std::size_t k = 0; k < decomp.cells.size(); ++k) {
    const auto& s = decomp.cells[k].signs;
    bool match = true;
    int plus = 0;
    std::size_t b = 0;
    for (std::size_t i = 0; i < decomp.n && match; ++i) {
      if (b < loc.boundary.size() && loc.boundary[b] == i) {
        plus += s[i] > 0;
        ++b;
      } else if (s[i] != loc.signs[i]) {
        match = false;
      }
    }
    if (match && plus > best_plus) {
      best = k;
      best_plus = plus;
    }
  }
  loc.cell = best;
  loc.fallback = true;
  return loc;
}

/// True iff s_i <v, x~_i> >= -boundary_eps |v| for every datapoint.
inline bool cone_membership(const CellDecomposition& decomp, std::size_t cell, const Vector& v) {
  const auto& signs = decomp.cells.at(cell).signs;
  const Vector values = decomp.lifted * v;
  const double tol = decomp.options.boundary_eps * v.norm();
  for (std::size_t i = 0; i < decomp.n; ++i)
    if (signs[i] * values(Index(i)) < -tol) return false;
  return true;
}

/// Checks (a.x+b)_+ + (a'.x+b')_+ = ((a+a').x + (b+b'))_+ at every datapoint.
/// This is the restricted linearity of a cell; it generally fails for
/// parameters in different cells.
inline bool cell_sum_check(const Vector& theta, const Vector& theta2, const Dataset& data, double rel_tol = 1e-9) {
  require(theta.size() == static_cast<Index>(data.dim() + 1) && theta2.size() == theta.size(),
          ErrorCode::dimension_mismatch, "parameters must have dimension d+1");
  const Vector sum = theta + theta2;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector x = data.lifted_point(i);
    const double lhs = relu(theta.dot(x)) + relu(theta2.dot(x));
    const double rhs = relu(sum.dot(x));
    const double scale = (theta.norm() + theta2.norm()) * x.norm();
    if (std::abs(lhs - rhs) > rel_tol * std::max(scale, 1e-300)) return false;
  }
  return true;
}

/// Same check with the same-cell precondition enforced.
inline bool cell_sum_check(const CellDecomposition& decomp, const Vector& theta, const Vector& theta2,
                           const Dataset& data, double rel_tol = 1e-9) {
  const auto l1 = locate_cell(decomp, theta);
  const auto l2 = locate_cell(decomp, theta2);
  require(l1.cell && l2.cell && *l1.cell == *l2.cell, ErrorCode::precondition,
          "parameters lie in different cells " + format_signs(l1.signs) + " and " + format_signs(l2.signs));
  return cell_sum_check(theta, theta2, data, rel_tol);
}

struct CellMoments {
  Vector a;      // integral of c a
  double b = 0;  // integral of c b

  Vector stacked() const {
    Vector out(a.size() + 1);
    out.head(a.size()) = a;
    out(a.size()) = b;
    return out;
  }
};

/// Moment estimates of a measure supported in one cell. Atoms with c = 0 or
/// theta = 0 carry no moment and are not located.
inline CellMoments cell_moments(const CellDecomposition& decomp, std::size_t cell, const AtomicMeasure& mu) {
  CellMoments m{Vector::Zero(Index(decomp.dim)), 0.0};
  for (std::size_t k = 0; k < mu.atoms.size(); ++k) {
    const auto& atom = mu.atoms[k];
    const Vector theta = atom.neuron.theta();
    if (atom.neuron.c == 0.0 || atom.mass == 0.0 || theta.norm() == 0.0) continue;
    require(cone_membership(decomp, cell, theta), ErrorCode::precondition,
            "atom " + std::to_string(k) + " lies outside cell " + std::to_string(cell));
    m.a += atom.mass * atom.neuron.c * atom.neuron.a;
    m.b += atom.mass * atom.neuron.c * atom.neuron.b;
  }
  return m;
}

}  // namespace relusparse
