#pragma once

// The finite program obtained by aggregating a measure cell by cell:
//
//   min  sum_s g_s(u_s) + g_s(v_s)
//   s.t. sum_{s : i in A_s} <x~_i, u_s - v_s> = y_i,   u_s, v_s in C_s
//
// (or the squared-loss penalised variant), where u_s and v_s collect the
// positive and negative outer-weight mass of cell s. Only cells with a
// nonempty active set carry variables.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relusparse/arrangement.hpp"
#include "relusparse/cone.hpp"
#include "relusparse/core.hpp"
#include "relusparse/error.hpp"
#include "relusparse/potentials.hpp"
#include "relusparse/rng.hpp"
#include "relusparse/simplex.hpp"

namespace relusparse {

enum class ProgramMode { constrained, penalized };

inline const char* to_string(ProgramMode m) { return m == ProgramMode::constrained ? "constrained" : "penalized"; }

inline ProgramMode parse_program_mode(const std::string& s) {
  if (s == "constrained") return ProgramMode::constrained;
  if (s == "penalized") return ProgramMode::penalized;
  throw Error(ErrorCode::invalid_argument, "unknown mode '" + s + "' (expected constrained or penalized)");
}

struct FiniteProgram {
  PotentialKind kind = PotentialKind::tv;
  ProgramMode mode = ProgramMode::constrained;
  double lambda = 0.0;  // penalised mode only
  std::size_t n = 0;
  std::size_t param_dim = 0;        // d + 1
  std::vector<std::size_t> cells;   // decomposition indices carrying variables
  std::vector<CellGauge> gauges;    // one per program cell
  std::vector<Matrix> normals;      // inward cone normals per program cell
  Matrix constraint;                // n x (2 K p); blocks ordered u_0, v_0, u_1, v_1, ...
  Vector targets;
  Matrix lifted;                    // n x (d+1)
  std::uint64_t fingerprint = 0;

  std::size_t program_cells() const { return cells.size(); }
  std::size_t variable_count() const { return 2 * cells.size() * param_dim; }
};

inline FiniteProgram build_program(const Dataset& data, const CellDecomposition& decomp, PotentialKind kind,
                                   ProgramMode mode, double lambda = 0.0) {
  require(decomp.fingerprint == dataset_fingerprint(data) && decomp.n == data.size(), ErrorCode::precondition,
          "cell decomposition was built from a different dataset");
  if (mode == ProgramMode::penalized)
    require(lambda > 0.0, ErrorCode::invalid_argument, "penalised mode needs lambda > 0");
  FiniteProgram prog;
  prog.kind = kind;
  prog.mode = mode;
  prog.lambda = lambda;
  prog.n = data.size();
  prog.param_dim = data.dim() + 1;
  prog.targets = data.targets();
  prog.lifted = data.lifted();
  prog.fingerprint = decomp.fingerprint;
  for (std::size_t s = 0; s < decomp.cells.size(); ++s) {
    if (decomp.cells[s].active_set.empty()) continue;
    prog.cells.push_back(s);
    prog.gauges.push_back(cell_gauge(kind, decomp, s, data));
    prog.normals.push_back(cell_normals(decomp, s));
  }
  const Index p = static_cast<Index>(prog.param_dim);
  prog.constraint = Matrix::Zero(static_cast<Index>(prog.n), static_cast<Index>(prog.variable_count()));
  for (std::size_t j = 0; j < prog.cells.size(); ++j) {
    for (std::size_t i : decomp.cells[prog.cells[j]].active_set) {
      prog.constraint.block(Index(i), Index(2 * j) * p, 1, p) = data.lifted().row(Index(i));
      prog.constraint.block(Index(i), Index(2 * j + 1) * p, 1, p) = -data.lifted().row(Index(i));
    }
  }
  return prog;
}

enum class ConeProjection { dykstra, exact };

inline constexpr double kCertificateTol = 1e-6;

struct SolverConfig {
  std::size_t max_iters = 400000;
  double tol_feas = 1e-7;
  double tol_obj = 1e-9;
  std::size_t window = 100;
  double rho = 1.0;
  /// Over-relaxation factor in (0, 2).
  double relaxation = 1.0;
  std::size_t balance_every = 50;
  double balance_factor = 2.0;
  double balance_ratio = 10.0;
  /// Rho is frozen after this many changes of balancing direction, which
  /// rules out limit cycles of the adaptation.
  std::size_t balance_reversals = 6;
  /// Random starting point when nonzero init_scale; seed selects it.
  std::uint64_t seed = 0;
  double init_scale = 0.0;
  ConeProjection cone_projection = ConeProjection::dykstra;
  bool polish = true;
  /// Polishing is also attempted every polish_every iterations once both
  /// residuals fall below polish_trigger (relative to the target scale).
  std::size_t polish_every = 500;
  double polish_trigger = 1e-4;
  DykstraOptions dykstra;
  double atom_eps_rel = 1e-6;
  /// Angle above which a cell's positive and negative parts count as
  /// distinct points.
  double proportional_angle = 1e-6;
  /// Relative slack under which a block counts as lying on a cell facet.
  double boundary_angle = 1e-6;
};

struct CellBlock {
  std::size_t cell = 0;  // decomposition index
  Vector positive;       // u_s
  Vector negative;       // v_s
};

struct Certificate {
  Vector multipliers;                 // beta, one per datapoint
  double dual_objective = 0.0;
  double gap = 0.0;
  double max_dual_norm = 0.0;         // should be <= 1
  double min_alignment = 1.0;         // <q, u>/g(u) on active blocks, should be 1
  bool holds = false;
};

struct Solution {
  std::vector<CellBlock> blocks;
  double objective = 0.0;
  double regulariser = 0.0;
  double loss = 0.0;  // penalised mode
  double primal_residual = 0.0;
  double atom_eps = 0.0;
  RadonMeasure radon;
  std::size_t iterations = 0;
  bool converged = false;
  Certificate certificate;
  bool polished = false;  // refined by Newton steps on the identified support
  std::vector<std::size_t> flat_cells;           // cells with a degenerate gauge
  std::vector<std::size_t> support_violations;   // cells with two distinct interior points
  std::vector<std::size_t> boundary_pairs;       // two distinct points, one on a facet
  double merge_angle = 1e-6;
  Vector fitted;                                 // predictions at the datapoints
  double final_rho = 0.0;
};

namespace detail {

inline double program_regulariser(const FiniteProgram& prog, const Vector& x) {
  const Index p = static_cast<Index>(prog.param_dim);
  double s = 0.0;
  for (std::size_t j = 0; j < prog.cells.size(); ++j) {
    s += prog.gauges[j](x.segment(Index(2 * j) * p, p));
    s += prog.gauges[j](x.segment(Index(2 * j + 1) * p, p));
  }
  return s;
}

inline double program_objective(const FiniteProgram& prog, const Vector& x) {
  const double reg = program_regulariser(prog, x);
  if (prog.mode == ProgramMode::constrained) return reg;
  const Vector r = prog.constraint * x - prog.targets;
  return 0.5 * r.squaredNorm() / static_cast<double>(prog.n) + prog.lambda * reg;
}

/// Optimality certificate for multipliers beta: M^T beta / mu must lie in
/// the cone-restricted dual ball of every block and attain it on blocks
/// carrying mass.
inline Certificate certify(const FiniteProgram& prog, const Vector& x, const Vector& beta, double atom_eps) {
  Certificate cert;
  cert.multipliers = beta;
  const Index p = static_cast<Index>(prog.param_dim);
  const Index blocks = static_cast<Index>(2 * prog.cells.size());
  const double n = static_cast<double>(prog.n);
  const double mu = prog.mode == ProgramMode::constrained ? 1.0 : prog.lambda;
  if (blocks == 0) {
    cert.holds = true;
    return cert;
  }
  cert.dual_objective = prog.mode == ProgramMode::constrained ? beta.dot(prog.targets)
                                                              : beta.dot(prog.targets) - 0.5 * n * beta.squaredNorm();
  const Vector q = prog.constraint.transpose() * beta;
  for (Index b = 0; b < blocks; ++b) {
    const std::size_t j = std::size_t(b / 2);
    const Vector qb = q.segment(b * p, p) / mu;
    cert.max_dual_norm = std::max(cert.max_dual_norm, restricted_dual_norm(prog.gauges[j], prog.normals[j], qb));
    const Vector xb = x.segment(b * p, p);
    const double gx = prog.gauges[j](xb);
    if (xb.norm() > atom_eps && gx > atom_eps * 1e-3) cert.min_alignment = std::min(cert.min_alignment, qb.dot(xb) / gx);
  }
  cert.gap = program_objective(prog, x) - cert.dual_objective;
  cert.holds = cert.max_dual_norm <= 1.0 + kCertificateTol && cert.min_alignment >= 1.0 - kCertificateTol;
  return cert;
}

/// Newton iterations on the KKT system of the program reduced to the blocks
/// carrying mass, with the cone facets they touch held as equalities.
/// Returns the refined point and its multipliers.
template <class Config>
std::optional<std::pair<Vector, Vector>> polish(const FiniteProgram& prog, const Vector& x0, double atom_eps,
                                                const Config& cfg) {
  const Index p = static_cast<Index>(prog.param_dim);
  const Index nb = static_cast<Index>(2 * prog.cells.size());
  const Index n = static_cast<Index>(prog.n);
  const bool constrained = prog.mode == ProgramMode::constrained;
  const double mu = constrained ? 1.0 : prog.lambda;
  std::vector<Index> active;
  for (Index b = 0; b < nb; ++b)
    if (x0.segment(b * p, p).norm() > atom_eps) active.push_back(b);
  if (active.empty()) return std::nullopt;
  const Index nv = static_cast<Index>(active.size()) * p;
  std::vector<std::pair<Index, Vector>> facets;  // (local block, normal)
  for (std::size_t k = 0; k < active.size(); ++k) {
    const Index b = active[k];
    const Matrix& G = prog.normals[std::size_t(b / 2)];
    const Vector xb = x0.segment(b * p, p);
    for (Index i = 0; i < G.cols(); ++i) {
      const double gn = G.col(i).norm();
      if (gn > 0.0 && G.col(i).dot(xb) <= cfg.boundary_angle * gn * xb.norm())
        facets.emplace_back(Index(k), G.col(i) / gn);
    }
  }
  Matrix MA(n, nv);
  for (std::size_t k = 0; k < active.size(); ++k) MA.middleCols(Index(k) * p, p) = prog.constraint.middleCols(active[k] * p, p);
  const Index rows_data = constrained ? n : 0;
  const Index ne = rows_data + static_cast<Index>(facets.size());
  Matrix E = Matrix::Zero(ne, nv);
  Vector e = Vector::Zero(ne);
  if (constrained) {
    E.topRows(n) = MA;
    e.head(n) = prog.targets;
  }
  for (std::size_t f = 0; f < facets.size(); ++f)
    E.block(rows_data + Index(f), facets[f].first * p, 1, p) = facets[f].second.transpose();

  Vector x(nv);
  for (std::size_t k = 0; k < active.size(); ++k) x.segment(Index(k) * p, p) = x0.segment(active[k] * p, p);
  Vector lambda = Vector::Zero(ne);
  const double dn = static_cast<double>(prog.n);
  for (int it = 0; it < 50; ++it) {
    Vector grad = Vector::Zero(nv);
    Matrix H = Matrix::Zero(nv, nv);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto& g = prog.gauges[std::size_t(active[k] / 2)];
      const Vector xb = x.segment(Index(k) * p, p);
      const Vector Qx = g.Q * xb;
      const double s = std::sqrt(std::max(xb.dot(Qx), 0.0));
      if (s <= 0.0 || g.kappa == 0.0) continue;
      grad.segment(Index(k) * p, p) = mu * g.kappa * Qx / s;
      H.block(Index(k) * p, Index(k) * p, p, p) = mu * g.kappa * (g.Q / s - Qx * Qx.transpose() / (s * s * s));
    }
    if (!constrained) {
      grad += MA.transpose() * (MA * x - prog.targets) / dn;
      H += MA.transpose() * MA / dn;
    }
    Matrix KKT = Matrix::Zero(nv + ne, nv + ne);
    KKT.topLeftCorner(nv, nv) = H;
    KKT.topRightCorner(nv, ne) = -E.transpose();
    KKT.bottomLeftCorner(ne, nv) = E;
    Vector rhs(nv + ne);
    rhs.head(nv) = -grad;
    rhs.tail(ne) = e - E * x;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(KKT);
    const Vector sol = cod.solve(rhs);
    if (!sol.allFinite()) return std::nullopt;
    const Vector dx = sol.head(nv);
    lambda = sol.tail(ne);
    x += dx;
    if (dx.norm() <= 1e-15 * (1.0 + x.norm())) break;
  }
  Vector out = Vector::Zero(x0.size());
  for (std::size_t k = 0; k < active.size(); ++k) {
    const Index b = active[k];
    const auto j = std::size_t(b / 2);
    out.segment(b * p, p) = canonicalize_flat(prog.gauges[j], prog.normals[j], x.segment(Index(k) * p, p));
  }
  Vector beta = constrained ? Vector(lambda.head(n)) : Vector((prog.targets - prog.constraint * out) / dn);
  return std::make_pair(out, beta);
}

}  // namespace detail

/// Positive blocks give atoms (u/|u|, +|u|), negative ones (v/|v|, -|v|);
/// blocks with norm at most atom_eps are solver noise and skipped. Blocks of
/// adjacent cells on one shared boundary ray become a single atom.
inline RadonMeasure extract_radon(const Solution& sol) {
  std::vector<Vector> sums;  // signed vector sums per ray
  std::vector<Vector> rays;
  auto add = [&](const Vector& v, double sign) {
    const double norm = v.norm();
    if (norm <= sol.atom_eps) return;
    for (std::size_t k = 0; k < rays.size(); ++k) {
      if (angular_distance(rays[k], v) <= sol.merge_angle) {
        sums[k] += sign * v;
        return;
      }
    }
    rays.push_back(v / norm);
    sums.push_back(sign * v);
  };
  for (const auto& block : sol.blocks) {
    add(block.positive, 1.0);
    add(block.negative, -1.0);
  }
  RadonMeasure nu;
  for (std::size_t k = 0; k < rays.size(); ++k) {
    const double mass = sums[k].dot(rays[k]);
    if (std::abs(mass) > sol.atom_eps) nu.atoms.push_back({rays[k], mass});
  }
  return nu;
}

/// True when w lies within rel_tol (relative angle) of a facet of the cone.
inline bool on_cone_boundary(const Matrix& normals, const Vector& w, double rel_tol = 1e-6) {
  const double wn = w.norm();
  if (wn == 0.0) return true;
  for (Index i = 0; i < normals.cols(); ++i) {
    const double gn = normals.col(i).norm();
    if (gn > 0.0 && normals.col(i).dot(w) <= rel_tol * gn * wn) return true;
  }
  return false;
}

inline double feasibility_residual(const FiniteProgram& prog) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(prog.constraint);
  const Vector x = cod.solve(prog.targets);
  return (prog.constraint * x - prog.targets).cwiseAbs().maxCoeff();
}

/// Consensus operator splitting over three copies of the variables: one
/// for the interpolation constraints (or squared loss), one for the cell
/// cones and one for the gauges. The penalty rho is rebalanced from the
/// primal and dual residuals.
inline Solution solve(const FiniteProgram& prog, const SolverConfig& cfg = {}) {
  const Index p = static_cast<Index>(prog.param_dim);
  const Index K = static_cast<Index>(prog.cells.size());
  const Index N = static_cast<Index>(prog.variable_count());
  const double n = static_cast<double>(prog.n);
  const Matrix& M = prog.constraint;
  const Vector& y = prog.targets;

  const double yscale = 1.0 + y.cwiseAbs().maxCoeff();
  Matrix pinv;
  if (prog.mode == ProgramMode::constrained) {
    if (N == 0) {
      require(y.cwiseAbs().maxCoeff() <= 1e-12, ErrorCode::infeasible, "no cell is active on any datapoint");
    } else {
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
      pinv = cod.pseudoInverse();
      const double res = (M * (pinv * y) - y).cwiseAbs().maxCoeff();
      require(res <= 1e-9 * yscale, ErrorCode::infeasible,
              "targets are not interpolable by any measure (residual " + std::to_string(res) + ")");
    }
  }

  Vector z = Vector::Zero(N);
  if (cfg.init_scale > 0.0) {
    auto gen = make_stream(cfg.seed, "solver-init");
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    for (Index k = 0; k < N; ++k) z(k) = normal(gen);
  }
  Vector w1 = Vector::Zero(N), w2 = Vector::Zero(N), w3 = Vector::Zero(N);
  Vector x1(N), x2(N), x3(N);
  double rho = cfg.rho;
  const double mu = prog.mode == ProgramMode::constrained ? 1.0 : prog.lambda;

  Eigen::LLT<Matrix> loss_factor;
  double factored_rho = -1.0;
  const Matrix MtM = M.transpose() * M / n;
  const Vector Mty = M.transpose() * y / n;

  auto prox_data = [&](const Vector& v) -> Vector {
    if (prog.mode == ProgramMode::constrained) return v - pinv * (M * v - y);
    if (factored_rho != rho) {
      loss_factor.compute(MtM + rho * Matrix::Identity(N, N));
      factored_rho = rho;
    }
    return loss_factor.solve(Mty + rho * v);
  };
  auto prox_cone = [&](const Vector& v) -> Vector {
    Vector out(N);
    for (Index b = 0; b < 2 * K; ++b) {
      const Matrix& G = prog.normals[std::size_t(b / 2)];
      out.segment(b * p, p) = cfg.cone_projection == ConeProjection::dykstra
                                  ? project_cone_dykstra(v.segment(b * p, p), G, cfg.dykstra)
                                  : project_cone_exact(v.segment(b * p, p), G);
    }
    return out;
  };
  auto prox_gauge = [&](const Vector& v) -> Vector {
    Vector out(N);
    for (Index b = 0; b < 2 * K; ++b)
      out.segment(b * p, p) = gauge_prox(prog.gauges[std::size_t(b / 2)], v.segment(b * p, p), mu / rho);
    return out;
  };

  // Builds the reported solution from the gauge copy (exact zeros on unused
  // cells) pushed into the cones, together with its certificate.
  auto finalize = [&](Solution& sol) {
    Vector out = Vector::Zero(N);
    for (Index b = 0; b < 2 * K; ++b) {
      const std::size_t j = std::size_t(b / 2);
      Vector v = project_cone_exact(x3.segment(b * p, p), prog.normals[j]);
      out.segment(b * p, p) = canonicalize_flat(prog.gauges[j], prog.normals[j], v);
    }
    double total = 0.0;
    for (Index b = 0; b < 2 * K; ++b) total += out.segment(b * p, p).norm();
    sol.atom_eps = cfg.atom_eps_rel * std::max(total, 1e-300);

    Vector beta = Vector::Zero(Index(prog.n));
    if (N > 0) {
      beta = prog.mode == ProgramMode::constrained ? Vector(pinv.transpose() * (rho * w1))
                                                   : Vector((y - M * out) / n);
    }
    sol.certificate = detail::certify(prog, out, beta, sol.atom_eps);
    sol.polished = false;
    if (N > 0 && cfg.polish && !sol.certificate.holds) {
      if (auto polished = detail::polish(prog, out, sol.atom_eps, cfg)) {
        const Vector& xp = polished->first;
        Certificate cert = detail::certify(prog, xp, polished->second, sol.atom_eps);
        bool feasible = prog.mode == ProgramMode::penalized ||
                        (M * xp - y).cwiseAbs().maxCoeff() <= 0.1 * cfg.tol_feas * yscale;
        for (Index b = 0; b < 2 * K && feasible; ++b) {
          const Vector slack = prog.normals[std::size_t(b / 2)].transpose() * xp.segment(b * p, p);
          feasible = slack.size() == 0 || slack.minCoeff() >= -1e-10 * (1.0 + xp.segment(b * p, p).norm());
        }
        if (cert.holds && feasible) {
          out = polished->first;
          sol.certificate = cert;
          sol.polished = true;
        }
      }
    }

    sol.fitted = N > 0 ? Vector(M * out) : Vector::Zero(Index(prog.n));
    sol.regulariser = N > 0 ? detail::program_regulariser(prog, out) : 0.0;
    sol.objective = N > 0 ? detail::program_objective(prog, out) : 0.0;
    sol.loss = prog.mode == ProgramMode::penalized ? sol.objective - prog.lambda * sol.regulariser : 0.0;
    sol.primal_residual = prog.mode == ProgramMode::constrained
                              ? (N > 0 ? (sol.fitted - y).cwiseAbs().maxCoeff() : 0.0)
                              : std::max({(x1 - z).norm(), (x2 - z).norm(), (x3 - z).norm()});
    sol.certificate.gap = sol.objective - sol.certificate.dual_objective;
    // Dual conditions alone do not certify an infeasible point.
    if (prog.mode == ProgramMode::constrained && sol.primal_residual > kCertificateTol * yscale)
      sol.certificate.holds = false;
    sol.blocks.clear();
    sol.support_violations.clear();
    sol.boundary_pairs.clear();
    sol.merge_angle = cfg.proportional_angle;
    for (Index j = 0; j < K; ++j) {
      CellBlock block{prog.cells[std::size_t(j)], out.segment(2 * j * p, p), out.segment((2 * j + 1) * p, p)};
      if (block.positive.norm() > sol.atom_eps && block.negative.norm() > sol.atom_eps &&
          angular_distance(block.positive, block.negative) > cfg.proportional_angle) {
        const Matrix& G = prog.normals[std::size_t(j)];
        if (on_cone_boundary(G, block.positive, cfg.boundary_angle) ||
            on_cone_boundary(G, block.negative, cfg.boundary_angle)) {
          sol.boundary_pairs.push_back(block.cell);
        } else {
          sol.support_violations.push_back(block.cell);
        }
      }
      sol.blocks.push_back(std::move(block));
    }
    sol.radon = extract_radon(sol);
  };

  Solution sol;
  std::deque<double> history;
  std::size_t it = 0;
  std::size_t next_check = 0;
  int last_direction = 0;
  std::size_t reversals = 0;
  for (it = 1; it <= cfg.max_iters && N > 0; ++it) {
    x1 = prox_data(z - w1);
    x2 = prox_cone(z - w2);
    x3 = prox_gauge(z - w3);
    const Vector z_old = z;
    const double a = cfg.relaxation;
    const Vector r1 = a * x1 + (1.0 - a) * z_old;
    const Vector r2 = a * x2 + (1.0 - a) * z_old;
    const Vector r3 = a * x3 + (1.0 - a) * z_old;
    z = (r1 + w1 + r2 + w2 + r3 + w3) / 3.0;
    w1 += r1 - z;
    w2 += r2 - z;
    w3 += r3 - z;
    const double primal = std::max({(x1 - z).norm(), (x2 - z).norm(), (x3 - z).norm()});
    const double dual = rho * std::sqrt(3.0) * (z - z_old).norm();

    const double obj = detail::program_objective(prog, z);
    history.push_back(obj);
    if (history.size() > cfg.window + 1) history.pop_front();
    const double scale = std::max(1e-12, std::abs(obj));
    const bool settled = history.size() == cfg.window + 1 && primal < cfg.tol_feas * yscale * 0.1 &&
                         dual < cfg.tol_feas * yscale &&
                         std::abs(history.back() - history.front()) <= cfg.tol_obj * scale;
    const bool try_polish = cfg.polish && cfg.polish_every > 0 && it % cfg.polish_every == 0 &&
                            primal < cfg.polish_trigger * yscale && dual < cfg.polish_trigger * yscale;
    if (it >= next_check && (settled || try_polish)) {
      finalize(sol);
      if (sol.certificate.holds) {
        sol.converged = true;
        break;
      }
      next_check = it + cfg.window;
    }

    if (cfg.balance_every > 0 && it % cfg.balance_every == 0 && reversals < cfg.balance_reversals) {
      int direction = 0;
      if (primal > cfg.balance_ratio * dual) direction = 1;
      if (dual > cfg.balance_ratio * primal) direction = -1;
      if (direction != 0) {
        if (last_direction != 0 && direction != last_direction) ++reversals;
        last_direction = direction;
        const double f = direction > 0 ? cfg.balance_factor : 1.0 / cfg.balance_factor;
        rho *= f;
        w1 /= f;
        w2 /= f;
        w3 /= f;
      }
    }
  }
  if (N == 0) sol.converged = true;
  if (!sol.converged || N == 0) finalize(sol);
  for (std::size_t j = 0; j < prog.cells.size(); ++j)
    if (prog.gauges[j].degenerate()) sol.flat_cells.push_back(prog.cells[j]);
  sol.iterations = std::min(it, cfg.max_iters);
  sol.final_rho = rho;
  return sol;
}

struct LpCheck {
  L1Result lp;
  Matrix directions;  // (d+1) x S, each column at unit gauge
  LpInstance instance;
  double target_gap = 0.0;  // max |prediction of the atoms - y| (constrained mode)
};

/// Re-solves basis pursuit over the extracted atom directions, each scaled
/// to unit gauge so that |z|_1 is the regulariser. The right-hand side is
/// the atoms' own predictions, so the LP is feasible by construction; its
/// distance to the data is reported separately.
inline LpCheck lp_from_solution(const FiniteProgram& prog, const Solution& sol) {
  const Index p = static_cast<Index>(prog.param_dim);
  std::vector<Vector> dirs;
  for (const auto& atom : sol.radon.atoms) {
    double weight = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < prog.cells.size(); ++j) {
      const Vector slack = prog.normals[j].transpose() * atom.direction;
      if (slack.minCoeff() >= -1e-6) weight = std::min(weight, prog.gauges[j](atom.direction));
    }
    if (std::isfinite(weight) && weight > 0.0) dirs.push_back(atom.direction / weight);
  }
  LpCheck out;
  out.directions.resize(p, static_cast<Index>(dirs.size()));
  for (std::size_t k = 0; k < dirs.size(); ++k) out.directions.col(Index(k)) = dirs[k];
  out.instance.A = Matrix(static_cast<Index>(prog.n), static_cast<Index>(dirs.size()));
  for (Index i = 0; i < Index(prog.n); ++i)
    for (std::size_t k = 0; k < dirs.size(); ++k) out.instance.A(i, Index(k)) = relu(prog.lifted.row(i).dot(dirs[k]));
  Vector pred = Vector::Zero(Index(prog.n));
  for (const auto& atom : sol.radon.atoms)
    for (Index i = 0; i < Index(prog.n); ++i) pred(i) += atom.mass * relu(prog.lifted.row(i).dot(atom.direction));
  out.instance.y = pred;
  if (prog.mode == ProgramMode::constrained) out.target_gap = (pred - prog.targets).cwiseAbs().maxCoeff();
  out.lp = lp_l1(out.instance);
  return out;
}

}  // namespace relusparse
