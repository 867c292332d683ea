#pragma once

// Sparsity diagnostics on measures and networks: effective support (atoms
// grouped into rays per cell), per-cell center-of-mass merging, and support
// comparisons.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"
#include "relusparse/simplex.hpp"

namespace relusparse {

struct SupportThresholds {
  double tau_mass_rel = 1e-4;  // fraction of the total Radon mass
  double tau_angle = 5e-2;     // radians

  static SupportThresholds for_solver() { return {1e-6, 1e-6}; }
  static SupportThresholds for_training() { return {1e-4, 5e-2}; }
};

struct SupportGroup {
  std::size_t cell = 0;
  Vector direction;                  // unit (d+1)-vector
  double mass = 0.0;                 // total signed Radon mass
  std::vector<std::size_t> members;  // indices of input atoms
  bool boundary = false;             // some member lies on a cell facet
};

struct EffectiveSupport {
  std::vector<SupportGroup> groups;
  double tau_mass = 0.0;  // absolute threshold used
  double tau_angle = 0.0;
  double total_mass = 0.0;
  std::size_t dropped = 0;  // rays below tau_mass

  std::size_t size() const { return groups.size(); }
  std::vector<std::size_t> groups_in_cell(std::size_t cell) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (groups[g].cell == cell) out.push_back(g);
    return out;
  }
};

namespace detail {

struct RayMass {
  Vector direction;
  double mass = 0.0;
  std::vector<std::size_t> members;
};

inline EffectiveSupport group_rays(std::vector<RayMass> rays, const CellDecomposition& decomp,
                                   const SupportThresholds& th) {
  // Same-ray atoms cancel by signed summation first.
  std::vector<RayMass> merged;
  for (auto& r : rays) {
    bool placed = false;
    for (auto& m : merged) {
      if (angular_distance(m.direction, r.direction) < kDirectionMergeAngle) {
        m.mass += r.mass;
        m.members.insert(m.members.end(), r.members.begin(), r.members.end());
        placed = true;
        break;
      }
    }
    if (!placed) merged.push_back(std::move(r));
  }
  EffectiveSupport out;
  out.tau_angle = th.tau_angle;
  for (const auto& m : merged) out.total_mass += std::abs(m.mass);
  out.tau_mass = th.tau_mass_rel * out.total_mass;

  struct Located {
    RayMass ray;
    std::size_t cell;
    bool boundary;
  };
  std::map<std::size_t, std::vector<Located>> by_cell;
  for (auto& m : merged) {
    if (std::abs(m.mass) <= out.tau_mass) {
      ++out.dropped;
      continue;
    }
    const CellLocation loc = locate_cell(decomp, m.direction);
    require(loc.cell.has_value(), ErrorCode::numerical, "atom direction could not be assigned to a cell");
    by_cell[*loc.cell].push_back({std::move(m), *loc.cell, loc.on_boundary()});
  }
  for (auto& [cell, items] : by_cell) {
    // Single-linkage clustering by angular distance.
    const std::size_t k = items.size();
    std::vector<std::size_t> parent(k);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b)
        if (angular_distance(items[a].ray.direction, items[b].ray.direction) <= th.tau_angle) parent[find(a)] = find(b);
    std::map<std::size_t, SupportGroup> groups;
    std::map<std::size_t, Vector> weighted;
    for (std::size_t a = 0; a < k; ++a) {
      const std::size_t root = find(a);
      auto& g = groups[root];
      g.cell = cell;
      g.mass += items[a].ray.mass;
      g.boundary = g.boundary || items[a].boundary;
      g.members.insert(g.members.end(), items[a].ray.members.begin(), items[a].ray.members.end());
      auto it = weighted.find(root);
      const Vector contrib = std::abs(items[a].ray.mass) * items[a].ray.direction;
      if (it == weighted.end()) {
        weighted.emplace(root, contrib);
      } else {
        it->second += contrib;
      }
    }
    for (auto& [root, g] : groups) {
      g.direction = weighted[root].normalized();
      std::sort(g.members.begin(), g.members.end());
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace detail

inline EffectiveSupport effective_support(const RadonMeasure& nu, const CellDecomposition& decomp,
                                          const SupportThresholds& th = {}) {
  std::vector<detail::RayMass> rays;
  for (std::size_t k = 0; k < nu.atoms.size(); ++k) {
    if (nu.atoms[k].mass == 0.0) continue;
    rays.push_back({nu.atoms[k].direction, nu.atoms[k].mass, {k}});
  }
  return detail::group_rays(std::move(rays), decomp, th);
}

/// Atoms map to (theta/|theta|, p c |theta|); zero-mass atoms are ignored.
inline EffectiveSupport effective_support(const AtomicMeasure& mu, const CellDecomposition& decomp,
                                          const SupportThresholds& th = {}) {
  std::vector<detail::RayMass> rays;
  for (std::size_t k = 0; k < mu.atoms.size(); ++k) {
    const auto& atom = mu.atoms[k];
    const Vector theta = atom.neuron.theta();
    const double norm = theta.norm();
    const double z = atom.mass * atom.neuron.c * norm;
    if (z == 0.0) continue;
    rays.push_back({theta / norm, z, {k}});
  }
  return detail::group_rays(std::move(rays), decomp, th);
}

inline EffectiveSupport effective_support(const ParticleNetwork& net, const CellDecomposition& decomp,
                                          const SupportThresholds& th = {}) {
  return effective_support(AtomicMeasure::empirical(net), decomp, th);
}

/// Per cell and per sign of c, all atoms are replaced by the single atom with
/// mass P = sum p, c = sum p c / P, theta = sum p c theta / sum p c. Both
/// per-cell moments and every datapoint prediction are preserved. Atoms with
/// c = 0 or theta = 0 carry no function and collapse into one null atom.
inline AtomicMeasure merge_cell_mass(const AtomicMeasure& mu, const CellDecomposition& decomp) {
  struct Acc {
    double p = 0.0;
    double pc = 0.0;
    Vector pctheta;
  };
  std::map<std::pair<std::size_t, int>, Acc> acc;
  double null_mass = 0.0;
  std::size_t d = decomp.dim;
  for (const auto& atom : mu.atoms) {
    const Vector theta = atom.neuron.theta();
    if (atom.neuron.c == 0.0 || theta.norm() == 0.0) {
      null_mass += atom.mass;
      continue;
    }
    const CellLocation loc = locate_cell(decomp, theta);
    require(loc.cell.has_value(), ErrorCode::numerical, "atom could not be assigned to a cell");
    auto& a = acc[{*loc.cell, atom.neuron.c > 0.0 ? 1 : -1}];
    if (a.pctheta.size() == 0) a.pctheta = Vector::Zero(theta.size());
    a.p += atom.mass;
    a.pc += atom.mass * atom.neuron.c;
    a.pctheta += atom.mass * atom.neuron.c * theta;
  }
  // Ordered by cell, negative sign first.
  AtomicMeasure out;
  for (const auto& [key, a] : acc) out.atoms.push_back({Neuron::from_theta(a.pctheta / a.pc, a.pc / a.p), a.p});
  if (null_mass > 0.0) out.atoms.push_back({Neuron{Vector::Zero(Index(d)), 0.0, 0.0}, null_mass});
  return out;
}

/// Cells holding two or more interior groups. Groups touching a facet are
/// attributed by the closed-cell convention and reported separately.
struct CellViolations {
  std::vector<std::size_t> cells;           // interior violations
  std::vector<std::size_t> boundary_groups;  // indices into support.groups
  bool ok() const { return cells.empty(); }
};

inline CellViolations one_point_per_cell(const EffectiveSupport& support) {
  CellViolations out;
  std::map<std::size_t, std::size_t> interior;
  for (std::size_t g = 0; g < support.groups.size(); ++g) {
    if (support.groups[g].boundary) {
      out.boundary_groups.push_back(g);
    } else {
      ++interior[support.groups[g].cell];
    }
  }
  for (const auto& [cell, count] : interior)
    if (count >= 2) out.cells.push_back(cell);
  return out;
}

struct MatchedGroup {
  std::size_t cell = 0;
  std::size_t first = 0;   // group index in s1
  std::size_t second = 0;  // group index in s2
  double angle = 0.0;
  bool cross_cell = false;  // matched across a facet
};

struct SupportComparison {
  std::vector<MatchedGroup> matched;
  std::vector<std::size_t> unmatched_first;
  std::vector<std::size_t> unmatched_second;
  std::vector<std::size_t> cells_only_first;
  std::vector<std::size_t> cells_only_second;
  double max_delta = 0.0;        // over same-cell matches
  double max_cross_delta = 0.0;  // over cross-cell matches
};

/// Matches groups of equal mass sign within each cell by increasing angle;
/// leftovers are then paired across cells (nearest same-sign direction
/// within cross_tol), which catches mass sitting on a shared facet.
inline SupportComparison compare_supports(const EffectiveSupport& s1, const EffectiveSupport& s2,
                                          double cross_tol = 1e-2) {
  SupportComparison out;
  std::vector<bool> used1(s1.groups.size(), false), used2(s2.groups.size(), false);
  std::map<std::size_t, int> cells;  // bit 1: in s1, bit 2: in s2
  for (const auto& g : s1.groups) cells[g.cell] |= 1;
  for (const auto& g : s2.groups) cells[g.cell] |= 2;
  auto greedy = [&](bool same_cell, double limit) {
    struct Cand {
      double angle;
      std::size_t a, b;
    };
    std::vector<Cand> cands;
    for (std::size_t a = 0; a < s1.groups.size(); ++a) {
      if (used1[a]) continue;
      for (std::size_t b = 0; b < s2.groups.size(); ++b) {
        if (used2[b]) continue;
        const auto& g1 = s1.groups[a];
        const auto& g2 = s2.groups[b];
        if (same_cell != (g1.cell == g2.cell)) continue;
        if ((g1.mass > 0.0) != (g2.mass > 0.0)) continue;
        const double ang = angular_distance(g1.direction, g2.direction);
        if (ang <= limit) cands.push_back({ang, a, b});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      return x.angle < y.angle || (x.angle == y.angle && (x.a < y.a || (x.a == y.a && x.b < y.b)));
    });
    for (const auto& c : cands) {
      if (used1[c.a] || used2[c.b]) continue;
      used1[c.a] = used2[c.b] = true;
      out.matched.push_back({s1.groups[c.a].cell, c.a, c.b, c.angle, !same_cell});
      if (same_cell) {
        out.max_delta = std::max(out.max_delta, c.angle);
      } else {
        out.max_cross_delta = std::max(out.max_cross_delta, c.angle);
      }
    }
  };
  greedy(true, std::numeric_limits<double>::infinity());
  greedy(false, cross_tol);
  for (std::size_t a = 0; a < s1.groups.size(); ++a)
    if (!used1[a]) out.unmatched_first.push_back(a);
  for (std::size_t b = 0; b < s2.groups.size(); ++b)
    if (!used2[b]) out.unmatched_second.push_back(b);
  for (const auto& [cell, bits] : cells) {
    if (bits == 1) out.cells_only_first.push_back(cell);
    if (bits == 2) out.cells_only_second.push_back(cell);
  }
  return out;
}

inline bool representer_check(std::size_t nonzeros, std::size_t n) { return nonzeros <= n; }

inline bool representer_check(const L1Result& lp, std::size_t n) { return representer_check(lp.support.size(), n); }

inline bool representer_check(const Vector& z, std::size_t n, double tol = 0.0) {
  std::size_t nz = 0;
  for (Index k = 0; k < z.size(); ++k)
    if (std::abs(z(k)) > tol) ++nz;
  return representer_check(nz, n);
}

struct SparsityReport {
  std::size_t effective_support = 0;
  std::map<std::size_t, std::size_t> per_cell;
  std::size_t n = 0;
  std::size_t cell_count = 0;
  std::size_t active_cell_count = 0;  // cells with a nonempty active set
  bool representer = false;            // support <= n
  bool within_cell_bound = false;      // support <= number of cells
  CellViolations violations;
  std::optional<SupportComparison> comparison;
};

inline SparsityReport sparsity_report(const EffectiveSupport& support, const CellDecomposition& decomp,
                                      const EffectiveSupport* reference = nullptr) {
  SparsityReport r;
  r.effective_support = support.size();
  for (const auto& g : support.groups) ++r.per_cell[g.cell];
  r.n = decomp.n;
  r.cell_count = decomp.size();
  for (const auto& c : decomp.cells)
    if (!c.active_set.empty()) ++r.active_cell_count;
  r.representer = representer_check(support.size(), decomp.n);
  r.within_cell_bound = support.size() <= decomp.size();
  r.violations = one_point_per_cell(support);
  if (reference) r.comparison = compare_supports(support, *reference);
  return r;
}

}  // namespace relusparse
