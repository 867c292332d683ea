#pragma once

// JSON encodings of the library's result types, the trace CSV, and config
// hashing. Doubles are written at full precision so parse(dump(x)) == x;
// non-finite values are encoded as the strings "inf", "-inf" and "nan".

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "relusparse/analysis.hpp"
#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"
#include "relusparse/io.hpp"
#include "relusparse/rng.hpp"
#include "relusparse/solver.hpp"
#include "relusparse/trainer.hpp"

namespace relusparse {

using json = nlohmann::json;

namespace detail {

inline json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorCode::parse_error, "expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

inline json vec_to_json(const Vector& v) {
  json out = json::array();
  for (Index k = 0; k < v.size(); ++k) out.push_back(real_to_json(v(k)));
  return out;
}

inline Vector vec_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(Index(k)) = real_from_json(j[k]);
  return v;
}

inline json mat_to_json(const Matrix& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(vec_to_json(m.row(r).transpose()));
  return out;
}

inline Matrix mat_from_json(const json& j, Index cols) {
  Matrix m(static_cast<Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    require(j[r].size() == static_cast<std::size_t>(cols), ErrorCode::parse_error, "ragged matrix in JSON");
    m.row(Index(r)) = vec_from_json(j[r]).transpose();
  }
  return m;
}

}  // namespace detail

// Networks and measures.

inline void to_json(json& j, const Neuron& n) {
  j = json{{"a", detail::vec_to_json(n.a)}, {"b", detail::real_to_json(n.b)}, {"c", detail::real_to_json(n.c)}};
}

inline void from_json(const json& j, Neuron& n) {
  n.a = detail::vec_from_json(j.at("a"));
  n.b = detail::real_from_json(j.at("b"));
  n.c = detail::real_from_json(j.at("c"));
}

inline void to_json(json& j, const ParticleNetwork& net) { j = json{{"neurons", net.neurons}}; }
inline void from_json(const json& j, ParticleNetwork& net) { net.neurons = j.at("neurons").get<std::vector<Neuron>>(); }

inline void to_json(json& j, const RadonAtom& a) {
  j = json{{"direction", detail::vec_to_json(a.direction)}, {"mass", detail::real_to_json(a.mass)}};
}

inline void from_json(const json& j, RadonAtom& a) {
  a.direction = detail::vec_from_json(j.at("direction"));
  a.mass = detail::real_from_json(j.at("mass"));
}

inline void to_json(json& j, const RadonMeasure& nu) { j = json{{"atoms", nu.atoms}}; }
inline void from_json(const json& j, RadonMeasure& nu) { nu.atoms = j.at("atoms").get<std::vector<RadonAtom>>(); }

/// One row per atom: mass, then the direction coordinates.
inline void write_radon_csv(std::ostream& out, const RadonMeasure& nu) {
  const Index p = nu.atoms.empty() ? 0 : nu.atoms.front().direction.size();
  out << "mass";
  for (Index k = 0; k + 1 < p; ++k) out << ",a" << k;
  if (p > 0) out << ",b";
  out << '\n';
  for (const auto& atom : nu.atoms) {
    out << detail::format_real(atom.mass);
    for (Index k = 0; k < p; ++k) out << ',' << detail::format_real(atom.direction(k));
    out << '\n';
  }
}

// Cell decompositions.

inline void to_json(json& j, const Cell& c) {
  j = json{{"signs", c.signs},
           {"active_set", c.active_set},
           {"witness", detail::vec_to_json(c.witness)},
           {"margin", detail::real_to_json(c.margin)}};
}

inline void from_json(const json& j, Cell& c) {
  c.signs = j.at("signs").get<SignVector>();
  c.active_set = j.at("active_set").get<std::vector<std::size_t>>();
  c.witness = detail::vec_from_json(j.at("witness"));
  c.margin = detail::real_from_json(j.at("margin"));
}

inline void to_json(json& j, const CellDecomposition& d) {
  j = json{{"cells", d.cells},
           {"fingerprint", d.fingerprint},
           {"n", d.n},
           {"dim", d.dim},
           {"lifted", detail::mat_to_json(d.lifted)},
           {"representative", d.representative},
           {"distinct_hyperplanes", d.distinct_hyperplanes},
           {"generic", d.generic},
           {"warnings", d.warnings},
           {"options",
            {{"feasibility_eps", d.options.feasibility_eps},
             {"boundary_eps", d.options.boundary_eps},
             {"max_cells", d.options.max_cells},
             {"allow_large", d.options.allow_large}}}};
}

inline void from_json(const json& j, CellDecomposition& d) {
  d.cells = j.at("cells").get<std::vector<Cell>>();
  d.fingerprint = j.at("fingerprint").get<std::uint64_t>();
  d.n = j.at("n").get<std::size_t>();
  d.dim = j.at("dim").get<std::size_t>();
  d.lifted = detail::mat_from_json(j.at("lifted"), Index(d.dim + 1));
  d.representative = j.at("representative").get<std::vector<std::size_t>>();
  d.distinct_hyperplanes = j.at("distinct_hyperplanes").get<std::size_t>();
  d.generic = j.at("generic").get<bool>();
  d.warnings = j.at("warnings").get<std::vector<std::string>>();
  const auto& o = j.at("options");
  d.options.feasibility_eps = o.at("feasibility_eps").get<double>();
  d.options.boundary_eps = o.at("boundary_eps").get<double>();
  d.options.max_cells = o.at("max_cells").get<std::size_t>();
  d.options.allow_large = o.at("allow_large").get<bool>();
  d.lookup.clear();
  for (std::size_t k = 0; k < d.cells.size(); ++k) d.lookup[d.cells[k].signs] = k;
}

// Solver output.

inline void to_json(json& j, const CellBlock& b) {
  j = json{{"cell", b.cell}, {"positive", detail::vec_to_json(b.positive)}, {"negative", detail::vec_to_json(b.negative)}};
}

inline void from_json(const json& j, CellBlock& b) {
  b.cell = j.at("cell").get<std::size_t>();
  b.positive = detail::vec_from_json(j.at("positive"));
  b.negative = detail::vec_from_json(j.at("negative"));
}

inline void to_json(json& j, const Certificate& c) {
  j = json{{"multipliers", detail::vec_to_json(c.multipliers)},
           {"dual_objective", detail::real_to_json(c.dual_objective)},
           {"gap", detail::real_to_json(c.gap)},
           {"max_dual_norm", detail::real_to_json(c.max_dual_norm)},
           {"min_alignment", detail::real_to_json(c.min_alignment)},
           {"holds", c.holds}};
}

inline void from_json(const json& j, Certificate& c) {
  c.multipliers = detail::vec_from_json(j.at("multipliers"));
  c.dual_objective = detail::real_from_json(j.at("dual_objective"));
  c.gap = detail::real_from_json(j.at("gap"));
  c.max_dual_norm = detail::real_from_json(j.at("max_dual_norm"));
  c.min_alignment = detail::real_from_json(j.at("min_alignment"));
  c.holds = j.at("holds").get<bool>();
}

inline void to_json(json& j, const Solution& s) {
  j = json{{"blocks", s.blocks},
           {"objective", detail::real_to_json(s.objective)},
           {"regulariser", detail::real_to_json(s.regulariser)},
           {"loss", detail::real_to_json(s.loss)},
           {"primal_residual", detail::real_to_json(s.primal_residual)},
           {"atom_eps", detail::real_to_json(s.atom_eps)},
           {"radon", s.radon},
           {"iterations", s.iterations},
           {"converged", s.converged},
           {"certificate", s.certificate},
           {"polished", s.polished},
           {"flat_cells", s.flat_cells},
           {"support_violations", s.support_violations},
           {"boundary_pairs", s.boundary_pairs},
           {"merge_angle", detail::real_to_json(s.merge_angle)},
           {"fitted", detail::vec_to_json(s.fitted)},
           {"final_rho", detail::real_to_json(s.final_rho)}};
}

inline void from_json(const json& j, Solution& s) {
  s.blocks = j.at("blocks").get<std::vector<CellBlock>>();
  s.objective = detail::real_from_json(j.at("objective"));
  s.regulariser = detail::real_from_json(j.at("regulariser"));
  s.loss = detail::real_from_json(j.at("loss"));
  s.primal_residual = detail::real_from_json(j.at("primal_residual"));
  s.atom_eps = detail::real_from_json(j.at("atom_eps"));
  s.radon = j.at("radon").get<RadonMeasure>();
  s.iterations = j.at("iterations").get<std::size_t>();
  s.converged = j.at("converged").get<bool>();
  s.certificate = j.at("certificate").get<Certificate>();
  s.polished = j.at("polished").get<bool>();
  s.flat_cells = j.at("flat_cells").get<std::vector<std::size_t>>();
  s.support_violations = j.at("support_violations").get<std::vector<std::size_t>>();
  s.boundary_pairs = j.at("boundary_pairs").get<std::vector<std::size_t>>();
  s.merge_angle = detail::real_from_json(j.at("merge_angle"));
  s.fitted = detail::vec_from_json(j.at("fitted"));
  s.final_rho = detail::real_from_json(j.at("final_rho"));
}

// Analysis output.

inline void to_json(json& j, const SupportGroup& g) {
  j = json{{"cell", g.cell},
           {"direction", detail::vec_to_json(g.direction)},
           {"mass", detail::real_to_json(g.mass)},
           {"members", g.members},
           {"boundary", g.boundary}};
}

inline void from_json(const json& j, SupportGroup& g) {
  g.cell = j.at("cell").get<std::size_t>();
  g.direction = detail::vec_from_json(j.at("direction"));
  g.mass = detail::real_from_json(j.at("mass"));
  g.members = j.at("members").get<std::vector<std::size_t>>();
  g.boundary = j.at("boundary").get<bool>();
}

inline void to_json(json& j, const EffectiveSupport& s) {
  j = json{{"groups", s.groups},
           {"tau_mass", detail::real_to_json(s.tau_mass)},
           {"tau_angle", detail::real_to_json(s.tau_angle)},
           {"total_mass", detail::real_to_json(s.total_mass)},
           {"dropped", s.dropped}};
}

inline void from_json(const json& j, EffectiveSupport& s) {
  s.groups = j.at("groups").get<std::vector<SupportGroup>>();
  s.tau_mass = detail::real_from_json(j.at("tau_mass"));
  s.tau_angle = detail::real_from_json(j.at("tau_angle"));
  s.total_mass = detail::real_from_json(j.at("total_mass"));
  s.dropped = j.at("dropped").get<std::size_t>();
}

inline void to_json(json& j, const CellViolations& v) {
  j = json{{"cells", v.cells}, {"boundary_groups", v.boundary_groups}};
}

inline void from_json(const json& j, CellViolations& v) {
  v.cells = j.at("cells").get<std::vector<std::size_t>>();
  v.boundary_groups = j.at("boundary_groups").get<std::vector<std::size_t>>();
}

inline void to_json(json& j, const MatchedGroup& m) {
  j = json{{"cell", m.cell},
           {"first", m.first},
           {"second", m.second},
           {"angle", detail::real_to_json(m.angle)},
           {"cross_cell", m.cross_cell}};
}

inline void from_json(const json& j, MatchedGroup& m) {
  m.cell = j.at("cell").get<std::size_t>();
  m.first = j.at("first").get<std::size_t>();
  m.second = j.at("second").get<std::size_t>();
  m.angle = detail::real_from_json(j.at("angle"));
  m.cross_cell = j.at("cross_cell").get<bool>();
}

inline void to_json(json& j, const SupportComparison& c) {
  j = json{{"matched", c.matched},
           {"unmatched_first", c.unmatched_first},
           {"unmatched_second", c.unmatched_second},
           {"cells_only_first", c.cells_only_first},
           {"cells_only_second", c.cells_only_second},
           {"max_delta", detail::real_to_json(c.max_delta)},
           {"max_cross_delta", detail::real_to_json(c.max_cross_delta)}};
}

inline void from_json(const json& j, SupportComparison& c) {
  c.matched = j.at("matched").get<std::vector<MatchedGroup>>();
  c.unmatched_first = j.at("unmatched_first").get<std::vector<std::size_t>>();
  c.unmatched_second = j.at("unmatched_second").get<std::vector<std::size_t>>();
  c.cells_only_first = j.at("cells_only_first").get<std::vector<std::size_t>>();
  c.cells_only_second = j.at("cells_only_second").get<std::vector<std::size_t>>();
  c.max_delta = detail::real_from_json(j.at("max_delta"));
  c.max_cross_delta = detail::real_from_json(j.at("max_cross_delta"));
}

inline void to_json(json& j, const SparsityReport& r) {
  json per_cell = json::array();
  for (const auto& [cell, count] : r.per_cell) per_cell.push_back({cell, count});
  j = json{{"effective_support", r.effective_support},
           {"per_cell", per_cell},
           {"n", r.n},
           {"cell_count", r.cell_count},
           {"active_cell_count", r.active_cell_count},
           {"representer", r.representer},
           {"within_cell_bound", r.within_cell_bound},
           {"violations", r.violations},
           {"comparison", r.comparison ? json(*r.comparison) : json(nullptr)}};
}

inline void from_json(const json& j, SparsityReport& r) {
  r.effective_support = j.at("effective_support").get<std::size_t>();
  r.per_cell.clear();
  for (const auto& e : j.at("per_cell")) r.per_cell[e.at(0).get<std::size_t>()] = e.at(1).get<std::size_t>();
  r.n = j.at("n").get<std::size_t>();
  r.cell_count = j.at("cell_count").get<std::size_t>();
  r.active_cell_count = j.at("active_cell_count").get<std::size_t>();
  r.representer = j.at("representer").get<bool>();
  r.within_cell_bound = j.at("within_cell_bound").get<bool>();
  r.violations = j.at("violations").get<CellViolations>();
  if (j.at("comparison").is_null()) {
    r.comparison.reset();
  } else {
    r.comparison = j.at("comparison").get<SupportComparison>();
  }
}

// Training traces.

inline void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "step,loss,lambda,reg,support,gradnorm\n";
  for (const auto& r : trace.records)
    out << r.step << ',' << detail::format_real(r.loss) << ',' << detail::format_real(r.lambda) << ','
        << detail::format_real(r.reg) << ',' << r.support << ',' << detail::format_real(r.gradnorm) << '\n';
}

/// Stable hex digest of a JSON value (keys are sorted by nlohmann::json).
inline std::string config_hash(const json& config) {
  const std::uint64_t h = splitmix64(fnv1a(config.dump()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace relusparse
