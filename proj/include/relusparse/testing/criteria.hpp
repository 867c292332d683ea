#pragma once

// The end-to-end acceptance checks, shared by the acceptance test binary and
// `relusparse verify`. Each check draws its own instances from a named RNG
// stream and compares library output against the independent oracles in
// oracles.hpp. A scale below 1 shrinks sample counts for quick runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "relusparse/analysis.hpp"
#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"
#include "relusparse/potentials.hpp"
#include "relusparse/rng.hpp"
#include "relusparse/simplex.hpp"
#include "relusparse/solver.hpp"
#include "relusparse/testing/oracles.hpp"
#include "relusparse/trainer.hpp"

namespace relusparse::testing {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double limit_seconds = 0.0;  // 0: no separate limit
};

struct CriterionOptions {
  std::uint64_t seed = 0;
  double scale = 1.0;   // fraction of the full sample counts
  bool inject_failure = false;  // negative control for the additivity check
};

namespace detail {

inline std::size_t scaled(std::size_t full, double scale, std::size_t floor = 1) {
  return std::max<std::size_t>(floor, static_cast<std::size_t>(std::llround(double(full) * scale)));
}

inline Dataset gaussian_dataset(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(static_cast<Index>(n), static_cast<Index>(d));
  Vector y(static_cast<Index>(n));
  for (Index i = 0; i < Index(n); ++i) {
    for (Index k = 0; k < Index(d); ++k) x(i, k) = normal(gen);
    y(i) = normal(gen);
  }
  return Dataset(std::move(x), std::move(y));
}

inline Vector gaussian_vector(Index p, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(p);
  for (Index k = 0; k < p; ++k) v(k) = normal(gen);
  return v;
}

// A random direction with the same sign pattern as theta, by rejection.
inline std::optional<Vector> same_cell_partner(const Dataset& data, const Vector& theta, std::mt19937_64& gen,
                                               std::size_t tries = 20000) {
  const auto target = sign_pattern(data, theta);
  for (std::size_t t = 0; t < tries; ++t) {
    Vector v = gaussian_vector(theta.size(), gen);
    if (sign_pattern(data, v) == target) return v;
  }
  return std::nullopt;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline CriterionResult finish(CriterionResult r, bool checks, const Stopwatch& clock, std::ostringstream& detail) {
  r.seconds = clock.seconds();
  r.passed = checks && (r.limit_seconds <= 0.0 || r.seconds < r.limit_seconds);
  if (checks && !r.passed) detail << "; exceeded time limit " << r.limit_seconds << " s";
  r.detail = detail.str();
  return r;
}

}  // namespace detail

/// Region count law and sampling consistency on random generic datasets.
inline CriterionResult check_cell_count(const CriterionOptions& opt = {}) {
  CriterionResult r{1, "cell count law", false, "", 0.0, 10.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-cells");
  std::uniform_int_distribution<std::size_t> pick_n(2, 8);
  const std::size_t datasets = detail::scaled(20, opt.scale, 3);
  const std::size_t samples = detail::scaled(100000, opt.scale, 1000);
  bool ok = true;
  std::size_t equality_checked = 0;
  std::ostringstream out;
  for (std::size_t k = 0; k < datasets; ++k) {
    const std::size_t d = 1 + k % 3;
    const std::size_t n = pick_n(gen);
    const Dataset data = detail::gaussian_dataset(n, d, gen);
    const auto decomp = enumerate_cells(data);
    const auto expected = central_region_count(n, d);
    const auto seen = sample_sign_vectors(data, samples, gen);
    bool subset = true;
    for (const auto& s : seen) subset = subset && decomp.lookup.count(s) > 0;
    const bool equal = seen.size() == decomp.size();
    const bool need_equal = d <= 2;
    if (need_equal) ++equality_checked;
    if (decomp.size() != expected || !subset || (need_equal && !equal)) {
      ok = false;
      out << "dataset " << k << " (d=" << d << ", n=" << n << "): " << decomp.size() << " cells, expected "
          << expected << ", sampled " << seen.size() << (subset ? "" : ", sampled pattern outside enumeration")
          << "; ";
    }
  }
  out << datasets << " datasets, " << samples << " directions each, equality checked on " << equality_checked;
  return detail::finish(r, ok, clock, out);
}

/// ReLU additivity on same-cell pairs, and its failure across opposite cells.
inline CriterionResult check_cell_additivity(const CriterionOptions& opt = {}) {
  CriterionResult r{2, "same-cell additivity", false, "", 0.0, 5.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-additivity");
  std::uniform_int_distribution<std::size_t> pick_n(1, 8), pick_d(1, 3);
  const std::size_t pairs = detail::scaled(10000, opt.scale, 100);
  std::size_t failures = 0, drawn = 0, skipped = 0;
  while (drawn < pairs) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    const auto decomp = enumerate_cells(data);
    for (int rep = 0; rep < 50 && drawn < pairs; ++rep) {
      const Vector theta = detail::gaussian_vector(Index(data.dim() + 1), gen);
      auto partner = detail::same_cell_partner(data, theta, gen);
      if (!partner) {
        ++skipped;
        continue;
      }
      ++drawn;
      bool holds = false;
      if (opt.inject_failure) {
        holds = cell_sum_check(theta, -*partner, data, 1e-9);
      } else {
        holds = cell_sum_check(decomp, theta, *partner, data, 1e-9);
      }
      if (!holds) ++failures;
    }
  }
  // Opposite cells in d = 1: theta = (1, 0) and -theta at x = 1.
  const Dataset line = Dataset::from_rows({{1.0}}, {0.0});
  Vector t1(2), t2(2);
  t1 << 1.0, 0.0;
  t2 << -1.0, 0.0;
  const bool counterexample_fails = !cell_sum_check(t1, t2, line, 1e-9);
  std::ostringstream out;
  out << failures << "/" << drawn << " same-cell pairs violate the identity" << (skipped ? " (" : "")
      << (skipped ? std::to_string(skipped) + " draws without a partner skipped)" : "")
      << "; opposite-cell counterexample " << (counterexample_fails ? "fails as expected" : "unexpectedly holds");
  return detail::finish(r, failures == 0 && counterexample_fails, clock, out);
}

/// Midpoint convexity of the label-noise weight, strict at the bulk.
inline CriterionResult check_weight_convexity(const CriterionOptions& opt = {}) {
  CriterionResult r{3, "label-noise weight convexity", false, "", 0.0, 5.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-convexity");
  std::uniform_int_distribution<std::size_t> pick_n(2, 10), pick_d(1, 3);
  const std::size_t probes = detail::scaled(10000, opt.scale, 100);
  std::size_t violations = 0, eligible = 0, not_strict = 0;
  std::size_t done = 0;
  while (done < probes) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    const Potential pot(PotentialKind::label_noise, data);
    for (int rep = 0; rep < 20 && done < probes; ++rep, ++done) {
      const Vector t1 = detail::gaussian_vector(Index(data.dim() + 1), gen);
      const Vector t2 = detail::gaussian_vector(Index(data.dim() + 1), gen);
      const auto outcome = effective_convexity_test(pot, t1, t2, 0.5, 1e-12);
      if (outcome == ConvexityOutcome::violation) ++violations;
      if (at_bulk(t1, data, 1e-6) && at_bulk(t2, data, 1e-6) && angular_distance(t1, t2) > 1e-6) {
        ++eligible;
        if (outcome != ConvexityOutcome::strict) ++not_strict;
      }
    }
  }
  std::ostringstream out;
  out << violations << "/" << probes << " probes violate convexity; " << not_strict << "/" << eligible
      << " bulk probes with distinct directions are not strict";
  return detail::finish(r, violations == 0 && not_strict == 0 && eligible > 0, clock, out);
}

/// Closed-form orbit minimum against grid search, with the factor between
/// the two label-noise weights reported.
inline CriterionResult check_rescaling(const CriterionOptions& opt = {}) {
  CriterionResult r{4, "rescaling identity", false, "", 0.0, 10.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-rescaling");
  std::uniform_int_distribution<std::size_t> pick_n(1, 10), pick_d(1, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t cases = detail::scaled(1000, opt.scale, 20);
  double worst = 0.0, factor_err = 0.0;
  double factor_min = std::numeric_limits<double>::infinity(), factor_max = 0.0;
  std::size_t active = 0;
  for (std::size_t k = 0; k < cases; ++k) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    Neuron neuron{detail::gaussian_vector(Index(data.dim()), gen), normal(gen), normal(gen)};
    const auto closed = rescale_minimize(neuron, data);
    const auto grid = rescale_grid_search(neuron, data, 1e-3, 1e3, 10000);
    const double rel = std::abs(closed.value - grid.value) / std::max(closed.value, 1e-300);
    if (closed.value == 0.0 && grid.value == 0.0) continue;
    worst = std::max(worst, rel);
    // Exact orbit minimum over |c| w_b: the reported discrepancy factor.
    const double root = std::abs(neuron.c) * weight_label_noise(neuron.theta(), data);
    if (root > 0.0) {
      ++active;
      double chi = 0.0;
      const Vector pre = data.lifted() * neuron.theta();
      for (std::size_t i = 0; i < data.size(); ++i)
        if (pre(Index(i)) >= 0.0) chi += 1.0 + data.point(i).squaredNorm();
      chi /= double(data.size());
      const double factor = closed.value / root;
      factor_err = std::max(factor_err, std::abs(factor - 2.0 * std::sqrt(chi)) / (2.0 * std::sqrt(chi)));
      factor_min = std::min(factor_min, factor);
      factor_max = std::max(factor_max, factor);
    }
  }
  std::ostringstream out;
  out << "max relative gap to grid " << worst << " over " << cases << " cases; exact/root weight factor in ["
      << factor_min << ", " << factor_max << "] on " << active << " active neurons, matching 2 sqrt(E[(1+|x|^2)chi]) to "
      << factor_err;
  return detail::finish(r, worst <= 1e-6 && factor_err <= 1e-12, clock, out);
}

struct SolverAgreement {
  CriterionResult oracle;     // objective vs brute force, support, LP
  CriterionResult uniqueness;  // two starting points
};

/// Solver against the exhaustive-support oracle on small d = 1 instances,
/// plus agreement of two runs from different random starting points.
inline SolverAgreement check_solver(const CriterionOptions& opt = {}) {
  SolverAgreement res;
  res.oracle = {5, "solver vs brute force", false, "", 0.0, 60.0};
  res.uniqueness = {6, "support agreement across starts", false, "", 0.0, 0.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-solver");
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t instances = detail::scaled(10, opt.scale, 2);
  double worst_obj = 0.0, worst_lp = 0.0, worst_angle = 0.0;
  std::size_t violations = 0, unconverged = 0, over_n = 0, solves = 0;
  std::ostringstream fails;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t n = 2 + inst % 2;
    Matrix x(static_cast<Index>(n), 1);
    Vector y(static_cast<Index>(n));
    for (Index i = 0; i < Index(n); ++i) {
      x(i, 0) = unif(gen);
      y(i) = normal(gen);
    }
    const Dataset data(x, y);
    const auto decomp = enumerate_cells(data);
    for (auto kind : {PotentialKind::tv, PotentialKind::label_noise}) {
      const auto oracle = brute_force_min(data, kind);
      const auto prog = build_program(data, decomp, kind, ProgramMode::constrained);
      SolverConfig c1, c2;
      c1.init_scale = c2.init_scale = 1.0;
      c1.seed = 2 * inst + 1;
      c2.seed = 2 * inst + 2;
      const Solution s1 = solve(prog, c1);
      const Solution s2 = solve(prog, c2);
      solves += 2;
      if (!s1.converged || !s2.converged) ++unconverged;
      const double rel = std::abs(s1.objective - oracle.objective) / std::max(oracle.objective, 1e-300);
      worst_obj = std::max(worst_obj, rel);
      const auto sup1 = effective_support(s1.radon, decomp, SupportThresholds::for_solver());
      const auto sup2 = effective_support(s2.radon, decomp, SupportThresholds::for_solver());
      if (!one_point_per_cell(sup1).ok()) ++violations;
      const auto lp = lp_from_solution(prog, s1);
      const double lp_rel = std::abs(lp.lp.objective - s1.objective) / std::max(s1.objective, 1e-300);
      worst_lp = std::max(worst_lp, lp_rel);
      if (!representer_check(lp.lp, n)) ++over_n;
      const auto cmp = compare_supports(sup1, sup2);
      worst_angle = std::max(worst_angle, cmp.max_delta);
      if (rel > 1e-4)
        fails << "instance " << inst << " " << to_string(kind) << ": solver " << s1.objective << " vs oracle "
              << oracle.objective << "; ";
    }
  }
  const double elapsed = clock.seconds();
  std::ostringstream out;
  out << fails.str() << instances << " instances x 2 potentials: max objective gap " << worst_obj
      << ", max LP gap " << worst_lp << ", " << violations << " one-point-per-cell violations, " << over_n
      << " LP supports above n, " << unconverged << " unconverged";
  res.oracle.seconds = elapsed;
  const bool ok5 = worst_obj <= 1e-4 && worst_lp <= 1e-6 && violations == 0 && over_n == 0 && unconverged == 0;
  res.oracle.passed = ok5 && elapsed < res.oracle.limit_seconds;
  res.oracle.detail = out.str() + (ok5 && !res.oracle.passed ? "; exceeded time limit" : "");
  std::ostringstream out6;
  out6 << "max same-cell direction gap " << worst_angle << " rad over " << solves / 2 << " solver pairs";
  res.uniqueness.seconds = elapsed;
  res.uniqueness.passed = worst_angle <= 1e-4 && unconverged == 0 && elapsed < res.oracle.limit_seconds;
  res.uniqueness.detail = out6.str();
  return res;
}

/// The d = 1, n = 3 instance used by the weight-decay check.
inline Dataset weight_decay_dataset() { return Dataset::from_rows({{-1.0}, {0.3}, {1.2}}, {0.5, -0.4, 0.8}); }

/// The d = 1, n = 2 instance used by the label-noise check.
inline Dataset label_noise_dataset() { return Dataset::from_rows({{-0.5}, {0.7}}, {0.3, -0.6}); }

/// Weight-decay gradient descent against the penalised program optimum.
inline CriterionResult check_weight_decay(const CriterionOptions& opt = {}) {
  CriterionResult r{7, "weight-decay training vs penalised optimum", false, "", 0.0, 120.0};
  detail::Stopwatch clock;
  const Dataset data = weight_decay_dataset();
  const auto decomp = enumerate_cells(data);
  const double lambda = 1e-3;
  const auto prog = build_program(data, decomp, PotentialKind::tv, ProgramMode::penalized, lambda);
  const Solution sol = solve(prog);
  TrainConfig cfg;
  cfg.width = 200;
  cfg.lambda = lambda;
  cfg.decay = DecayForm::weight_decay;
  cfg.step_size = 0.1;
  // Not scaled: shorter runs have not reached the optimum.
  cfg.steps = 100000;
  cfg.record_stride = 1000;
  cfg.seed = opt.seed + 1;
  const auto run = gd_weight_decay(data, cfg, decomp);
  const double objective = training_objective(run.network, data, cfg);
  const double rel = (objective - sol.objective) / sol.objective;

  const auto trained = effective_support(run.network, decomp, SupportThresholds::for_training());
  const auto solved = effective_support(sol.radon, decomp, SupportThresholds::for_solver());
  std::size_t crowded = 0;
  for (std::size_t c = 0; c < decomp.size(); ++c)
    if (trained.groups_in_cell(c).size() > 1) ++crowded;
  double worst_angle = 0.0;
  for (const auto& g : trained.groups) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : solved.groups)
      if ((s.mass > 0.0) == (g.mass > 0.0)) best = std::min(best, angular_distance(g.direction, s.direction));
    worst_angle = std::max(worst_angle, best);
  }
  double total = 0.0;
  for (const auto& nr : run.network.neurons) total += std::abs(nr.c) * nr.theta().norm();
  double imbalance = 0.0;
  for (const auto& nr : run.network.neurons) {
    const double t = nr.theta().norm(), c = std::abs(nr.c);
    if (t * c <= 1e-6 * total) continue;
    imbalance = std::max(imbalance, std::abs(t - c) / std::max(t, c));
  }
  std::ostringstream out;
  out << "objective " << objective << " vs optimum " << sol.objective << " (relative " << rel << "); "
      << trained.size() << " groups, " << crowded << " cells with more than one; max angle to solver atoms "
      << worst_angle << " rad; max imbalance " << imbalance << (run.trace.diverged ? "; diverged" : "");
  const bool ok = sol.converged && !run.trace.diverged && std::abs(rel) <= 0.05 && crowded == 0 &&
                  worst_angle <= 1e-2 && imbalance <= 1e-3;
  return detail::finish(r, ok, clock, out);
}

struct LabelNoiseSummary {
  bool interpolated = false;
  std::size_t onset = 0;
  double early_mean = 0.0;
  double late_mean = 0.0;
  std::size_t onset_support = 0;
  std::size_t final_support = 0;
  bool passed = false;
};

/// Trend of the implicit regulariser after interpolation.
inline LabelNoiseSummary label_noise_trend(const TrainTrace& trace) {
  LabelNoiseSummary s;
  if (!trace.first_interpolation || trace.diverged) return s;
  s.interpolated = true;
  const auto& recs = trace.records;
  std::size_t on = 0;
  while (recs[on].step < *trace.first_interpolation) ++on;
  s.onset = recs[on].step;
  const std::size_t count = recs.size() - on;
  const std::size_t window = std::max<std::size_t>(1, count / 5);
  for (std::size_t k = 0; k < window; ++k) {
    s.early_mean += recs[on + k].lambda;
    s.late_mean += recs[recs.size() - 1 - k].lambda;
  }
  s.early_mean /= double(window);
  s.late_mean /= double(window);
  s.onset_support = recs[on].support;
  s.final_support = recs.back().support;
  s.passed = s.late_mean <= s.early_mean && s.final_support < s.onset_support;
  return s;
}

inline TrainConfig label_noise_config(std::uint64_t seed, std::size_t steps = 2000000) {
  TrainConfig cfg;
  cfg.width = 50;
  cfg.eta = 0.1;
  cfg.noise = NoiseKind::rademacher;
  cfg.step_size = 0.05;
  cfg.steps = steps;
  cfg.record_stride = 1000;
  cfg.seed = seed;
  return cfg;
}

/// Label-noise SGD on three seeds: regulariser trend and support shrinkage.
inline CriterionResult check_label_noise(const CriterionOptions& opt = {}) {
  CriterionResult r{8, "label-noise SGD regulariser trend", false, "", 0.0, 180.0};
  detail::Stopwatch clock;
  const Dataset data = label_noise_dataset();
  const auto decomp = enumerate_cells(data);
  const std::size_t steps = detail::scaled(2000000, opt.scale, 200000);
  bool ok = true;
  std::ostringstream out;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const auto cfg = label_noise_config(opt.seed + s, steps);
    const auto run = sgd_label_noise(data, cfg, decomp);
    const auto sum = label_noise_trend(run.trace);
    if (s == 1) {
      const auto again = sgd_label_noise(data, cfg, decomp);
      bool same = again.trace.records.size() == run.trace.records.size();
      for (std::size_t k = 0; same && k < run.trace.records.size(); ++k) {
        const auto &a = run.trace.records[k], &b = again.trace.records[k];
        same = a.loss == b.loss && a.lambda == b.lambda && a.support == b.support && a.gradnorm == b.gradnorm;
      }
      if (!same) {
        ok = false;
        out << "rerun with seed " << cfg.seed << " differs; ";
      }
    }
    ok = ok && sum.passed;
    out << "seed " << cfg.seed << ": ";
    if (!sum.interpolated) {
      out << "never interpolated; ";
      continue;
    }
    out << "onset " << sum.onset << ", regulariser " << sum.early_mean << " -> " << sum.late_mean << ", support "
        << sum.onset_support << " -> " << sum.final_support << "; ";
  }
  return detail::finish(r, ok, clock, out);
}

/// Analytic training gradients against central differences.
inline CriterionResult check_gradients(const CriterionOptions& opt = {}) {
  CriterionResult r{9, "training gradient vs finite differences", false, "", 0.0, 5.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-gradient");
  std::uniform_int_distribution<std::size_t> pick_n(1, 6), pick_d(1, 3), pick_m(1, 5), pick_form(0, 2);
  std::uniform_real_distribution<double> pick_lambda(0.0, 1.0);
  const std::size_t points = detail::scaled(1000, opt.scale, 20);
  double worst = 0.0;
  std::size_t done = 0, rejected = 0;
  while (done < points) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    TrainConfig cfg;
    cfg.width = pick_m(gen);
    cfg.lambda = pick_lambda(gen);
    const auto form = pick_form(gen);
    cfg.decay = form == 0 ? DecayForm::weight_decay : DecayForm::path_norm;
    cfg.potential = form == 2 ? PotentialKind::label_noise : PotentialKind::tv;
    cfg.seed = gen();
    const auto net = init_network(data.dim(), cfg);
    // Hinge-free: every pre-activation and every outer weight away from zero.
    bool clear = true;
    for (const auto& nr : net.neurons) {
      clear = clear && std::abs(nr.c) > 1e-3;
      const Vector pre = data.lifted() * nr.theta();
      clear = clear && pre.cwiseAbs().minCoeff() > 1e-3;
    }
    if (!clear) {
      ++rejected;
      continue;
    }
    const Vector p = flatten(net);
    const Vector g = objective_gradient(net, data, cfg);
    const Vector fd = finite_difference_gradient(
        [&](const Vector& v) { return training_objective(unflatten(v, data.dim()), data, cfg); }, p, 1e-6);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    ++done;
  }
  std::ostringstream out;
  out << "max relative gradient error " << worst << " over " << points << " points (" << rejected
      << " draws near a hinge rejected)";
  return detail::finish(r, worst <= 1e-5, clock, out);
}

/// Sphere projection and per-cell merging preserve predictions and cell
/// moments; merging never raises the regulariser and strictly lowers it on
/// same-cell, same-sign, non-proportional pairs.
inline CriterionResult check_structure_preserving(const CriterionOptions& opt = {}) {
  CriterionResult r{10, "structure-preserving operations", false, "", 0.0, 10.0};
  detail::Stopwatch clock;
  auto gen = make_stream(opt.seed, "criterion-structure");
  std::uniform_int_distribution<std::size_t> pick_n(2, 8), pick_d(1, 3), pick_atoms(1, 12);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t measures = detail::scaled(1000, opt.scale, 20);
  const std::size_t engineered = detail::scaled(1000, opt.scale, 20);
  double pred_err = 0.0, moment_err = 0.0, increase = 0.0;
  std::size_t not_strict = 0;

  auto moments = [](const AtomicMeasure& mu, const CellDecomposition& decomp) {
    std::map<std::size_t, Vector> out;
    for (const auto& atom : mu.atoms) {
      const Vector theta = atom.neuron.theta();
      if (atom.neuron.c == 0.0 || theta.norm() == 0.0) continue;
      const auto loc = locate_cell(decomp, theta);
      auto [it, fresh] = out.try_emplace(*loc.cell, Vector::Zero(theta.size()));
      it->second += atom.mass * atom.neuron.c * theta;
    }
    return out;
  };
  auto moment_gap = [](const std::map<std::size_t, Vector>& a, const std::map<std::size_t, Vector>& b) {
    double gap = 0.0;
    for (const auto& [cell, v] : a) {
      const auto it = b.find(cell);
      gap = std::max(gap, it == b.end() ? v.norm() : (v - it->second).norm());
    }
    for (const auto& [cell, v] : b)
      if (!a.count(cell)) gap = std::max(gap, v.norm());
    return gap;
  };

  for (std::size_t k = 0; k < measures; ++k) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    const auto decomp = enumerate_cells(data);
    AtomicMeasure mu;
    const std::size_t atoms = pick_atoms(gen);
    for (std::size_t j = 0; j < atoms; ++j) {
      Neuron nr{detail::gaussian_vector(Index(data.dim()), gen), normal(gen), normal(gen)};
      // Some atoms share a cell with an earlier one so merging has work to do.
      if (j > 0 && normal(gen) > 0.0) {
        if (auto partner = detail::same_cell_partner(data, mu.atoms[j - 1].neuron.theta(), gen, 2000))
          nr = Neuron::from_theta(*partner, normal(gen));
      }
      mu.atoms.push_back({nr, unif(gen)});
    }
    const RadonMeasure nu = project_to_sphere(mu);
    const AtomicMeasure merged = merge_cell_mass(mu, decomp);
    double scale = 0.0;
    for (const auto& atom : mu.atoms) scale += atom.mass * std::abs(atom.neuron.c) * atom.neuron.theta().norm();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Vector x = data.point(i);
      const double base = predict_measure(mu, x);
      const double s = scale * data.lifted_point(i).norm();
      pred_err = std::max(pred_err, std::abs(predict_radon(nu, x) - base) / std::max(s, 1e-300));
      pred_err = std::max(pred_err, std::abs(predict_measure(merged, x) - base) / std::max(s, 1e-300));
    }
    const auto before = moments(mu, decomp);
    AtomicMeasure from_sphere;
    for (const auto& atom : nu.atoms) from_sphere.atoms.push_back({Neuron::from_theta(atom.direction, atom.mass), 1.0});
    moment_err = std::max(moment_err, moment_gap(before, moments(from_sphere, decomp)) / std::max(scale, 1e-300));
    moment_err = std::max(moment_err, moment_gap(before, moments(merged, decomp)) / std::max(scale, 1e-300));
    for (auto kind : {PotentialKind::tv, PotentialKind::label_noise}) {
      const Potential pot = kind == PotentialKind::tv ? Potential(kind) : Potential(kind, data);
      const double v0 = pot.integrate(mu), v1 = pot.integrate(merged);
      increase = std::max(increase, (v1 - v0) / std::max(v0, 1e-300));
    }
  }

  std::size_t made = 0;
  while (made < engineered) {
    const Dataset data = detail::gaussian_dataset(pick_n(gen), pick_d(gen), gen);
    const auto decomp = enumerate_cells(data);
    const Vector t1 = detail::gaussian_vector(Index(data.dim() + 1), gen);
    if (!at_bulk(t1, data, 1e-6)) continue;
    const auto t2 = detail::same_cell_partner(data, t1, gen, 2000);
    if (!t2 || angular_distance(t1, *t2) < 1e-3 || !at_bulk(*t2, data, 1e-6)) continue;
    const double sign = normal(gen) > 0.0 ? 1.0 : -1.0;
    AtomicMeasure mu;
    mu.atoms.push_back({Neuron::from_theta(t1, sign * unif(gen)), unif(gen)});
    mu.atoms.push_back({Neuron::from_theta(*t2, sign * unif(gen)), unif(gen)});
    const AtomicMeasure merged = merge_cell_mass(mu, decomp);
    for (auto kind : {PotentialKind::tv, PotentialKind::label_noise}) {
      const Potential pot = kind == PotentialKind::tv ? Potential(kind) : Potential(kind, data);
      const double v0 = pot.integrate(mu), v1 = pot.integrate(merged);
      if (!(v1 < v0 * (1.0 - 1e-12))) ++not_strict;
      increase = std::max(increase, (v1 - v0) / v0);
    }
    ++made;
  }
  std::ostringstream out;
  out << "max prediction error " << pred_err << ", max moment error " << moment_err
      << ", max relative regulariser increase " << increase << ", " << not_strict << "/" << 2 * engineered
      << " engineered merges not strictly decreasing";
  const bool ok = pred_err <= 1e-9 && moment_err <= 1e-12 && increase <= 1e-12 && not_strict == 0;
  return detail::finish(r, ok, clock, out);
}

/// Runs all ten checks in order.
inline std::vector<CriterionResult> run_criteria(const CriterionOptions& opt = {},
                                                 const std::function<void(const CriterionResult&)>& report = {}) {
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult r) {
    if (report) report(r);
    out.push_back(std::move(r));
  };
  add(check_cell_count(opt));
  add(check_cell_additivity(opt));
  add(check_weight_convexity(opt));
  add(check_rescaling(opt));
  auto solver = check_solver(opt);
  add(solver.oracle);
  add(solver.uniqueness);
  add(check_weight_decay(opt));
  add(check_label_noise(opt));
  add(check_gradients(opt));
  add(check_structure_preserving(opt));
  return out;
}

}  // namespace relusparse::testing
