// Command-line front end: cells, solve, train, analyze, compare, verify.
//
// Exit codes: 0 ok, 1 usage or input error, 2 infeasible program,
// 3 non-convergence or divergence, 4 a checked property failed.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "relusparse/analysis.hpp"
#include "relusparse/arrangement.hpp"
#include "relusparse/io.hpp"
#include "relusparse/serialize.hpp"
#include "relusparse/solver.hpp"
#include "relusparse/testing/criteria.hpp"
#include "relusparse/trainer.hpp"

namespace fs = std::filesystem;
using namespace relusparse;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInfeasible = 2, kNonConvergence = 3, kPropertyFailure = 4 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::infeasible: return kInfeasible;
    case ErrorCode::non_convergence:
    case ErrorCode::divergence:
    case ErrorCode::numerical: return kNonConvergence;
    default: return kUsage;
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::invalid_argument, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::invalid_argument, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::string num(double v) { return detail::format_real(v); }

// Flags > config file > defaults. Only flags the user actually passed
// override the file.
template <class T>
void layer(json& cfg, const std::string& key, const CLI::Option* opt, const T& flag_value) {
  if (opt->count() > 0) cfg[key] = flag_value;
}

json load_config(const std::string& path, json defaults) {
  if (path.empty()) return defaults;
  const json file = read_json(path);
  for (const auto& [key, value] : file.items()) {
    require(defaults.contains(key), ErrorCode::invalid_argument, "unknown config key '" + key + "' in " + path);
    defaults[key] = value;
  }
  return defaults;
}

// Atomic measure and the matching regulariser from a network or solution file.
struct LoadedMeasure {
  std::string kind;
  std::optional<ParticleNetwork> network;
  std::optional<RadonMeasure> radon;
};

LoadedMeasure load_measure(const std::string& path) {
  const json j = read_json(path);
  LoadedMeasure m;
  const json& body = j.contains("network") ? j.at("network") : j;
  if (body.contains("neurons")) {
    m.kind = "network";
    m.network = body.get<ParticleNetwork>();
  } else if (j.contains("solution")) {
    m.kind = "solution";
    m.radon = j.at("solution").at("radon").get<RadonMeasure>();
  } else if (j.contains("radon")) {
    m.kind = "solution";
    m.radon = j.at("radon").get<RadonMeasure>();
  } else {
    throw Error(ErrorCode::parse_error, path + ": expected a network or a solution");
  }
  return m;
}

EffectiveSupport support_of(const LoadedMeasure& m, const CellDecomposition& decomp, const SupportThresholds& th) {
  if (m.network) return effective_support(*m.network, decomp, th);
  return effective_support(*m.radon, decomp, th);
}

SupportThresholds thresholds_for(const LoadedMeasure& m, double tau_mass, double tau_angle) {
  SupportThresholds th = m.network ? SupportThresholds::for_training() : SupportThresholds::for_solver();
  if (tau_mass >= 0.0) th.tau_mass_rel = tau_mass;
  if (tau_angle >= 0.0) th.tau_angle = tau_angle;
  return th;
}

// --- cells -----------------------------------------------------------------

struct CellsArgs {
  std::string data;
  std::string out;
  bool allow_large = false;
};

int run_cells(const CellsArgs& a) {
  const Dataset data = read_dataset_csv(a.data);
  ArrangementOptions opt;
  opt.allow_large = a.allow_large;
  const auto decomp = enumerate_cells(data, opt);
  const auto expected = central_region_count(decomp.distinct_hyperplanes, data.dim());
  std::cout << "cells=" << decomp.size() << " n=" << data.size() << " d=" << data.dim()
            << " generic=" << (decomp.generic ? "yes" : "no") << " formula=" << expected << "\n";
  for (const auto& w : decomp.warnings) std::cerr << "warning: " << w << "\n";
  if (!a.out.empty()) {
    const auto dir = prepare_out(a.out);
    write_json(dir / "cells.json", json(decomp));
    std::ostringstream summary;
    summary << "cell,signs,active,margin\n";
    for (std::size_t s = 0; s < decomp.size(); ++s)
      summary << s << ',' << format_signs(decomp.cells[s].signs) << ',' << decomp.cells[s].active_set.size() << ','
              << num(decomp.cells[s].margin) << '\n';
    write_file(dir / "cells.csv", summary.str());
  }
  return kOk;
}

// --- solve -----------------------------------------------------------------

struct SolveArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string potential = "tv";
  std::string mode = "constrained";
  double lambda = 0.0;
  std::size_t max_iters = 0;
  std::uint64_t seed = 0;
  bool lp = false;
  std::string fixture;
  CLI::Option* o_potential = nullptr;
  CLI::Option* o_mode = nullptr;
  CLI::Option* o_lambda = nullptr;
  CLI::Option* o_iters = nullptr;
  CLI::Option* o_seed = nullptr;
};

int run_solve(const SolveArgs& a) {
  SolverConfig defaults_cfg;
  json cfg = load_config(a.config, {{"potential", "tv"},
                                    {"mode", "constrained"},
                                    {"lambda", 0.0},
                                    {"max_iters", defaults_cfg.max_iters},
                                    {"seed", 0}});
  layer(cfg, "potential", a.o_potential, a.potential);
  layer(cfg, "mode", a.o_mode, a.mode);
  layer(cfg, "lambda", a.o_lambda, a.lambda);
  layer(cfg, "max_iters", a.o_iters, a.max_iters);
  layer(cfg, "seed", a.o_seed, a.seed);
  const auto kind = parse_potential_kind(cfg.at("potential").get<std::string>());
  const auto mode = parse_program_mode(cfg.at("mode").get<std::string>());
  SolverConfig sc;
  sc.max_iters = cfg.at("max_iters").get<std::size_t>();
  sc.seed = cfg.at("seed").get<std::uint64_t>();
  if (sc.seed != 0) sc.init_scale = 1.0;

  const Dataset data = read_dataset_csv(a.data);
  cfg["dataset_fingerprint"] = dataset_fingerprint(data);
  const std::string hash = config_hash(cfg);
  const auto decomp = enumerate_cells(data);
  const auto prog = build_program(data, decomp, kind, mode, cfg.at("lambda").get<double>());
  const Solution sol = solve(prog, sc);
  const auto support = effective_support(sol.radon, decomp, SupportThresholds::for_solver());
  const auto report = sparsity_report(support, decomp);

  std::cout << "cells=" << decomp.size() << " objective=" << num(sol.objective) << " regulariser=" << num(sol.regulariser)
            << " atoms=" << sol.radon.atoms.size() << " support=" << support.size()
            << " certificate=" << (sol.certificate.holds ? "holds" : "fails") << " gap=" << num(sol.certificate.gap)
            << " iterations=" << sol.iterations << " converged=" << (sol.converged ? "yes" : "no") << "\n";

  json result = {{"config", cfg}, {"config_hash", hash}, {"solution", sol}, {"sparsity", report}};
  int code = kOk;
  if (a.lp) {
    const auto lp = lp_from_solution(prog, sol);
    const bool rep = representer_check(lp.lp, data.size());
    std::cout << "lp_objective=" << num(lp.lp.objective) << " lp_support=" << lp.lp.support.size()
              << " representer=" << (rep ? "pass" : "fail") << " target_gap=" << num(lp.target_gap) << "\n";
    result["lp"] = {{"objective", lp.lp.objective},
                    {"support", lp.lp.support},
                    {"z", detail::vec_to_json(lp.lp.z)},
                    {"representer", rep},
                    {"target_gap", lp.target_gap}};
    if (!rep) code = kPropertyFailure;
  }
  if (!a.fixture.empty()) {
    const json fx = read_json(a.fixture);
    const double expected = fx.at("objective").get<double>();
    const double tol = fx.value("rel_tol", 1e-4);
    const bool pass = std::abs(sol.objective - expected) <= tol * std::max(std::abs(expected), 1e-12);
    std::cout << "fixture=" << (pass ? "pass" : "fail") << " expected=" << num(expected) << "\n";
    result["fixture"] = {{"file", a.fixture}, {"expected", expected}, {"passed", pass}};
    if (!pass) code = kPropertyFailure;
  }
  if (!a.out.empty()) {
    const auto dir = prepare_out(a.out);
    write_json(dir / "solution.json", result);
    std::ostringstream radon;
    write_radon_csv(radon, sol.radon);
    write_file(dir / "radon.csv", radon.str());
  }
  if (!sol.converged) {
    std::cerr << "solver did not converge within " << sc.max_iters << " iterations (residual "
              << num(sol.primal_residual) << ")\n";
    return kNonConvergence;
  }
  return code;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string algorithm = "label-noise";
  double eta = 0.0, lambda = 0.0, step_size = 0.0, init_scale = 1.0;
  std::size_t width = 0, steps = 0, stride = 0;
  std::uint64_t seed = 0;
  std::string noise, decay, potential;
  CLI::Option *o_algorithm = nullptr, *o_eta = nullptr, *o_lambda = nullptr, *o_step = nullptr, *o_init = nullptr;
  CLI::Option *o_width = nullptr, *o_steps = nullptr, *o_stride = nullptr, *o_seed = nullptr;
  CLI::Option *o_noise = nullptr, *o_decay = nullptr, *o_potential = nullptr;
};

int run_train(const TrainArgs& a) {
  const TrainConfig d;
  json cfg = load_config(a.config, {{"algorithm", "label-noise"},
                                    {"eta", d.eta},
                                    {"lambda", d.lambda},
                                    {"step_size", d.step_size},
                                    {"init_scale", d.init_scale},
                                    {"width", d.width},
                                    {"steps", d.steps},
                                    {"record_stride", d.record_stride},
                                    {"seed", d.seed},
                                    {"noise", to_string(d.noise)},
                                    {"decay", to_string(d.decay)},
                                    {"potential", to_string(d.potential)}});
  layer(cfg, "algorithm", a.o_algorithm, a.algorithm);
  layer(cfg, "eta", a.o_eta, a.eta);
  layer(cfg, "lambda", a.o_lambda, a.lambda);
  layer(cfg, "step_size", a.o_step, a.step_size);
  layer(cfg, "init_scale", a.o_init, a.init_scale);
  layer(cfg, "width", a.o_width, a.width);
  layer(cfg, "steps", a.o_steps, a.steps);
  layer(cfg, "record_stride", a.o_stride, a.stride);
  layer(cfg, "seed", a.o_seed, a.seed);
  layer(cfg, "noise", a.o_noise, a.noise);
  layer(cfg, "decay", a.o_decay, a.decay);
  layer(cfg, "potential", a.o_potential, a.potential);

  TrainConfig tc;
  tc.eta = cfg.at("eta").get<double>();
  tc.lambda = cfg.at("lambda").get<double>();
  tc.step_size = cfg.at("step_size").get<double>();
  tc.init_scale = cfg.at("init_scale").get<double>();
  tc.width = cfg.at("width").get<std::size_t>();
  tc.steps = cfg.at("steps").get<std::size_t>();
  tc.record_stride = cfg.at("record_stride").get<std::size_t>();
  tc.seed = cfg.at("seed").get<std::uint64_t>();
  tc.noise = parse_noise_kind(cfg.at("noise").get<std::string>());
  tc.decay = parse_decay_form(cfg.at("decay").get<std::string>());
  tc.potential = parse_potential_kind(cfg.at("potential").get<std::string>());
  tc.validate();
  const std::string algorithm = cfg.at("algorithm").get<std::string>();

  const Dataset data = read_dataset_csv(a.data);
  cfg["dataset_fingerprint"] = dataset_fingerprint(data);
  const std::string hash = config_hash(cfg);
  const auto decomp = enumerate_cells(data);
  TrainResult run;
  if (algorithm == "gd") {
    run = gd_weight_decay(data, tc, decomp);
  } else if (algorithm == "label-noise") {
    run = sgd_label_noise(data, tc, decomp);
  } else if (algorithm == "sgd") {
    run = sgd_plain(data, tc, decomp);
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown algorithm '" + algorithm + "' (expected gd, label-noise or sgd)");
  }
  const auto& trace = run.trace;
  const auto& last = trace.records.back();
  std::cout << "algorithm=" << algorithm << " steps=" << last.step << " loss=" << num(last.loss)
            << " lambda=" << num(last.lambda) << " support=" << last.support
            << " interpolated=" << (trace.interpolated ? "yes" : "no");
  if (trace.first_interpolation) std::cout << " onset=" << *trace.first_interpolation;
  std::cout << "\n";

  json summary = {{"config", cfg},
                  {"config_hash", hash},
                  {"interpolated", trace.interpolated},
                  {"diverged", trace.diverged},
                  {"diagnostics", trace.diagnostics},
                  {"final", {{"step", last.step}, {"loss", last.loss}, {"lambda", last.lambda}, {"support", last.support}}}};
  if (trace.first_interpolation) summary["first_interpolation"] = *trace.first_interpolation;
  if (algorithm == "label-noise" && tc.eta > 0.0) {
    const auto t = testing::label_noise_trend(trace);
    std::cout << "lambda_trend=" << (t.passed ? "pass" : "fail") << " early=" << num(t.early_mean)
              << " late=" << num(t.late_mean) << " support " << t.onset_support << "->" << t.final_support << "\n";
    summary["lambda_trend"] = {{"passed", t.passed},        {"interpolated", t.interpolated},
                               {"onset", t.onset},          {"early_mean", t.early_mean},
                               {"late_mean", t.late_mean},  {"onset_support", t.onset_support},
                               {"final_support", t.final_support}};
  }
  if (!trace.diverged) {
    const auto support = effective_support(run.network, decomp, tc.support);
    summary["sparsity"] = sparsity_report(support, decomp);
  }
  if (!a.out.empty()) {
    const auto dir = prepare_out(a.out);
    std::ostringstream csv;
    write_trace_csv(csv, trace);
    write_file(dir / "trace.csv", csv.str());
    write_json(dir / "network.json", {{"config_hash", hash}, {"network", run.network}});
    write_json(dir / "summary.json", summary);
  }
  if (trace.diverged) {
    std::cerr << "training diverged: " << trace.diagnostics << "\n";
    return kNonConvergence;
  }
  return kOk;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string data;
  std::string input;
  std::string reference;
  std::string out;
  double tau_mass = -1.0, tau_angle = -1.0;
};

int run_analyze(const AnalyzeArgs& a) {
  const Dataset data = read_dataset_csv(a.data);
  const auto decomp = enumerate_cells(data);
  const auto m = load_measure(a.input);
  const auto th = thresholds_for(m, a.tau_mass, a.tau_angle);
  const auto support = support_of(m, decomp, th);
  std::optional<EffectiveSupport> ref;
  if (!a.reference.empty()) {
    const auto r = load_measure(a.reference);
    ref = support_of(r, decomp, thresholds_for(r, a.tau_mass, a.tau_angle));
  }
  const auto report = sparsity_report(support, decomp, ref ? &*ref : nullptr);
  json out = {{"input", a.input}, {"kind", m.kind}, {"support", support}, {"report", report}};
  std::cout << "support=" << support.size() << " cells=" << decomp.size() << " n=" << data.size()
            << " representer=" << (report.representer ? "yes" : "no")
            << " one_per_cell=" << (report.violations.ok() ? "yes" : "no");
  if (m.network) {
    // Merging within cells keeps every datapoint prediction; the regulariser
    // can only go down.
    const auto mu = AtomicMeasure::empirical(*m.network);
    const auto merged = merge_cell_mass(mu, decomp);
    const Potential tv(PotentialKind::tv);
    const Potential ln(PotentialKind::label_noise, data);
    double pred_change = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
      pred_change = std::max(pred_change, std::abs(predict_measure(merged, data.point(i)) - predict_measure(mu, data.point(i))));
    out["merge"] = {{"atoms_before", mu.atoms.size()},
                    {"atoms_after", merged.atoms.size()},
                    {"tv_before", tv.integrate(mu)},
                    {"tv_after", tv.integrate(merged)},
                    {"label_noise_before", ln.integrate(mu)},
                    {"label_noise_after", ln.integrate(merged)},
                    {"max_prediction_change", pred_change}};
    std::cout << " tv=" << num(tv.integrate(mu)) << "->" << num(tv.integrate(merged));
  }
  if (report.comparison) std::cout << " max_delta=" << num(report.comparison->max_delta);
  std::cout << "\n";
  if (!a.out.empty()) write_json(prepare_out(a.out) / "analysis.json", out);
  return kOk;
}

// --- compare ---------------------------------------------------------------

struct CompareArgs {
  std::string data;
  std::string first;
  std::string second;
  std::string out;
  double cross_tol = 1e-2;
  double tau_mass = -1.0, tau_angle = -1.0;
};

int run_compare(const CompareArgs& a) {
  const Dataset data = read_dataset_csv(a.data);
  const auto decomp = enumerate_cells(data);
  const auto m1 = load_measure(a.first);
  const auto m2 = load_measure(a.second);
  const auto s1 = support_of(m1, decomp, thresholds_for(m1, a.tau_mass, a.tau_angle));
  const auto s2 = support_of(m2, decomp, thresholds_for(m2, a.tau_mass, a.tau_angle));
  const auto cmp = compare_supports(s1, s2, a.cross_tol);
  std::cout << "first=" << s1.size() << " second=" << s2.size() << " matched=" << cmp.matched.size()
            << " unmatched=" << cmp.unmatched_first.size() << "/" << cmp.unmatched_second.size()
            << " max_delta=" << num(cmp.max_delta) << " max_cross_delta=" << num(cmp.max_cross_delta) << "\n";
  if (!a.out.empty())
    write_json(prepare_out(a.out) / "comparison.json",
               {{"first", a.first}, {"second", a.second}, {"first_support", s1}, {"second_support", s2}, {"comparison", cmp}});
  return kOk;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
  bool quick = false;
  bool inject = false;
  std::uint64_t seed = 0;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  testing::CriterionOptions opt;
  opt.seed = a.seed;
  opt.scale = a.quick ? 0.1 : 1.0;
  opt.inject_failure = a.inject;
  json matrix = json::array();
  const auto results = testing::run_criteria(opt, [&](const testing::CriterionResult& r) {
    std::printf("[%s] criterion %d: %s (%.2fs): %s\n", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    matrix.push_back({{"id", r.id},
                      {"name", r.name},
                      {"passed", r.passed},
                      {"detail", r.detail},
                      {"seconds", r.seconds},
                      {"limit_seconds", r.limit_seconds}});
  });
  bool all = true;
  for (const auto& r : results) all = all && r.passed;
  if (!a.out.empty())
    write_json(prepare_out(a.out) / "verify.json",
               {{"seed", a.seed}, {"scale", opt.scale}, {"inject_failure", a.inject}, {"criteria", matrix}, {"passed", all}});
  return all ? kOk : kPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse shallow ReLU networks: cell decompositions, convex solver, training"};
  app.require_subcommand(1);

  CellsArgs cells;
  auto* c = app.add_subcommand("cells", "Enumerate the cells of the activation arrangement");
  c->add_option("data", cells.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--out", cells.out, "Output directory");
  c->add_flag("--allow-large", cells.allow_large, "Lift the cell-count guard");

  SolveArgs sv;
  auto* s = app.add_subcommand("solve", "Solve the finite convex program over cells");
  s->add_option("data", sv.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  s->add_option("--config", sv.config, "JSON config; flags take precedence")->check(CLI::ExistingFile);
  s->add_option("--out", sv.out, "Output directory");
  sv.o_potential = s->add_option("--potential", sv.potential, "tv, label-noise or label-noise-exact");
  sv.o_mode = s->add_option("--mode", sv.mode, "constrained or penalized");
  sv.o_lambda = s->add_option("--lambda", sv.lambda, "Penalty weight (penalized mode)");
  sv.o_iters = s->add_option("--max-iters", sv.max_iters, "Iteration cap");
  sv.o_seed = s->add_option("--seed", sv.seed, "Random start seed (0: start at zero)");
  s->add_flag("--lp-from-solution", sv.lp, "Re-solve basis pursuit over the extracted atoms");
  s->add_option("--check-fixture", sv.fixture, "Compare the objective with a fixture JSON")->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a finite-width network");
  t->add_option("data", tr.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "JSON config; flags take precedence")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Output directory");
  tr.o_algorithm = t->add_option("--algorithm", tr.algorithm, "gd, label-noise or sgd");
  tr.o_eta = t->add_option("--eta", tr.eta, "Label-noise scale");
  tr.o_lambda = t->add_option("--lambda", tr.lambda, "Explicit decay weight (gd)");
  tr.o_step = t->add_option("--step-size", tr.step_size, "Step size");
  tr.o_init = t->add_option("--init-scale", tr.init_scale, "Initialisation scale");
  tr.o_width = t->add_option("--width", tr.width, "Number of neurons");
  tr.o_steps = t->add_option("--steps", tr.steps, "Number of steps");
  tr.o_stride = t->add_option("--stride", tr.stride, "Record every this many steps");
  tr.o_seed = t->add_option("--seed", tr.seed, "Seed");
  tr.o_noise = t->add_option("--noise", tr.noise, "rademacher or gaussian");
  tr.o_decay = t->add_option("--decay", tr.decay, "weight-decay or path-norm");
  tr.o_potential = t->add_option("--potential", tr.potential, "Weight used by path-norm decay");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Effective support and sparsity report of a network or solution");
  z->add_option("data", an.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  z->add_option("input", an.input, "network.json or solution.json")->required()->check(CLI::ExistingFile);
  z->add_option("--reference", an.reference, "Second network or solution to compare with")->check(CLI::ExistingFile);
  z->add_option("--tau-mass", an.tau_mass, "Relative mass threshold");
  z->add_option("--tau-angle", an.tau_angle, "Angular grouping threshold (radians)");
  z->add_option("--out", an.out, "Output directory");

  CompareArgs cp;
  auto* k = app.add_subcommand("compare", "Compare the supports of two networks or solutions");
  k->add_option("data", cp.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  k->add_option("first", cp.first, "First network or solution")->required()->check(CLI::ExistingFile);
  k->add_option("second", cp.second, "Second network or solution")->required()->check(CLI::ExistingFile);
  k->add_option("--cross-tol", cp.cross_tol, "Angle limit for matches across a facet");
  k->add_option("--tau-mass", cp.tau_mass, "Relative mass threshold");
  k->add_option("--tau-angle", cp.tau_angle, "Angular grouping threshold (radians)");
  k->add_option("--out", cp.out, "Output directory");

  VerifyArgs vf;
  auto* v = app.add_subcommand("verify", "Run the acceptance criteria");
  v->add_flag("--quick", vf.quick, "Reduced sample counts");
  v->add_flag("--inject-failure", vf.inject, "Negative control: break the additivity check");
  v->add_option("--seed", vf.seed, "Seed offset");
  v->add_option("--out", vf.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c) return run_cells(cells);
    if (*s) return run_solve(sv);
    if (*t) return run_train(tr);
    if (*z) return run_analyze(an);
    if (*k) return run_compare(cp);
    if (*v) return run_verify(vf);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
