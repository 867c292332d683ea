#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "relusparse/analysis.hpp"
#include "relusparse/potentials.hpp"

using namespace relusparse;
using helpers::gaussian;
using helpers::gaussian_vector;
using helpers::vec;

namespace {

Dataset two_points() { return Dataset::from_rows({{-0.5}, {0.7}}, {0.3, -0.6}); }

Neuron neuron(double a, double b, double c) { return Neuron{vec({a}), b, c}; }

AtomicMeasure random_measure(std::size_t atoms, std::size_t dim, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  AtomicMeasure mu;
  for (std::size_t k = 0; k < atoms; ++k)
    mu.atoms.push_back({Neuron{gaussian_vector(Index(dim), gen), gaussian_vector(1, gen)(0), gaussian_vector(1, gen)(0)},
                        u(gen)});
  return mu;
}

}  // namespace

TEST(EffectiveSupport, NearbyAtomsGroupAndFarOnesSplit) {
  const auto data = two_points();
  const auto decomp = enumerate_cells(data);
  ParticleNetwork close{{neuron(0.0, 1.0, 1.0), neuron(0.01, 1.0, 1.0)}};
  const auto s1 = effective_support(close, decomp);
  ASSERT_EQ(s1.size(), 1u);
  EXPECT_EQ(s1.groups[0].members.size(), 2u);
  EXPECT_TRUE(one_point_per_cell(s1).ok());

  ParticleNetwork far{{neuron(0.0, 1.0, 1.0), neuron(0.3, 1.0, 1.0)}};
  const auto s2 = effective_support(far, decomp);
  ASSERT_EQ(s2.size(), 2u);
  EXPECT_EQ(s2.groups[0].cell, s2.groups[1].cell);
  const auto v = one_point_per_cell(s2);
  EXPECT_FALSE(v.ok());
  ASSERT_EQ(v.cells.size(), 1u);
  EXPECT_EQ(v.cells[0], s2.groups[0].cell);
}

TEST(EffectiveSupport, SmallMassDroppedAndEmptyNetwork) {
  const auto data = two_points();
  const auto decomp = enumerate_cells(data);
  ParticleNetwork net{{neuron(0.0, 1.0, 1.0), neuron(-1.0, -1.0, 1e-7)}};
  const auto s = effective_support(net, decomp);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.dropped, 1u);
  EXPECT_EQ(effective_support(ParticleNetwork{}, decomp).size(), 0u);
  EXPECT_EQ(effective_support(RadonMeasure{}, decomp).size(), 0u);
}

TEST(EffectiveSupport, SameRayOppositeSignsCancel) {
  const auto decomp = enumerate_cells(two_points());
  RadonMeasure nu{{{vec({0.0, 1.0}), 1.0}, {vec({0.0, 1.0}), -1.0}}};
  EXPECT_EQ(effective_support(nu, decomp).size(), 0u);
}

TEST(EffectiveSupport, ProjectedAndLiftedAgree) {
  std::mt19937_64 gen(51);
  const auto data = gaussian(5, 2, gen);
  const auto decomp = enumerate_cells(data);
  for (int t = 0; t < 20; ++t) {
    const auto mu = random_measure(15, 2, gen);
    const auto a = effective_support(mu, decomp);
    const auto b = effective_support(project_to_sphere(mu), decomp);
    ASSERT_EQ(a.size(), b.size());
    const auto cmp = compare_supports(a, b);
    EXPECT_TRUE(cmp.unmatched_first.empty());
    EXPECT_LE(cmp.max_delta, 1e-12);
  }
}

TEST(MergeCellMass, Example) {
  const auto data = two_points();
  const auto decomp = enumerate_cells(data);
  // Two positive atoms in the cell containing (0, 1).
  AtomicMeasure mu{{{neuron(0.0, 1.0, 2.0), 0.5}, {neuron(0.2, 1.0, 1.0), 0.5}}};
  const auto merged = merge_cell_mass(mu, decomp);
  ASSERT_EQ(merged.atoms.size(), 1u);
  const auto& atom = merged.atoms[0];
  EXPECT_DOUBLE_EQ(atom.mass, 1.0);
  EXPECT_DOUBLE_EQ(atom.neuron.c, 1.5);
  // theta = (0.5*2*(0,1) + 0.5*1*(0.2,1)) / 1.5
  EXPECT_NEAR(atom.neuron.a(0), 0.1 / 1.5, 1e-15);
  EXPECT_NEAR(atom.neuron.b, 1.0, 1e-15);
}

TEST(MergeCellMass, PreservesPredictionsAndMoments) {
  std::mt19937_64 gen(52);
  const auto data = gaussian(6, 2, gen);
  const auto decomp = enumerate_cells(data);
  const Potential tv(PotentialKind::tv);
  for (int t = 0; t < 20; ++t) {
    const auto mu = random_measure(40, 2, gen);
    const auto merged = merge_cell_mass(mu, decomp);
    for (std::size_t i = 0; i < data.size(); ++i)
      EXPECT_NEAR(predict_measure(merged, data.point(i)), predict_measure(mu, data.point(i)), 1e-10);
    EXPECT_NEAR(merged.total_mass(), mu.total_mass(), 1e-12);
    // At most one atom per (cell, sign) plus a null atom.
    EXPECT_LE(merged.atoms.size(), 2 * decomp.size() + 1);
    EXPECT_LE(tv.integrate(merged), tv.integrate(mu) + 1e-10);
    const auto s = effective_support(merged, decomp, SupportThresholds::for_solver());
    EXPECT_LE(s.size(), 2 * decomp.size());
  }
}

TEST(MergeCellMass, Idempotent) {
  std::mt19937_64 gen(53);
  const auto data = gaussian(4, 1, gen);
  const auto decomp = enumerate_cells(data);
  const auto once = merge_cell_mass(random_measure(30, 1, gen), decomp);
  const auto twice = merge_cell_mass(once, decomp);
  ASSERT_EQ(once.atoms.size(), twice.atoms.size());
  for (std::size_t k = 0; k < once.atoms.size(); ++k) {
    EXPECT_NEAR(once.atoms[k].mass, twice.atoms[k].mass, 1e-12);
    EXPECT_NEAR(once.atoms[k].neuron.c, twice.atoms[k].neuron.c, 1e-12);
    EXPECT_LE((once.atoms[k].neuron.theta() - twice.atoms[k].neuron.theta()).norm(), 1e-12);
  }
}

TEST(EffectiveSupport, Idempotent) {
  std::mt19937_64 gen(54);
  const auto data = gaussian(5, 2, gen);
  const auto decomp = enumerate_cells(data);
  const auto mu = random_measure(25, 2, gen);
  const auto s = effective_support(mu, decomp);
  RadonMeasure grouped;
  for (const auto& g : s.groups) grouped.atoms.push_back({g.direction, g.mass});
  const auto again = effective_support(grouped, decomp);
  ASSERT_EQ(again.size(), s.size());
  const auto cmp = compare_supports(s, again);
  EXPECT_TRUE(cmp.unmatched_first.empty());
  EXPECT_LE(cmp.max_delta, 1e-12);
}

TEST(CompareSupports, SelfAndDisjoint) {
  std::mt19937_64 gen(55);
  const auto data = gaussian(5, 2, gen);
  const auto decomp = enumerate_cells(data);
  const auto s = effective_support(random_measure(20, 2, gen), decomp);
  const auto self = compare_supports(s, s);
  EXPECT_EQ(self.matched.size(), s.size());
  EXPECT_EQ(self.max_delta, 0.0);
  EXPECT_TRUE(self.cells_only_first.empty());

  const auto none = compare_supports(s, EffectiveSupport{});
  EXPECT_TRUE(none.matched.empty());
  EXPECT_EQ(none.unmatched_first.size(), s.size());
}

TEST(CompareSupports, OppositeSignsNeverMatch) {
  const auto decomp = enumerate_cells(two_points());
  const auto a = effective_support(RadonMeasure{{{vec({0.0, 1.0}), 1.0}}}, decomp);
  const auto b = effective_support(RadonMeasure{{{vec({0.0, 1.0}), -1.0}}}, decomp);
  const auto cmp = compare_supports(a, b);
  EXPECT_TRUE(cmp.matched.empty());
}

TEST(Representer, Bounds) {
  EXPECT_TRUE(representer_check(3, 3));
  EXPECT_FALSE(representer_check(4, 3));
  EXPECT_TRUE(representer_check(vec({0.0, 1.0, 1e-14}), 1, 1e-12));
  EXPECT_FALSE(representer_check(vec({0.0, 1.0, 1e-14}), 1, 0.0));
}

TEST(SparsityReport, CountsAndReference) {
  const auto data = two_points();
  const auto decomp = enumerate_cells(data);
  ParticleNetwork net{{neuron(0.0, 1.0, 1.0), neuron(0.3, 1.0, 1.0), neuron(-1.0, 0.0, -1.0)}};
  const auto s = effective_support(net, decomp);
  const auto r = sparsity_report(s, decomp, &s);
  EXPECT_EQ(r.effective_support, 3u);
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(r.cell_count, 4u);
  EXPECT_EQ(r.active_cell_count, 3u);
  EXPECT_FALSE(r.representer);
  EXPECT_TRUE(r.within_cell_bound);
  EXPECT_FALSE(r.violations.ok());
  ASSERT_TRUE(r.comparison.has_value());
  EXPECT_EQ(r.comparison->matched.size(), 3u);
  std::size_t total = 0;
  for (const auto& [cell, count] : r.per_cell) total += count;
  EXPECT_EQ(total, 3u);
}
