#include "alignedcal/constructions.hpp"
#include "alignedcal/policy.hpp"
#include "oracles/oracles.hpp"

#include <gtest/gtest.h>

using namespace alignedcal;

namespace {

DecisionProcess<Rational> small_example() {
  ConstructionSpec s;
  s.kind = ConstructionKind::Small3x3;
  return build_small_example(s);
}

Rational R(int n, int d = 1) { return Rational(n, d); }

template <typename T>
DecisionProcess<T> uniform_rate_process(const T& rate, const Utility<T>& u) {
  Grid<T> w(2, 2, T(1) / T(4));
  Grid<std::optional<T>> r(2, 2, rate);
  return DecisionProcess<T>({T(1) / T(3), T(2) / T(3)}, {T(1) / T(4), T(3) / T(4)}, w, r, u);
}

CellPolicy<double> random_policy(Rng& rng, std::size_t rows, std::size_t cols, bool deterministic) {
  Grid<double> p(rows, cols, 0.0);
  for (std::size_t h = 0; h < rows; ++h)
    for (std::size_t b = 0; b < cols; ++b) p(h, b) = deterministic ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform();
  return CellPolicy<double>(p);
}

}  // namespace

TEST(IsMonotone, ConstantPolicies) {
  const auto p = small_example();
  for (auto q : {R(0), R(1, 3), R(1)}) EXPECT_TRUE(is_monotone(CellPolicy<Rational>::constant(3, 3, q), p));
}

TEST(IsMonotone, ThresholdsOnB) {
  const auto p = small_example();
  for (std::size_t tau = 0; tau <= 3; ++tau) {
    Grid<Rational> g(3, 3, R(0));
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t b = tau; b < 3; ++b) g(h, b) = R(1);
    EXPECT_TRUE(is_monotone(CellPolicy<Rational>(g), p));
  }
}

TEST(IsMonotone, SmallExampleOptimumIsNot) {
  const auto p = small_example();
  const auto opt = optimal_policy(p);
  EXPECT_FALSE(opt.is_monotone);
  EXPECT_EQ(opt.policy.p(1, 1), R(1));
  EXPECT_EQ(opt.policy.p(2, 1), R(0));
}

TEST(IsMonotone, IgnoresZeroWeightCells) {
  const auto p = small_example();
  Grid<Rational> g(3, 3, R(1));
  g(0, 2) = R(0);  // off the support, above (0,0)
  EXPECT_TRUE(is_monotone(CellPolicy<Rational>(g), p));
}

TEST(IsMonotone, ShapeMismatchIsStructural) {
  EXPECT_THROW(is_monotone(CellPolicy<Rational>::constant(2, 3, R(0)), small_example()), StructuralError);
}

TEST(Optimal, SmallExample) {
  const auto r = optimal_policy(small_example());
  EXPECT_EQ(r.utility, R(4, 5));
  EXPECT_EQ(r.gap_to_optimal, R(0));
  EXPECT_EQ(r.utility, oracle::best_deterministic(small_example()));
}

TEST(Optimal, AllRatesAboveThreshold) {
  const auto u = symmetric_utility<Rational>();
  const auto p = uniform_rate_process(R(7, 10), u);
  const auto r = optimal_policy(p);
  EXPECT_EQ(r.policy, CellPolicy<Rational>::constant(2, 2, R(1)));
  EXPECT_EQ(r.utility, u.accept_value(R(7, 10)));
}

TEST(Optimal, AllRatesAtThresholdAreIndifferent) {
  const Utility<Rational> u{R(2), R(-1), R(1), R(0)};
  const auto c = decision_threshold(u);
  const auto p = uniform_rate_process(c, u);
  EXPECT_EQ(expected_utility(p, CellPolicy<Rational>::constant(2, 2, R(0))),
            expected_utility(p, CellPolicy<Rational>::constant(2, 2, R(1))));
  EXPECT_EQ(optimal_policy(p).policy, CellPolicy<Rational>::constant(2, 2, R(0)));
}

TEST(Optimal, BeatsEveryDeterministicPolicy) {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const auto p = oracle::random_rational_process(rng, 1 + rng.below(3), 1 + rng.below(4), 0.7,
                                                   oracle::random_rational_utility(rng));
    EXPECT_EQ(optimal_policy(p).utility, oracle::best_deterministic(p));
  }
}

TEST(OptimalMonotone, SmallExample) {
  const auto r = optimal_monotone_policy(small_example());
  EXPECT_EQ(r.utility, R(7, 10));
  EXPECT_EQ(r.gap_to_optimal, R(1, 10));
  EXPECT_TRUE(r.is_monotone);
  EXPECT_EQ(r.upset, (std::vector<Cell>{{1, 1}, {2, 0}, {2, 1}, {2, 2}}));
}

TEST(OptimalMonotone, AlignedRatesLoseNothing) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = build_random_aligned(0.0, 4, 4, seed, symmetric_utility<double>());
    const auto r = optimal_monotone_policy(p);
    EXPECT_NEAR(r.gap_to_optimal, 0.0, 1e-12);
  }
}

TEST(OptimalMonotone, GridConstructionLoses) {
  ConstructionSpec s;
  s.kind = ConstructionKind::Grid;
  s.k = 3;
  s.m = 5;
  const auto p = build_grid(s);
  const auto mono = optimal_monotone_policy(p);
  EXPECT_GT(mono.gap_to_optimal, R(0));
  EXPECT_EQ(mono.utility, oracle::best_upset(p));
}

TEST(OptimalMonotone, SolversAgreeWithEnumeration) {
  Rng rng(101);
  for (int i = 0; i < 250; ++i) {
    const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(5);
    const auto p = oracle::random_rational_process(rng, rows, cols, 0.8, oracle::random_rational_utility(rng));
    const auto ex = optimal_monotone_policy(p, MonotoneSolver::Exhaustive);
    const auto mc = optimal_monotone_policy(p, MonotoneSolver::MinCut);
    const auto expect = oracle::best_upset(p);
    EXPECT_EQ(ex.utility, expect) << "instance " << i;
    EXPECT_EQ(mc.utility, expect) << "instance " << i;
    EXPECT_TRUE(oracle::monotone_on_support(p, ex.policy.p));
    EXPECT_TRUE(oracle::monotone_on_support(p, mc.policy.p));
    EXPECT_LE(ex.utility, optimal_policy(p).utility);
  }
}

TEST(OptimalMonotone, EqualityIffThresholdSetIsUpClosed) {
  Rng rng(7);
  int untied = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = oracle::random_rational_process(rng, 3, 3, 0.8, oracle::random_rational_utility(rng));
    const auto opt = optimal_policy(p);
    const auto c = decision_threshold(p.utility());
    bool tie = false;
    for (const Cell& cell : p.support()) tie = tie || p.rate(cell) == c;
    if (tie) {
      // A cell at the threshold makes the per-cell optimum non-unique.
      EXPECT_EQ(optimal_monotone_policy(p).utility, oracle::best_upset(p));
      continue;
    }
    ++untied;
    EXPECT_EQ(optimal_monotone_policy(p).utility == opt.utility, opt.is_monotone);
  }
  EXPECT_GT(untied, 100);
}

TEST(OptimalMonotone, LargeSupportUsesMinCut) {
  const auto p = build_random_aligned(0.25, 6, 6, 3, symmetric_utility<double>());
  const auto r = optimal_monotone_policy(p);
  EXPECT_EQ(r.solver, "mincut");
  EXPECT_TRUE(r.is_monotone);
}

TEST(Bound, Examples) {
  EXPECT_EQ(monotone_gap_bound(0.2, symmetric_utility<Rational>()), R(1, 2));
  EXPECT_NEAR(monotone_gap_bound(0.3, symmetric_utility<double>()), 0.75, 1e-15);
  EXPECT_EQ(monotone_gap_bound(0.0, symmetric_utility<Rational>()), R(0));
  EXPECT_EQ(monotone_gap_bound(0.1, Utility<Rational>{R(2), R(0), R(1), R(0)}), R(7, 20));
  EXPECT_THROW(monotone_gap_bound(1.5, symmetric_utility<double>()), InvalidArgument);
}

TEST(Bound, HoldsOnAlignedProcesses) {
  Rng urng(77);
  for (double alpha : {0.0, 0.05, 0.1, 0.25}) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto u = oracle::random_utility(urng);
      const auto p = build_random_aligned(alpha, 3, 4, seed, u);
      const double gap = optimal_policy(p).utility - optimal_monotone_policy(p).utility;
      EXPECT_LE(gap, monotone_gap_bound(alpha, u) + 1e-9);
    }
  }
}

TEST(Repair, MonotoneInputIsUnchanged) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto p = build_random_aligned(0.1, 3, 3, i, symmetric_utility<double>());
    const auto mono = optimal_monotone_policy(p).policy;
    EXPECT_EQ(monotone_repair(p, mono), mono);
    const auto flat = CellPolicy<double>::constant(3, 3, rng.uniform());
    EXPECT_EQ(monotone_repair(p, flat), flat);
  }
}

TEST(Repair, OutputIsAlwaysMonotone) {
  Rng rng(55);
  for (int i = 0; i < 300; ++i) {
    const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(4);
    const auto p = build_random_aligned(1.0, rows, cols, i, symmetric_utility<double>());
    const auto pol = random_policy(rng, rows, cols, i % 2 == 0);
    EXPECT_TRUE(is_monotone(monotone_repair(p, pol), p)) << "instance " << i;
    const auto audit = check_alignment(view_of(p), 0.3);
    if (audit.passed) EXPECT_TRUE(is_monotone(monotone_repair(p, pol, audit), p));
  }
}

TEST(Repair, PerfectAlignmentKeepsOptimum) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto p = build_random_aligned(0.0, 3, 4, seed, symmetric_utility<double>());
    const auto opt = optimal_policy(p);
    EXPECT_NEAR(expected_utility(p, monotone_repair(p, opt.policy, check_alignment(view_of(p), 0.0))), opt.utility,
                1e-12);
  }
}

TEST(Repair, LossWithinBound) {
  Rng urng(91);
  for (double alpha : {0.05, 0.1, 0.25}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto u = oracle::random_utility(urng);
      const auto p = build_random_aligned(alpha, 3, 3, seed, u);
      const auto audit = check_alignment(view_of(p), alpha);
      ASSERT_TRUE(audit.passed);
      const auto opt = optimal_policy(p);
      const auto repaired = monotone_repair(p, opt.policy, audit);
      EXPECT_TRUE(is_monotone(repaired, p));
      EXPECT_GE(expected_utility(p, repaired), opt.utility - monotone_gap_bound(alpha, u) - 1e-9)
          << "alpha " << alpha << " seed " << seed;
    }
  }
}

TEST(Repair, SmallExampleRepair) {
  const auto p = small_example();
  const auto opt = optimal_policy(p);
  const auto fixed = monotone_repair(p, opt.policy);
  EXPECT_TRUE(is_monotone(fixed, p));
  EXPECT_LE(expected_utility(p, fixed), opt.utility);
  EXPECT_GE(expected_utility(p, fixed), opt.utility - monotone_gap_bound(0.6, p.utility()));
}
