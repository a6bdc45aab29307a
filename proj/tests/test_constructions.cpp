#include "alignedcal/constructions.hpp"
#include "alignedcal/policy.hpp"
#include "oracles/oracles.hpp"

#include <gtest/gtest.h>

using namespace alignedcal;

namespace {

ConstructionSpec small_spec(double lo = 0.2, double hi = 0.8) {
  ConstructionSpec s;
  s.kind = ConstructionKind::Small3x3;
  s.p_minus = lo;
  s.p_plus = hi;
  return s;
}

ConstructionSpec grid_spec(std::size_t k, std::size_t m, double lo = 0.2, double hi = 0.8) {
  ConstructionSpec s;
  s.kind = ConstructionKind::Grid;
  s.k = k;
  s.m = m;
  s.p_minus = lo;
  s.p_plus = hi;
  return s;
}

ConstructionSpec continuous_spec(std::size_t k, std::size_t n) {
  ConstructionSpec s;
  s.kind = ConstructionKind::Continuous;
  s.k = k;
  s.sub_bins = n;
  return s;
}

template <typename T>
T weight_sum(const DecisionProcess<T>& p) {
  T total(0);
  for (std::size_t h = 0; h < p.rows(); ++h)
    for (std::size_t b = 0; b < p.cols(); ++b) total += p.weight()(h, b);
  return total;
}

Rational R(int n, int d = 1) { return Rational(n, d); }

}  // namespace

TEST(SmallExample, BValues) {
  const auto p = build_small_example(small_spec());
  EXPECT_EQ(p.b_values(), (std::vector<Rational>{R(2, 5), R(1, 2), R(4, 5)}));
  EXPECT_EQ(weight_sum(p), R(1));
}

TEST(SmallExample, RowRatesAreMonotone) {
  const auto m = marginal_rates(build_small_example(small_spec()));
  EXPECT_EQ(*m.by_h[0], R(1, 5));
  EXPECT_EQ(*m.by_h[1], R(1, 2));
  EXPECT_EQ(*m.by_h[2], R(3, 5));
  EXPECT_TRUE(non_decreasing(m.by_h));
}

TEST(SmallExample, PerfectlyCalibrated) {
  const auto p = build_small_example(small_spec());
  const auto m = marginal_rates(p);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(*m.by_b[b], p.b_values()[b]);
}

TEST(SmallExample, SupportIsLowerTriangle) {
  const auto p = build_small_example(small_spec());
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_EQ(p.in_support({h, b}), b <= h);
      if (b > h) EXPECT_FALSE(p.rate()(h, b).has_value());
    }
}

TEST(SmallExample, RejectsThresholdOnWrongSide) {
  EXPECT_THROW(build_small_example(small_spec(0.5, 0.8)), InvalidArgument);
  EXPECT_THROW(build_small_example(small_spec(0.2, 0.5)), InvalidArgument);
  EXPECT_THROW(build_small_example(small_spec(0.6, 0.8)), InvalidArgument);
}

TEST(Grid, SmallestGridBValues) {
  const auto p = build_grid(grid_spec(2, 3));
  EXPECT_EQ(p.b_values(), (std::vector<Rational>{R(1, 5), R(2, 5), R(3, 5)}));
}

TEST(Grid, FirstColumnBelongsToLowestRow) {
  const auto p = build_grid(grid_spec(2, 3));
  Rational col(0);
  for (std::size_t h = 0; h < p.rows(); ++h) col += p.weight()(h, 0);
  EXPECT_EQ(p.weight()(0, 0) / col, R(1));
}

TEST(Grid, RejectsTooFewColumns) {
  EXPECT_THROW(build_grid(grid_spec(3, 3)), InvalidArgument);
  EXPECT_THROW(build_grid(grid_spec(1, 3)), InvalidArgument);
}

TEST(Grid, CalibratedMonotoneAndStrictlySuboptimal) {
  const std::vector<std::pair<double, double>> straddles{{0.2, 0.8}, {0.1, 0.6}, {0.45, 0.55}, {0.0, 1.0}};
  for (std::size_t k = 2; k <= 5; ++k) {
    for (std::size_t m = k + 1; m <= k + 4; ++m) {
      for (auto [lo, hi] : straddles) {
        const auto p = build_grid(grid_spec(k, m, lo, hi));
        EXPECT_EQ(weight_sum(p), R(1));
        const auto mr = marginal_rates(p);
        for (std::size_t b = 0; b < m; ++b) {
          EXPECT_EQ(*mr.by_b[b], p.b_values()[b]);
          Rational col(0);
          for (std::size_t h = 0; h < k; ++h) col += p.weight()(h, b);
          EXPECT_EQ(col, Rational(1, static_cast<long>(m)));
        }
        EXPECT_TRUE(non_decreasing(mr.by_h)) << k << "x" << m;
        for (std::size_t b = 1; b < m; ++b) EXPECT_LT(p.b_values()[b - 1], p.b_values()[b]);
        const auto opt = optimal_policy(p);
        const auto mono = optimal_monotone_policy(p);
        EXPECT_GT(opt.utility - mono.utility, R(0)) << k << "x" << m << " " << lo << "," << hi;
      }
    }
  }
}

TEST(Grid, GapUnderSkewedUtilities) {
  const std::vector<Utility<double>> utilities{{1, 0, 1, 0}, {2, -1, 1, 0}, {1, -0.5, 0.5, -0.25}};
  for (const auto& u : utilities) {
    const double c = decision_threshold(u);
    auto s = grid_spec(3, 5, c / 2, (1 + c) / 2);
    s.utility = u;
    const auto p = build_grid(s);
    EXPECT_GT(optimal_policy(p).utility, optimal_monotone_policy(p).utility);
    s.kind = ConstructionKind::Small3x3;
    const auto q = build_small_example(s);
    EXPECT_GT(optimal_policy(q).utility, optimal_monotone_policy(q).utility);
  }
}

TEST(Continuous, IntervalsCarryEqualMass) {
  for (std::size_t n : {1, 4, 16}) {
    const auto p = build_continuous(continuous_spec(2, n));
    ASSERT_EQ(p.cols(), 3 * n);
    for (std::size_t j = 0; j < 3; ++j) {
      double mass = 0.0;
      for (std::size_t col = j * n; col < (j + 1) * n; ++col)
        for (std::size_t h = 0; h < p.rows(); ++h) mass += p.weight()(h, col);
      EXPECT_NEAR(mass, 1.0 / 3.0, 1e-12);
    }
    EXPECT_NEAR(weight_sum(p), 1.0, 1e-12);
  }
}

TEST(Continuous, FirstIntervalBelongsToLowestLevel) {
  const std::size_t n = 8;
  const auto p = build_continuous(continuous_spec(2, n));
  double in_first = 0.0, row = 0.0;
  for (std::size_t col = 0; col < p.cols(); ++col) {
    row += p.weight()(0, col);
    if (col < n) in_first += p.weight()(0, col);
  }
  // Every sample from the first interval sits in the lowest level.
  double first_total = 0.0;
  for (std::size_t col = 0; col < n; ++col)
    for (std::size_t h = 0; h < p.rows(); ++h) first_total += p.weight()(h, col);
  EXPECT_NEAR(in_first / first_total, 1.0, 1e-12);
  // The lowest level also receives half of the middle interval.
  EXPECT_NEAR(in_first / row, 2.0 / 3.0, 1e-12);
}

TEST(Continuous, ColumnRatesMatchConfidence) {
  for (std::size_t k : {2, 3, 5}) {
    const auto p = build_continuous(continuous_spec(k, 16));
    const auto m = marginal_rates(p);
    for (std::size_t b = 0; b < p.cols(); ++b) EXPECT_NEAR(*m.by_b[b], p.b_values()[b], 1e-9);
    EXPECT_TRUE(non_decreasing(m.by_h));
  }
}

TEST(Continuous, SubBinRatesAreClosedFormMeans) {
  const auto p = build_continuous(continuous_spec(2, 4));
  const double c = 0.5;
  // Column 0 covers x in [0, 1/12]; f-(x) = c (x + 0.01) / 1.02.
  const double expect = c * (1.0 / 24.0 + 0.01) / 1.02;
  EXPECT_NEAR(*p.rate()(0, 0), expect, 1e-15);
}

TEST(Continuous, RejectsBadMaps) {
  auto s = continuous_spec(2, 4);
  s.f_minus = AffineMap{0.1, -0.05};
  EXPECT_THROW(build_continuous(s), InvalidArgument);
  s.f_minus = AffineMap{0.2, 0.4};  // reaches 0.6 > c
  EXPECT_THROW(build_continuous(s), InvalidArgument);
  s.f_minus.reset();
  s.f_plus = AffineMap{0.4, 0.5};  // starts below c
  EXPECT_THROW(build_continuous(s), InvalidArgument);
  s.f_plus = AffineMap{0.6, 0.5};  // exceeds 1
  EXPECT_THROW(build_continuous(s), InvalidArgument);
}

TEST(Continuous, MonotonePolicyIsSuboptimal) {
  const auto p = build_continuous(continuous_spec(3, 4));
  EXPECT_GT(optimal_policy(p).utility - optimal_monotone_policy(p).utility, 1e-6);
}

TEST(RandomAligned, ZeroAlphaIsMonotoneAndMonotonePolicyIsOptimal) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = build_random_aligned(0.0, 3, 4, seed, symmetric_utility<double>());
    EXPECT_TRUE(oracle::jointly_non_decreasing(p.rate()));
    EXPECT_NEAR(optimal_policy(p).utility, optimal_monotone_policy(p).utility, 1e-12);
  }
}

TEST(RandomAligned, AlphaOneAcceptsFirstDraw) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::size_t attempts = 0;
    build_random_aligned(1.0, 4, 4, seed, symmetric_utility<double>(), &attempts);
    EXPECT_EQ(attempts, 1u);
  }
}

TEST(RandomAligned, SeedDeterminesTable) {
  const auto a = build_random_aligned(0.1, 4, 5, 42, symmetric_utility<double>());
  const auto b = build_random_aligned(0.1, 4, 5, 42, symmetric_utility<double>());
  const auto c = build_random_aligned(0.1, 4, 5, 43, symmetric_utility<double>());
  EXPECT_EQ(a.weight(), b.weight());
  EXPECT_EQ(a.rate(), b.rate());
  EXPECT_NE(a.rate(), c.rate());
}

TEST(RandomAligned, PassesItsAuditWithPositiveWeights) {
  for (double alpha : {0.0, 0.05, 0.1, 0.25}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = build_random_aligned(alpha, 3, 3, seed, symmetric_utility<double>());
      EXPECT_TRUE(check_alignment(view_of(p), alpha).passed);
      EXPECT_EQ(p.support().size(), 9u);
      EXPECT_NEAR(weight_sum(p), 1.0, 1e-12);
    }
  }
}

TEST(RandomAligned, RejectsBadAlpha) {
  EXPECT_THROW(build_random_aligned(1.5, 2, 2, 0, symmetric_utility<double>()), InvalidArgument);
  EXPECT_THROW(build_random_aligned(-0.1, 2, 2, 0, symmetric_utility<double>()), InvalidArgument);
}

TEST(ScoreModel, MeanRateMatchesQuadrature) {
  const auto model = ScoreModel::misaligned();
  for (std::size_t h = 0; h < model.strata(); ++h) {
    double acc = 0.0;
    const int steps = 10000;
    for (int i = 0; i < steps; ++i) acc += model.rate(h, 0.2 + 0.5 * (i + 0.5) / steps);
    EXPECT_NEAR(model.mean_rate(h, 0.2, 0.7), acc / steps, 1e-9);
  }
}

TEST(ScoreModel, RejectsRatesOutsideUnitInterval) {
  EXPECT_THROW(ScoreModel({{0.5, 1.0, {0.5, 0.8}}}), InvalidArgument);
  EXPECT_THROW(ScoreModel({{0.5, 0.5, {0.5}}}), InvalidArgument);
}
