#pragma once

// Synthetic decision processes: the counterexample families in which a
// perfectly calibrated classifier and a monotone human still leave every
// monotone policy suboptimal, plus random generators for property tests.

#include "alignedcal/core.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/random.hpp"
#include "alignedcal/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace alignedcal {

/// x -> intercept + slope * x on [0,1].
struct AffineMap {
  double intercept = 0.0;
  double slope = 1.0;

  double operator()(double x) const { return intercept + slope * x; }
  /// Mean over [lo, hi]; exact for affine maps.
  double mean(double lo, double hi) const { return (*this)(0.5 * (lo + hi)); }
};

enum class ConstructionKind { Small3x3, Grid, Continuous };

inline const char* to_string(ConstructionKind k) {
  switch (k) {
    case ConstructionKind::Small3x3: return "small3x3";
    case ConstructionKind::Grid: return "grid";
    case ConstructionKind::Continuous: return "continuous";
  }
  return "unknown";
}

struct ConstructionSpec {
  ConstructionKind kind = ConstructionKind::Small3x3;
  std::size_t k = 3;
  std::size_t m = 4;
  std::size_t sub_bins = 16;  // continuous kind: b levels per X interval
  double p_minus = 0.2;
  double p_plus = 0.8;
  Utility<double> utility = symmetric_utility<double>();
  std::uint64_t seed = 0;
  std::optional<AffineMap> f_minus;
  std::optional<AffineMap> f_plus;
};

namespace detail {

inline Utility<Rational> exact_utility(const Utility<double>& u) {
  return Utility<Rational>{rational_from_double(u.u11), rational_from_double(u.u10), rational_from_double(u.u00),
                           rational_from_double(u.u01)};
}

template <typename T>
void check_straddles_threshold(const T& p_minus, const T& p_plus, const Utility<T>& u) {
  const T c = decision_threshold(u);
  if (!(T(0) <= p_minus && p_minus < c && c < p_plus && p_plus <= T(1))) {
    throw InvalidArgument(detail::concat("need 0 <= p_minus < c < p_plus <= 1, got p_minus=", to_double(p_minus),
                                         " c=", to_double(c), " p_plus=", to_double(p_plus)));
  }
}

template <typename T>
std::vector<T> evenly_spaced_levels(std::size_t k) {
  std::vector<T> out;
  for (std::size_t i = 1; i <= k; ++i) out.push_back(T(i) / T(k + 1));
  return out;
}

}  // namespace detail

/// Three h levels, three b levels, weight 1/6 on the cells i >= j.
inline DecisionProcess<Rational> build_small_example(const ConstructionSpec& spec) {
  if (spec.kind != ConstructionKind::Small3x3) throw InvalidArgument("spec kind is not small3x3");
  const Utility<Rational> u = detail::exact_utility(spec.utility);
  const Rational lo = rational_from_double(spec.p_minus), hi = rational_from_double(spec.p_plus);
  detail::check_straddles_threshold(lo, hi, u);

  Grid<Rational> weight(3, 3, Rational(0));
  Grid<std::optional<Rational>> rate(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j <= i; ++j) weight(i, j) = Rational(1, 6);
  // Zero-based (h, b).
  rate(0, 0) = lo;
  rate(1, 0) = lo;
  rate(1, 1) = hi;
  rate(2, 0) = hi;
  rate(2, 1) = lo;
  rate(2, 2) = hi;
  std::vector<Rational> b_values{Rational(2, 3) * lo + Rational(1, 3) * hi, Rational(1, 2) * lo + Rational(1, 2) * hi,
                                 hi};
  return DecisionProcess<Rational>(detail::evenly_spaced_levels<Rational>(3), std::move(b_values), std::move(weight),
                                   std::move(rate), u);
}

/// k h levels, m > k b levels with P(B=b_j) = 1/m.
inline DecisionProcess<Rational> build_grid(const ConstructionSpec& spec) {
  if (spec.kind != ConstructionKind::Grid) throw InvalidArgument("spec kind is not grid");
  const std::size_t k = spec.k, m = spec.m;
  if (k < 2 || m <= k) throw InvalidArgument(detail::concat("grid construction needs m > k >= 2, got k=", k, " m=", m));
  const Utility<Rational> u = detail::exact_utility(spec.utility);
  const Rational lo = rational_from_double(spec.p_minus), hi = rational_from_double(spec.p_plus);
  detail::check_straddles_threshold(lo, hi, u);

  const Rational mm(static_cast<long>(m));
  Grid<Rational> weight(k, m, Rational(0));
  Grid<std::optional<Rational>> rate(k, m);
  std::vector<Rational> b_values;
  // One-based i, j as in the construction's case split.
  for (std::size_t j = 1; j <= m; ++j) {
    const Rational stay = Rational(static_cast<long>(m - j + 1)) / mm;  // P(H=h_i | b_j) on the "P-" cell
    const Rational move = Rational(static_cast<long>(j - 1)) / mm;      // ... on the "P+" cell
    b_values.push_back(stay * lo + move * hi);
    auto set = [&](std::size_t i, const Rational& cond, const Rational& r) {
      if (cond == 0) return;
      weight(i - 1, j - 1) += cond / mm;
      rate(i - 1, j - 1) = r;
    };
    if (j <= k) {
      set(j, stay, lo);
      if (j >= 2) set(j - 1, move, hi);
    } else {
      set(1, stay, lo);
      set(k, move, hi);
    }
  }
  return DecisionProcess<Rational>(detail::evenly_spaced_levels<Rational>(k), std::move(b_values), std::move(weight),
                                   std::move(rate), u);
}

/// Default f-(x) = c (x + 0.01) / 1.02, strictly inside [0, c).
inline AffineMap default_f_minus(double c) { return AffineMap{c * 0.01 / 1.02, c / 1.02}; }
/// Default f+(x) = c + (1 - c)(x + 0.01) / 1.02, strictly inside (c, 1].
inline AffineMap default_f_plus(double c) { return AffineMap{c + (1.0 - c) * 0.01 / 1.02, (1.0 - c) / 1.02}; }

/// X ~ Uniform[0,1] split into k+1 equal-mass intervals, each cut into
/// `sub_bins` b levels. Interval I_1 maps to h_1, I_{k+1} to h_k, every other
/// I_j to h_{j-1} and h_j with probability 1/2 each.
inline DecisionProcess<double> build_continuous(const ConstructionSpec& spec) {
  if (spec.kind != ConstructionKind::Continuous) throw InvalidArgument("spec kind is not continuous");
  const std::size_t k = spec.k, n = spec.sub_bins;
  if (k < 2) throw InvalidArgument("continuous construction needs k >= 2");
  if (n < 1) throw InvalidArgument("continuous construction needs at least one sub-bin");
  const double c = decision_threshold(spec.utility);
  const AffineMap fm = spec.f_minus.value_or(default_f_minus(c));
  const AffineMap fp = spec.f_plus.value_or(default_f_plus(c));
  if (!(fm.slope > 0.0) || !(fp.slope > 0.0)) throw InvalidArgument("f- and f+ must be strictly increasing");
  if (!(fm(0.0) >= 0.0 && fm(1.0) < c)) throw InvalidArgument("f- must map [0,1] into [0,c)");
  if (!(fp(0.0) > c && fp(1.0) <= 1.0)) throw InvalidArgument("f+ must map [0,1] into (c,1]");

  const std::size_t intervals = k + 1;
  const std::size_t cols = intervals * n;
  const double cell_mass = 1.0 / static_cast<double>(cols);
  Grid<double> weight(k, cols, 0.0);
  Grid<std::optional<double>> rate(k, cols);
  std::vector<double> b_values(cols);
  for (std::size_t j = 1; j <= intervals; ++j) {
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t col = (j - 1) * n + s;
      const double lo = (static_cast<double>(col)) / static_cast<double>(cols);
      const double hi = (static_cast<double>(col + 1)) / static_cast<double>(cols);
      const double minus = fm.mean(lo, hi), plus = fp.mean(lo, hi);
      if (j == 1) {
        weight(0, col) = cell_mass;
        rate(0, col) = minus;
        b_values[col] = minus;
      } else if (j == intervals) {
        weight(k - 1, col) = cell_mass;
        rate(k - 1, col) = plus;
        b_values[col] = plus;
      } else {
        weight(j - 2, col) = 0.5 * cell_mass;  // h_{j-1}
        rate(j - 2, col) = plus;
        weight(j - 1, col) = 0.5 * cell_mass;  // h_j
        rate(j - 1, col) = minus;
        b_values[col] = 0.5 * (minus + plus);
      }
    }
  }
  return DecisionProcess<double>(detail::evenly_spaced_levels<double>(k), std::move(b_values), std::move(weight),
                                 std::move(rate), spec.utility);
}

/// Maximum number of draws build_random_aligned makes before giving up.
inline constexpr std::size_t kRandomAlignedAttempts = 10'000;

/// Random process with strictly positive weights whose rate table passes the
/// alignment audit at `alpha`. Rates are a monotone base plus bounded noise,
/// with occasional larger outliers that must be exempted by the audit.
/// alpha >= 1 draws rates independently (the audit is vacuous there).
inline DecisionProcess<double> build_random_aligned(double alpha, std::size_t rows, std::size_t cols,
                                                    std::uint64_t seed, const Utility<double>& utility,
                                                    std::size_t* attempts = nullptr) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
  if (rows == 0 || cols == 0) throw InvalidArgument("grid must have at least one cell");
  utility.validate();
  Rng rng(substream_seed(seed, "random-aligned"));
  std::vector<double> b_values;
  for (std::size_t j = 0; j < cols; ++j) b_values.push_back((static_cast<double>(j) + 0.5) / static_cast<double>(cols));
  for (std::size_t attempt = 0; attempt < kRandomAlignedAttempts; ++attempt) {
    Grid<double> weight(rows, cols, 0.0);
    double total = 0.0;
    for (std::size_t h = 0; h < rows; ++h)
      for (std::size_t b = 0; b < cols; ++b) total += weight(h, b) = rng.uniform(0.05, 1.0);
    for (std::size_t h = 0; h < rows; ++h)
      for (std::size_t b = 0; b < cols; ++b) weight(h, b) /= total;

    Grid<std::optional<double>> rate(rows, cols);
    if (alpha >= 1.0) {
      for (std::size_t h = 0; h < rows; ++h)
        for (std::size_t b = 0; b < cols; ++b) rate(h, b) = rng.uniform();
    } else {
      std::vector<double> row_base(rows), col_base(cols);
      for (auto& v : row_base) v = rng.uniform();
      for (auto& v : col_base) v = rng.uniform();
      std::sort(row_base.begin(), row_base.end());
      std::sort(col_base.begin(), col_base.end());
      const double outlier_rate = rng.uniform(0.0, 0.3);
      for (std::size_t h = 0; h < rows; ++h) {
        for (std::size_t b = 0; b < cols; ++b) {
          double r = 0.5 * (row_base[h] + col_base[b]);
          r += rng.uniform(-0.5 * alpha, 0.5 * alpha);
          if (rng.bernoulli(outlier_rate)) r += rng.uniform(-alpha, alpha);
          rate(h, b) = std::clamp(r, 0.0, 1.0);
        }
      }
    }
    std::vector<double> h_values;
    for (std::size_t h = 0; h < rows; ++h) h_values.push_back((static_cast<double>(h) + 1.0) / static_cast<double>(rows + 1));
    DecisionProcess<double> proc(std::move(h_values), b_values, std::move(weight), std::move(rate), utility);
    if (attempts) *attempts = attempt + 1;
    if (check_alignment(view_of(proc), alpha).passed) return proc;
  }
  throw InvalidArgument(detail::concat("no ", alpha, "-aligned process found in ", kRandomAlignedAttempts, " attempts"));
}

/// Continuous score model: H takes finitely many levels, B | H=h is
/// Uniform[0,1], and P(Y=1 | H=h, B=b) is a polynomial in b.
class ScoreModel {
 public:
  struct Stratum {
    double h_value = 0.0;
    double mass = 0.0;
    std::vector<double> rate_coefficients;  // c0 + c1 b + c2 b^2 + ...
  };

  explicit ScoreModel(std::vector<Stratum> strata) : strata_(std::move(strata)) {
    if (strata_.empty()) throw InvalidArgument("score model needs at least one stratum");
    double total = 0.0;
    for (std::size_t h = 0; h < strata_.size(); ++h) {
      if (!(strata_[h].mass > 0.0)) throw InvalidArgument("stratum mass must be positive");
      if (h > 0 && !(strata_[h - 1].h_value < strata_[h].h_value)) throw InvalidArgument("h values must increase");
      total += strata_[h].mass;
      for (int i = 0; i <= 1000; ++i) {
        const double r = rate(h, i / 1000.0);
        if (r < 0.0 || r > 1.0) throw InvalidArgument("stratum rate leaves [0,1]");
      }
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("stratum masses must sum to 1");
  }

  /// The default misaligned model: one stratum's rate falls as b rises.
  static ScoreModel misaligned() {
    return ScoreModel({{0.25, 1.0 / 3.0, {0.15, 0.7}},
                       {0.50, 1.0 / 3.0, {0.30, 0.2, 0.4}},
                       {0.75, 1.0 / 3.0, {0.90, -0.6}}});
  }

  std::size_t strata() const { return strata_.size(); }
  const Stratum& stratum(std::size_t h) const { return strata_[h]; }

  double rate(std::size_t h, double b) const {
    double acc = 0.0, power = 1.0;
    for (double coef : strata_[h].rate_coefficients) {
      acc += coef * power;
      power *= b;
    }
    return acc;
  }

  /// Mean rate over b in [lo, hi] (B uniform within the stratum).
  double mean_rate(std::size_t h, double lo, double hi) const {
    if (hi <= lo) return rate(h, lo);
    double acc = 0.0;
    double p_hi = hi, p_lo = lo;
    for (std::size_t i = 0; i < strata_[h].rate_coefficients.size(); ++i) {
      acc += strata_[h].rate_coefficients[i] * (p_hi - p_lo) / static_cast<double>(i + 1);
      p_hi *= hi;
      p_lo *= lo;
    }
    return acc / (hi - lo);
  }

  struct Draw {
    std::size_t h;
    double b;
    int y;
  };

  Draw draw(Rng& rng) const {
    double u = rng.uniform();
    std::size_t h = 0;
    while (h + 1 < strata_.size() && u >= strata_[h].mass) {
      u -= strata_[h].mass;
      ++h;
    }
    const double b = rng.uniform();
    return {h, b, rng.bernoulli(rate(h, b)) ? 1 : 0};
  }

  std::vector<Draw> sample(std::size_t n, std::uint64_t seed) const {
    Rng rng(substream_seed(seed, "score-model"));
    std::vector<Draw> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng));
    return out;
  }

 private:
  std::vector<Stratum> strata_;
};

}  // namespace alignedcal
