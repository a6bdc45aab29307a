#pragma once

// Brute-force reference implementations used only by the tests. They share
// no code with the library beyond the value types.

#include "alignedcal/core.hpp"
#include "alignedcal/random.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace oracle {

using alignedcal::Cell;
using alignedcal::DecisionProcess;
using alignedcal::Grid;
using alignedcal::Rational;
using alignedcal::Utility;

template <typename T>
std::vector<Cell> support(const DecisionProcess<T>& p) {
  std::vector<Cell> out;
  for (std::size_t h = 0; h < p.rows(); ++h)
    for (std::size_t b = 0; b < p.cols(); ++b)
      if (p.weight()(h, b) > T(0)) out.push_back({h, b});
  return out;
}

/// Direct sum of weight * E[u(t, Y)] for a 0/1 decision per support cell.
template <typename T>
T utility_of_decisions(const DecisionProcess<T>& p, const std::vector<Cell>& cells, std::uint64_t accept_mask) {
  const Utility<T>& u = p.utility();
  T total(0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const T w = p.weight()(cells[i].h, cells[i].b);
    const T r = *p.rate()(cells[i].h, cells[i].b);
    if (accept_mask >> i & 1U) {
      total += w * (r * u.u11 + (T(1) - r) * u.u10);
    } else {
      total += w * (r * u.u01 + (T(1) - r) * u.u00);
    }
  }
  return total;
}

/// Best utility over every deterministic per-cell policy.
template <typename T>
T best_deterministic(const DecisionProcess<T>& p) {
  const auto cells = support(p);
  T best = utility_of_decisions(p, cells, 0);
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << cells.size()); ++mask) {
    const T v = utility_of_decisions(p, cells, mask);
    if (v > best) best = v;
  }
  return best;
}

inline bool comparable(const Cell& a, const Cell& b) { return a.h <= b.h && a.b <= b.b; }

/// Best utility over deterministic policies whose accepted set is closed
/// upwards in the product order on the support.
template <typename T>
T best_upset(const DecisionProcess<T>& p) {
  const auto cells = support(p);
  std::optional<T> best;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cells.size()); ++mask) {
    bool closed = true;
    for (std::size_t i = 0; i < cells.size() && closed; ++i) {
      if (!(mask >> i & 1U)) continue;
      for (std::size_t j = 0; j < cells.size(); ++j)
        if (comparable(cells[i], cells[j]) && !(mask >> j & 1U)) closed = false;
    }
    if (!closed) continue;
    const T v = utility_of_decisions(p, cells, mask);
    if (!best || v > *best) best = v;
  }
  return *best;
}

/// Every comparable pair of present cells is non-decreasing.
template <typename T>
bool jointly_non_decreasing(const Grid<std::optional<T>>& rate) {
  for (std::size_t h1 = 0; h1 < rate.rows(); ++h1)
    for (std::size_t b1 = 0; b1 < rate.cols(); ++b1)
      for (std::size_t h2 = h1; h2 < rate.rows(); ++h2)
        for (std::size_t b2 = b1; b2 < rate.cols(); ++b2)
          if (rate(h1, b1) && rate(h2, b2) && *rate(h1, b1) > *rate(h2, b2)) return false;
  return true;
}

/// Policy entries non-decreasing over comparable support pairs.
template <typename T>
bool monotone_on_support(const DecisionProcess<T>& p, const Grid<T>& pol) {
  const auto cells = support(p);
  for (const Cell& a : cells)
    for (const Cell& b : cells)
      if (comparable(a, b) && pol(a.h, a.b) > pol(b.h, b.b)) return false;
  return true;
}

/// Random exact process with small denominators; roughly `fill` of the
/// cells carry mass.
inline DecisionProcess<Rational> random_rational_process(alignedcal::Rng& rng, std::size_t rows, std::size_t cols,
                                                         double fill, const Utility<Rational>& u) {
  Grid<Rational> w(rows, cols, Rational(0));
  Grid<std::optional<Rational>> r(rows, cols);
  Rational total(0);
  bool any = false;
  for (std::size_t h = 0; h < rows; ++h)
    for (std::size_t b = 0; b < cols; ++b)
      if (rng.uniform() < fill) {
        w(h, b) = Rational(1 + static_cast<int>(rng.below(9)));
        r(h, b) = Rational(static_cast<int>(rng.below(21)), 20);
        total += w(h, b);
        any = true;
      }
  if (!any) {
    w(0, 0) = Rational(1);
    r(0, 0) = Rational(1, 2);
    total = 1;
  }
  for (std::size_t h = 0; h < rows; ++h)
    for (std::size_t b = 0; b < cols; ++b) w(h, b) /= total;
  std::vector<Rational> hs, bs;
  for (std::size_t h = 0; h < rows; ++h) hs.push_back(Rational(static_cast<int>(h) + 1, static_cast<int>(rows) + 1));
  for (std::size_t b = 0; b < cols; ++b) bs.push_back(Rational(2 * static_cast<int>(b) + 1, 2 * static_cast<int>(cols)));
  return DecisionProcess<Rational>(hs, bs, w, r, u);
}

/// Random utility satisfying u11 > u10, u11 > u01, u00 > u10, u00 >= u01.
inline Utility<double> random_utility(alignedcal::Rng& rng) {
  const double u10 = rng.uniform(-1.0, 0.0);
  const double u01 = rng.uniform(-1.0, 0.5);
  const double u11 = std::max(u10, u01) + rng.uniform(0.1, 1.0);
  const double u00 = std::max(u10 + 0.1, u01) + rng.uniform(0.0, 1.0);
  return {u11, u10, u00, u01};
}

inline Utility<Rational> random_rational_utility(alignedcal::Rng& rng) {
  const Rational u10(-static_cast<int>(rng.below(5)), 4);
  const Rational u01(-static_cast<int>(rng.below(5)), 4);
  const Rational top = u10 > u01 ? u10 : u01;
  const Rational u11 = top + Rational(1 + static_cast<int>(rng.below(4)), 4);
  const Rational low = u10 + Rational(1, 4) > u01 ? u10 + Rational(1, 4) : u01;
  const Rational u00 = low + Rational(static_cast<int>(rng.below(4)), 4);
  return {u11, u10, u00, u01};
}

}  // namespace oracle
