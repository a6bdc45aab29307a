#pragma once

// Tabular decision processes over (H, B, Y), utilities and exact expected
// utility evaluation. Everything here is templated on the scalar type so the
// analytic constructions can run in exact rational arithmetic while data
// derived processes use double.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace alignedcal {

using Rational = boost::multiprecision::cpp_rational;

/// Thrown when an input violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a process/policy pair is structurally inconsistent
/// (shape mismatch, missing rate on a positive-weight cell).
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename T>
struct ScalarTraits {
  static constexpr bool exact = false;
  // Exactness assertions on floating data.
  static T tolerance() { return T(1e-12); }
  static double to_double(const T& v) { return static_cast<double>(v); }
};

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static Rational tolerance() { return Rational(0); }
  static double to_double(const Rational& v) { return v.convert_to<double>(); }
};

template <typename T>
double to_double(const T& v) {
  return ScalarTraits<T>::to_double(v);
}

/// Dense row-major matrix indexed by (h, b).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, const T& init = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, init) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t h, std::size_t b) { return data_[h * cols_ + b]; }
  const T& operator()(std::size_t h, std::size_t b) const {
    return data_[h * cols_ + b];
  }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

struct Cell {
  std::size_t h = 0;
  std::size_t b = 0;

  auto operator<=>(const Cell&) const = default;

  /// Product order on the (h, b) index lattice.
  bool precedes(const Cell& other) const { return h <= other.h && b <= other.b; }
};

/// Payoffs u(t, y) for decision t and outcome y.
template <typename T>
struct Utility {
  T u11{1};
  T u10{0};
  T u00{1};
  T u01{0};

  bool valid() const { return u11 > u10 && u11 > u01 && u00 > u10 && u00 >= u01; }

  void validate() const {
    if (!valid()) {
      throw InvalidArgument(detail::concat(
          "utility (", u11, ",", u10, ",", u00, ",", u01,
          ") must satisfy u11>u10, u11>u01, u00>u10, u00>=u01"));
    }
  }

  /// Expected payoff of deciding t=1 when P(Y=1)=rate.
  T accept_value(const T& rate) const { return rate * u11 + (T(1) - rate) * u10; }
  /// Expected payoff of deciding t=0 when P(Y=1)=rate.
  T reject_value(const T& rate) const { return rate * u01 + (T(1) - rate) * u00; }

  bool operator==(const Utility&) const = default;
};

/// Positive-rate level above which deciding T=1 strictly beats T=0.
template <typename T>
T decision_threshold(const Utility<T>& u) {
  u.validate();
  return (u.u00 - u.u10) / (u.u11 - u.u10 + u.u00 - u.u01);
}

template <typename T>
Utility<T> symmetric_utility() {
  return Utility<T>{T(1), T(0), T(1), T(0)};
}

/// Joint law of (H, B) on a finite grid together with P(Y=1 | H, B).
/// Cells with zero weight carry no rate.
template <typename T>
class DecisionProcess {
 public:
  using Scalar = T;

  DecisionProcess() = default;

  /// Validates every invariant; throws InvalidArgument on violation.
  DecisionProcess(std::vector<T> h_values, std::vector<T> b_values, Grid<T> weight,
                  Grid<std::optional<T>> rate, Utility<T> utility)
      : h_values_(std::move(h_values)),
        b_values_(std::move(b_values)),
        weight_(std::move(weight)),
        rate_(std::move(rate)),
        utility_(std::move(utility)) {
    validate();
  }

  const std::vector<T>& h_values() const { return h_values_; }
  const std::vector<T>& b_values() const { return b_values_; }
  const Grid<T>& weight() const { return weight_; }
  const Grid<std::optional<T>>& rate() const { return rate_; }
  const Utility<T>& utility() const { return utility_; }

  std::size_t rows() const { return h_values_.size(); }
  std::size_t cols() const { return b_values_.size(); }

  bool in_support(const Cell& c) const { return weight_(c.h, c.b) > T(0); }

  const T& weight(const Cell& c) const { return weight_(c.h, c.b); }

  const T& rate(const Cell& c) const {
    const auto& r = rate_(c.h, c.b);
    if (!r) {
      throw StructuralError(
          detail::concat("cell (", c.h, ",", c.b, ") has no rate"));
    }
    return *r;
  }

  /// Support cells in lexicographic (h, b) order.
  std::vector<Cell> support() const {
    std::vector<Cell> cells;
    for (std::size_t h = 0; h < rows(); ++h) {
      for (std::size_t b = 0; b < cols(); ++b) {
        if (weight_(h, b) > T(0)) cells.push_back({h, b});
      }
    }
    return cells;
  }

  DecisionProcess with_utility(Utility<T> u) const {
    return DecisionProcess(h_values_, b_values_, weight_, rate_, std::move(u));
  }

  T total_positive_rate() const {
    T acc(0);
    for (const Cell& c : support()) acc += weight(c) * rate(c);
    return acc;
  }

 private:
  void validate() const {
    utility_.validate();
    const std::size_t k = h_values_.size();
    const std::size_t m = b_values_.size();
    if (k == 0 || m == 0) throw InvalidArgument("process needs at least one h and one b level");
    if (weight_.rows() != k || weight_.cols() != m || rate_.rows() != k || rate_.cols() != m) {
      throw InvalidArgument("weight/rate shape does not match h_values x b_values");
    }
    for (std::size_t i = 1; i < k; ++i) {
      if (!(h_values_[i - 1] < h_values_[i])) throw InvalidArgument("h_values must be strictly increasing");
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (b_values_[j] < T(0) || b_values_[j] > T(1)) throw InvalidArgument("b_values must lie in [0,1]");
      if (j > 0 && !(b_values_[j - 1] < b_values_[j])) {
        throw InvalidArgument("b_values must be strictly increasing");
      }
    }
    T total(0);
    for (std::size_t h = 0; h < k; ++h) {
      for (std::size_t b = 0; b < m; ++b) {
        const T& w = weight_(h, b);
        if (w < T(0)) throw InvalidArgument("weights must be non-negative");
        total += w;
        const auto& r = rate_(h, b);
        if (w > T(0)) {
          if (!r) {
            throw InvalidArgument(detail::concat("positive-weight cell (", h, ",", b, ") has no rate"));
          }
          if (*r < T(0) || *r > T(1)) throw InvalidArgument("rates must lie in [0,1]");
        }
      }
    }
    T diff = total - T(1);
    if (diff < T(0)) diff = -diff;
    if (diff > ScalarTraits<T>::tolerance()) {
      throw InvalidArgument(detail::concat("weights sum to ", to_double(total), ", expected 1"));
    }
  }

  std::vector<T> h_values_;
  std::vector<T> b_values_;
  Grid<T> weight_;
  Grid<std::optional<T>> rate_;
  Utility<T> utility_;
};

/// Per-cell probability of deciding T=1.
template <typename T>
struct CellPolicy {
  Grid<T> p;

  CellPolicy() = default;
  explicit CellPolicy(Grid<T> probs) : p(std::move(probs)) {
    for (std::size_t h = 0; h < p.rows(); ++h)
      for (std::size_t b = 0; b < p.cols(); ++b)
        if (p(h, b) < T(0) || p(h, b) > T(1)) throw InvalidArgument("policy entries must lie in [0,1]");
  }

  static CellPolicy constant(std::size_t rows, std::size_t cols, const T& value) {
    return CellPolicy(Grid<T>(rows, cols, value));
  }

  const T& operator()(const Cell& c) const { return p(c.h, c.b); }
  T& operator()(const Cell& c) { return p(c.h, c.b); }

  bool operator==(const CellPolicy&) const = default;
};

template <typename T>
T expected_utility(const DecisionProcess<T>& proc, const CellPolicy<T>& pol) {
  if (pol.p.rows() != proc.rows() || pol.p.cols() != proc.cols()) {
    throw StructuralError("policy shape does not match process");
  }
  const Utility<T>& u = proc.utility();
  T total(0);
  for (std::size_t h = 0; h < proc.rows(); ++h) {
    for (std::size_t b = 0; b < proc.cols(); ++b) {
      const T& w = proc.weight()(h, b);
      if (!(w > T(0))) continue;
      const T& r = proc.rate({h, b});
      const T& q = pol.p(h, b);
      total += w * (q * u.accept_value(r) + (T(1) - q) * u.reject_value(r));
    }
  }
  return total;
}

template <typename T>
struct MarginalRates {
  std::vector<std::optional<T>> by_h;
  std::vector<std::optional<T>> by_b;
};

/// Weight-averaged P(Y=1 | H=h) and P(Y=1 | B=b). Levels with zero mass
/// are reported as empty.
template <typename T>
MarginalRates<T> marginal_rates(const DecisionProcess<T>& proc) {
  std::vector<T> mass_h(proc.rows(), T(0)), pos_h(proc.rows(), T(0));
  std::vector<T> mass_b(proc.cols(), T(0)), pos_b(proc.cols(), T(0));
  for (const Cell& c : proc.support()) {
    const T& w = proc.weight(c);
    const T wr = w * proc.rate(c);
    mass_h[c.h] += w;
    pos_h[c.h] += wr;
    mass_b[c.b] += w;
    pos_b[c.b] += wr;
  }
  MarginalRates<T> out;
  out.by_h.resize(proc.rows());
  out.by_b.resize(proc.cols());
  for (std::size_t h = 0; h < proc.rows(); ++h)
    if (mass_h[h] > T(0)) out.by_h[h] = pos_h[h] / mass_h[h];
  for (std::size_t b = 0; b < proc.cols(); ++b)
    if (mass_b[b] > T(0)) out.by_b[b] = pos_b[b] / mass_b[b];
  return out;
}

/// True when the defined entries are non-decreasing.
template <typename T>
bool non_decreasing(const std::vector<std::optional<T>>& values) {
  std::optional<T> prev;
  for (const auto& v : values) {
    if (!v) continue;
    if (prev && *v < *prev) return false;
    prev = v;
  }
  return true;
}

template <typename To, typename From>
DecisionProcess<To> convert_process(const DecisionProcess<From>& proc) {
  auto conv = [](const From& v) -> To {
    if constexpr (std::is_same_v<From, Rational>) {
      return static_cast<To>(v.template convert_to<double>());
    } else {
      return static_cast<To>(v);
    }
  };
  std::vector<To> hs, bs;
  for (const auto& v : proc.h_values()) hs.push_back(conv(v));
  for (const auto& v : proc.b_values()) bs.push_back(conv(v));
  Grid<To> w(proc.rows(), proc.cols(), To(0));
  Grid<std::optional<To>> r(proc.rows(), proc.cols());
  for (std::size_t h = 0; h < proc.rows(); ++h) {
    for (std::size_t b = 0; b < proc.cols(); ++b) {
      w(h, b) = conv(proc.weight()(h, b));
      if (proc.rate()(h, b)) r(h, b) = conv(*proc.rate()(h, b));
    }
  }
  const auto& u = proc.utility();
  return DecisionProcess<To>(std::move(hs), std::move(bs), std::move(w), std::move(r),
                             Utility<To>{conv(u.u11), conv(u.u10), conv(u.u00), conv(u.u01)});
}

}  // namespace alignedcal
