#pragma once

// Calibration / alignment audits and the binned misalignment and
// miscalibration metrics.

#include "alignedcal/core.hpp"
#include "alignedcal/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace alignedcal {

/// Uniform width-lambda partition of [0,1]. Bins are half-open except the
/// last, which is closed at 1.
class LambdaBinning {
 public:
  LambdaBinning() = default;
  explicit LambdaBinning(std::size_t bins) : bins_(bins) {
    if (bins == 0) throw InvalidArgument("binning needs at least one bin");
  }

  /// ceil(1/lambda) bins; when 1/lambda is not integral the bins are
  /// narrower than lambda.
  static LambdaBinning from_lambda(double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in (0,1]");
    return LambdaBinning(static_cast<std::size_t>(std::ceil(1.0 / lambda - 1e-9)));
  }

  std::size_t size() const { return bins_; }
  double width() const { return 1.0 / static_cast<double>(bins_); }
  double lower(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(bins_); }
  double upper(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(bins_); }
  double center(std::size_t i) const { return (static_cast<double>(i) + 0.5) / static_cast<double>(bins_); }

  std::size_t index(double b) const {
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument(detail::concat("confidence ", b, " outside [0,1]"));
    const auto i = static_cast<std::size_t>(std::floor(b * static_cast<double>(bins_)));
    return std::min(i, bins_ - 1);
  }

  bool matches(double lambda) const {
    return std::abs(width() - 1.0 / std::ceil(1.0 / lambda - 1e-9)) <= 1e-12;
  }

 private:
  std::size_t bins_ = 1;
};

/// Binned (h, b) grid of empirical counts.
struct CellTable {
  std::vector<double> h_values;  // representative value per h bin
  LambdaBinning b_bins;
  Grid<std::size_t> count;
  Grid<std::size_t> positives;
  Grid<double> sum_b;
  std::size_t min_count = 30;

  std::size_t rows() const { return h_values.size(); }
  std::size_t cols() const { return b_bins.size(); }

  std::optional<double> pos_rate(std::size_t h, std::size_t b) const {
    if (count(h, b) == 0) return std::nullopt;
    return static_cast<double>(positives(h, b)) / static_cast<double>(count(h, b));
  }
  std::optional<double> mean_b(std::size_t h, std::size_t b) const {
    if (count(h, b) == 0) return std::nullopt;
    return sum_b(h, b) / static_cast<double>(count(h, b));
  }
  std::size_t row_count(std::size_t h) const {
    std::size_t n = 0;
    for (std::size_t b = 0; b < cols(); ++b) n += count(h, b);
    return n;
  }
  std::size_t total_count() const {
    std::size_t n = 0;
    for (std::size_t h = 0; h < rows(); ++h) n += row_count(h);
    return n;
  }

  /// Bins samples given as (h index, confidence, label).
  static CellTable from_samples(std::vector<double> h_values, LambdaBinning bins,
                                std::span<const std::size_t> h_index, std::span<const double> b,
                                std::span<const int> y, std::size_t min_count = 30) {
    if (h_index.size() != b.size() || b.size() != y.size()) {
      throw InvalidArgument("sample columns have different lengths");
    }
    CellTable t;
    t.h_values = std::move(h_values);
    t.b_bins = bins;
    t.min_count = min_count;
    t.count = Grid<std::size_t>(t.rows(), t.cols(), 0);
    t.positives = Grid<std::size_t>(t.rows(), t.cols(), 0);
    t.sum_b = Grid<double>(t.rows(), t.cols(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (h_index[i] >= t.rows()) throw InvalidArgument("sample h index out of range");
      const std::size_t j = bins.index(b[i]);
      t.count(h_index[i], j) += 1;
      t.positives(h_index[i], j) += y[i] != 0 ? 1 : 0;
      t.sum_b(h_index[i], j) += b[i];
    }
    return t;
  }
};

/// Uniform read-only view of either a process or a table: per-cell mass,
/// positive rate and confidence level.
template <typename T>
struct CellView {
  std::vector<T> h_levels;
  std::vector<T> b_levels;
  Grid<T> mass;
  Grid<std::optional<T>> rate;
  Grid<std::optional<T>> confidence;

  std::size_t rows() const { return h_levels.size(); }
  std::size_t cols() const { return b_levels.size(); }

  bool included(std::size_t h, std::size_t b) const { return mass(h, b) > T(0) && rate(h, b).has_value(); }

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (std::size_t h = 0; h < rows(); ++h)
      for (std::size_t b = 0; b < cols(); ++b)
        if (included(h, b)) out.push_back({h, b});
    return out;
  }
};

template <typename T>
CellView<T> view_of(const DecisionProcess<T>& proc) {
  CellView<T> v;
  v.h_levels = proc.h_values();
  v.b_levels = proc.b_values();
  v.mass = proc.weight();
  v.rate = Grid<std::optional<T>>(proc.rows(), proc.cols());
  v.confidence = Grid<std::optional<T>>(proc.rows(), proc.cols());
  for (const Cell& c : proc.support()) {
    v.rate(c.h, c.b) = proc.rate(c);
    v.confidence(c.h, c.b) = proc.b_values()[c.b];
  }
  return v;
}

/// Table view. With `apply_min_count`, cells below the table's floor are
/// left out entirely.
inline CellView<double> view_of(const CellTable& t, bool apply_min_count = false) {
  CellView<double> v;
  v.h_levels = t.h_values;
  for (std::size_t j = 0; j < t.cols(); ++j) v.b_levels.push_back(t.b_bins.center(j));
  v.mass = Grid<double>(t.rows(), t.cols(), 0.0);
  v.rate = Grid<std::optional<double>>(t.rows(), t.cols());
  v.confidence = Grid<std::optional<double>>(t.rows(), t.cols());
  for (std::size_t h = 0; h < t.rows(); ++h) {
    for (std::size_t b = 0; b < t.cols(); ++b) {
      const std::size_t n = t.count(h, b);
      if (n == 0 || (apply_min_count && n < t.min_count)) continue;
      v.mass(h, b) = static_cast<double>(n);
      v.rate(h, b) = t.pos_rate(h, b);
      v.confidence(h, b) = t.mean_b(h, b);
    }
  }
  return v;
}

enum class AuditKind { Calibration, Multicalibration, Alignment, AlignedCalibration, DiscretizedMulticalibration };

inline const char* to_string(AuditKind k) {
  switch (k) {
    case AuditKind::Calibration: return "calibration";
    case AuditKind::Multicalibration: return "multicalibration";
    case AuditKind::Alignment: return "alignment";
    case AuditKind::AlignedCalibration: return "aligned-calibration";
    case AuditKind::DiscretizedMulticalibration: return "discretized-multicalibration";
  }
  return "unknown";
}

/// A violating group (second empty) or violating comparable pair.
struct Witness {
  static constexpr std::size_t kAllRows = std::numeric_limits<std::size_t>::max();

  Cell first;
  std::optional<Cell> second;
  double magnitude = 0.0;
  double mass = 0.0;  // fraction of the audited mass carried by `first` (groups only)
};

enum class SearchMethod { Direct, Greedy, Exact, Inconclusive };

inline const char* to_string(SearchMethod m) {
  switch (m) {
    case SearchMethod::Direct: return "direct";
    case SearchMethod::Greedy: return "greedy";
    case SearchMethod::Exact: return "exact";
    case SearchMethod::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct AuditReport {
  AuditKind kind = AuditKind::Calibration;
  bool passed = false;
  double alpha = 0.0;
  std::vector<Witness> witnesses;  // empty iff passed
  std::vector<Witness> exempted;   // groups/cells removed to reach a pass
  double excluded_mass = 0.0;
  SearchMethod search = SearchMethod::Direct;
  // Alignment only: cells retained in the witness subsets.
  Grid<std::uint8_t> kept;
};

namespace detail {

inline void sort_witnesses(std::vector<Witness>& ws) {
  std::stable_sort(ws.begin(), ws.end(), [](const Witness& a, const Witness& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
}

template <typename T>
T abs_value(const T& v) {
  return v < T(0) ? T(-v) : v;
}

}  // namespace detail

/// Calibration audit over one stratum (`row`) or the full space. Groups are
/// confidence levels (columns); the audit passes when the groups whose
/// |rate - confidence| exceeds alpha carry at most an alpha fraction of the
/// scope's mass. Since groups are disjoint this is exact at group granularity.
template <typename T>
AuditReport check_calibration(const CellView<T>& view, double alpha, std::optional<std::size_t> row = std::nullopt) {
  detail::check_alpha(alpha);
  if (row && *row >= view.rows()) throw InvalidArgument("calibration scope row out of range");
  const T a = scalar_from_double<T>(alpha);
  const T tol = ScalarTraits<T>::tolerance();
  const std::size_t h_lo = row ? *row : 0;
  const std::size_t h_hi = row ? *row + 1 : view.rows();

  T total(0);
  std::vector<T> mass(view.cols(), T(0)), pos(view.cols(), T(0)), conf(view.cols(), T(0));
  for (std::size_t h = h_lo; h < h_hi; ++h) {
    for (std::size_t b = 0; b < view.cols(); ++b) {
      if (!view.included(h, b)) continue;
      if (!view.confidence(h, b)) throw StructuralError("calibration audit needs a confidence level per cell");
      const T& w = view.mass(h, b);
      mass[b] += w;
      pos[b] += w * *view.rate(h, b);
      conf[b] += w * *view.confidence(h, b);
      total += w;
    }
  }
  if (!(total > T(0))) throw InvalidArgument("calibration audit scope carries no mass");

  AuditReport report;
  report.kind = row ? AuditKind::Multicalibration : AuditKind::Calibration;
  report.alpha = alpha;
  std::vector<Witness> violators;
  T violating_mass(0);
  for (std::size_t b = 0; b < view.cols(); ++b) {
    if (!(mass[b] > T(0))) continue;
    const T gap = detail::abs_value(T(pos[b] / mass[b] - conf[b] / mass[b]));
    if (gap > a + tol) {
      violating_mass += mass[b];
      violators.push_back({Cell{row ? *row : Witness::kAllRows, b}, std::nullopt, to_double(gap),
                           to_double(T(mass[b] / total))});
    }
  }
  detail::sort_witnesses(violators);
  report.excluded_mass = to_double(T(violating_mass / total));
  report.passed = violating_mass <= a * total + tol;
  if (report.passed) {
    report.exempted = std::move(violators);
  } else {
    report.witnesses = std::move(violators);
  }
  return report;
}

/// Calibration on every stratum S_h simultaneously.
template <typename T>
AuditReport check_multicalibration(const CellView<T>& view, double alpha) {
  AuditReport out;
  out.kind = AuditKind::Multicalibration;
  out.alpha = alpha;
  out.passed = true;
  T total(0), excluded(0);
  for (std::size_t h = 0; h < view.rows(); ++h) {
    T row_mass(0);
    for (std::size_t b = 0; b < view.cols(); ++b)
      if (view.included(h, b)) row_mass += view.mass(h, b);
    if (!(row_mass > T(0))) continue;
    total += row_mass;
    AuditReport r = check_calibration(view, alpha, h);
    excluded += row_mass * scalar_from_double<T>(r.excluded_mass);
    out.passed = out.passed && r.passed;
    out.witnesses.insert(out.witnesses.end(), r.witnesses.begin(), r.witnesses.end());
    out.exempted.insert(out.exempted.end(), r.exempted.begin(), r.exempted.end());
  }
  if (!(total > T(0))) throw InvalidArgument("multicalibration audit over an empty table");
  out.excluded_mass = to_double(T(excluded / total));
  detail::sort_witnesses(out.witnesses);
  return out;
}

enum class AlignmentSearch { Greedy, Exhaustive, Auto };

struct AlignmentOptions {
  AlignmentSearch search = AlignmentSearch::Auto;
  // Branch-and-bound node cap for the exhaustive search.
  std::size_t node_limit = 2'000'000;
};

namespace detail {

struct Conflict {
  std::size_t lo;  // index into cell list; the lower cell in product order
  std::size_t hi;
};

template <typename T>
class AlignmentSearcher {
 public:
  AlignmentSearcher(const CellView<T>& view, const T& alpha) : view_(view), alpha_(alpha) {
    cells_ = view.cells();
    row_mass_.assign(view.rows(), T(0));
    for (const Cell& c : cells_) row_mass_[c.h] += view.mass(c.h, c.b);
    budget_.resize(view.rows());
    for (std::size_t h = 0; h < view.rows(); ++h) budget_[h] = alpha / T(2) * row_mass_[h];
    const T tol = ScalarTraits<T>::tolerance();
    incident_.resize(cells_.size());
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      for (std::size_t j = 0; j < cells_.size(); ++j) {
        if (i == j || !cells_[i].precedes(cells_[j])) continue;
        const T gap = rate(i) - rate(j);
        if (gap > alpha + tol) {
          incident_[i].push_back(conflicts_.size());
          incident_[j].push_back(conflicts_.size());
          conflicts_.push_back({i, j});
          gaps_.push_back(gap);
        }
      }
    }
  }

  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Conflict>& conflicts() const { return conflicts_; }
  const std::vector<T>& gaps() const { return gaps_; }

  /// Greedy: repeatedly drop the cell with the largest excess violation per
  /// unit of mass that still fits its row budget.
  std::optional<std::vector<std::uint8_t>> greedy() const {
    std::vector<std::uint8_t> dropped(cells_.size(), 0);
    std::vector<T> used(view_.rows(), T(0));
    const T tol = ScalarTraits<T>::tolerance();
    while (true) {
      std::vector<T> score(cells_.size(), T(0));
      bool any = false;
      for (std::size_t e = 0; e < conflicts_.size(); ++e) {
        const auto& cf = conflicts_[e];
        if (dropped[cf.lo] || dropped[cf.hi]) continue;
        any = true;
        const T excess = gaps_[e] - alpha_;
        score[cf.lo] += excess;
        score[cf.hi] += excess;
      }
      if (!any) return dropped;
      std::optional<std::size_t> best;
      T best_ratio(0);
      for (std::size_t i = 0; i < cells_.size(); ++i) {
        if (dropped[i] || !(score[i] > T(0))) continue;
        const T& w = mass(i);
        if (used[cells_[i].h] + w > budget_[cells_[i].h] + tol) continue;
        const T ratio = score[i] / w;
        if (!best || ratio > best_ratio) {
          best = i;
          best_ratio = ratio;
        }
      }
      if (!best) return std::nullopt;
      dropped[*best] = 1;
      used[cells_[*best].h] += mass(*best);
    }
  }

  /// Exact: a drop set is feasible iff it is a vertex cover of the conflict
  /// graph within every row budget. Branches on an uncovered conflict.
  /// Returns {cover, completed}; cover empty when infeasible or the node cap
  /// was hit.
  std::pair<std::optional<std::vector<std::uint8_t>>, bool> exhaustive(std::size_t node_limit) const {
    std::vector<std::uint8_t> dropped(cells_.size(), 0);
    std::vector<T> used(view_.rows(), T(0));
    std::size_t nodes = 0;
    bool capped = false;
    const bool found = branch(dropped, used, nodes, node_limit, capped);
    if (found) return {dropped, true};
    return {std::nullopt, !capped};
  }

  const T& mass(std::size_t i) const { return view_.mass(cells_[i].h, cells_[i].b); }

 private:
  const T& rate(std::size_t i) const { return *view_.rate(cells_[i].h, cells_[i].b); }

  bool fits(std::size_t i, const std::vector<T>& used) const {
    return used[cells_[i].h] + mass(i) <= budget_[cells_[i].h] + ScalarTraits<T>::tolerance();
  }

  bool branch(std::vector<std::uint8_t>& dropped, std::vector<T>& used, std::size_t& nodes, std::size_t limit,
              bool& capped) const {
    if (++nodes > limit) {
      capped = true;
      return false;
    }
    // Pick the uncovered conflict with the fewest feasible resolutions.
    std::optional<std::size_t> pick;
    int pick_options = 3;
    for (std::size_t e = 0; e < conflicts_.size(); ++e) {
      const auto& cf = conflicts_[e];
      if (dropped[cf.lo] || dropped[cf.hi]) continue;
      const int options = int(fits(cf.lo, used)) + int(fits(cf.hi, used));
      if (options == 0) return false;
      if (options < pick_options) {
        pick = e;
        pick_options = options;
      }
    }
    if (!pick) return true;
    for (std::size_t side : {conflicts_[*pick].lo, conflicts_[*pick].hi}) {
      if (!fits(side, used)) continue;
      dropped[side] = 1;
      used[cells_[side].h] += mass(side);
      if (branch(dropped, used, nodes, limit, capped)) return true;
      dropped[side] = 0;
      used[cells_[side].h] -= mass(side);
      if (capped) return false;
    }
    return false;
  }

  const CellView<T>& view_;
  T alpha_;
  std::vector<Cell> cells_;
  std::vector<T> row_mass_;
  std::vector<T> budget_;
  std::vector<Conflict> conflicts_;
  std::vector<T> gaps_;
  std::vector<std::vector<std::size_t>> incident_;
};

}  // namespace detail

/// Alignment audit. Looks for kept subsets covering at least (1 - alpha/2) of
/// every stratum's mass such that no kept comparable pair decreases in rate
/// by more than alpha. A pass is always backed by a concrete witness; a fail
/// from an exhausted exact search is conclusive, otherwise `search` reports
/// `Greedy` or `Inconclusive`.
template <typename T>
AuditReport check_alignment(const CellView<T>& view, double alpha, const AlignmentOptions& opts = {}) {
  detail::check_alpha(alpha);
  const T a = scalar_from_double<T>(alpha);
  detail::AlignmentSearcher<T> search(view, a);
  const auto& cells = search.cells();
  if (cells.empty()) throw InvalidArgument("alignment audit over an empty table");

  AuditReport report;
  report.kind = AuditKind::Alignment;
  report.alpha = alpha;

  std::optional<std::vector<std::uint8_t>> dropped;
  report.search = SearchMethod::Direct;
  if (search.conflicts().empty()) {
    dropped = std::vector<std::uint8_t>(cells.size(), 0);
  } else {
    if (opts.search != AlignmentSearch::Exhaustive) {
      dropped = search.greedy();
      report.search = SearchMethod::Greedy;
    }
    if (!dropped && opts.search != AlignmentSearch::Greedy) {
      auto [cover, completed] = search.exhaustive(opts.node_limit);
      dropped = std::move(cover);
      report.search = completed ? SearchMethod::Exact : SearchMethod::Inconclusive;
    }
  }

  T total(0), excluded(0);
  for (std::size_t i = 0; i < cells.size(); ++i) total += search.mass(i);
  report.kept = Grid<std::uint8_t>(view.rows(), view.cols(), 0);
  if (dropped) {
    report.passed = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if ((*dropped)[i]) {
        excluded += search.mass(i);
        report.exempted.push_back({cells[i], std::nullopt, 0.0, to_double(T(search.mass(i) / total))});
      } else {
        report.kept(cells[i].h, cells[i].b) = 1;
      }
    }
    // Magnitude of an exempted cell: its worst gap against any other cell.
    for (auto& w : report.exempted) {
      for (std::size_t e = 0; e < search.conflicts().size(); ++e) {
        const auto& cf = search.conflicts()[e];
        if (cells[cf.lo] == w.first || cells[cf.hi] == w.first)
          w.magnitude = std::max(w.magnitude, to_double(search.gaps()[e]));
      }
    }
  } else {
    report.passed = false;
    for (std::size_t i = 0; i < cells.size(); ++i) report.kept(cells[i].h, cells[i].b) = 1;
    for (std::size_t e = 0; e < search.conflicts().size(); ++e) {
      const auto& cf = search.conflicts()[e];
      report.witnesses.push_back({cells[cf.lo], cells[cf.hi], to_double(search.gaps()[e]), 0.0});
    }
    detail::sort_witnesses(report.witnesses);
  }
  report.excluded_mass = to_double(T(excluded / total));
  return report;
}

/// Alignment together with calibration over the full space.
template <typename T>
AuditReport check_aligned_calibration(const CellView<T>& view, double alpha, const AlignmentOptions& opts = {}) {
  AuditReport align = check_alignment(view, alpha, opts);
  AuditReport cal = check_calibration(view, alpha);
  AuditReport out = align;
  out.kind = AuditKind::AlignedCalibration;
  out.passed = align.passed && cal.passed;
  out.witnesses.insert(out.witnesses.end(), cal.witnesses.begin(), cal.witnesses.end());
  out.exempted.insert(out.exempted.end(), cal.exempted.begin(), cal.exempted.end());
  out.excluded_mass = std::max(align.excluded_mass, cal.excluded_mass);
  detail::sort_witnesses(out.witnesses);
  return out;
}

/// Smallest alpha (to within `resolution`) at which the alignment audit
/// passes. The audit is monotone in alpha, so bisection applies.
template <typename T>
double alignment_level(const CellView<T>& view, double resolution = 1e-4, const AlignmentOptions& opts = {}) {
  if (check_alignment(view, 0.0, opts).passed) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    if (check_alignment(view, mid, opts).passed) hi = mid; else lo = mid;
  }
  return hi;
}

template <typename T>
struct MisalignmentMetrics {
  std::size_t violation_count = 0;
  std::size_t pair_count = 0;  // N: ordered comparable pairs, self-pairs included
  T eae{0};
  T mae{0};
  bool insufficient = false;  // fewer than two cells available
};

/// Violation count, expected and maximum alignment error over the cells of
/// `view`.
template <typename T>
MisalignmentMetrics<T> misalignment_metrics(const CellView<T>& view) {
  MisalignmentMetrics<T> out;
  const auto cells = view.cells();
  if (cells.size() < 2) {
    out.insufficient = true;
    return out;
  }
  T sum(0);
  for (const Cell& a : cells) {
    for (const Cell& b : cells) {
      if (!a.precedes(b)) continue;
      ++out.pair_count;
      const T gap = *view.rate(a.h, a.b) - *view.rate(b.h, b.b);
      if (gap > T(0)) {
        ++out.violation_count;
        sum += gap;
        if (gap > out.mae) out.mae = gap;
      }
    }
  }
  out.eae = sum / T(out.pair_count);
  return out;
}

/// Table form: only cells meeting the table's min_count take part.
inline MisalignmentMetrics<double> misalignment_metrics(const CellTable& table) {
  return misalignment_metrics(view_of(table, /*apply_min_count=*/true));
}

template <typename T>
struct MiscalibrationMetrics {
  T ece{0};
  T mce{0};
};

/// ECE and MCE over the b-marginal bins (columns). Bins with mass below
/// `min_mass` count towards ECE but not MCE.
template <typename T>
MiscalibrationMetrics<T> miscalibration_metrics(const CellView<T>& view, const T& min_mass = T(0)) {
  std::vector<T> mass(view.cols(), T(0)), pos(view.cols(), T(0)), conf(view.cols(), T(0));
  T total(0);
  for (const Cell& c : view.cells()) {
    if (!view.confidence(c.h, c.b)) throw StructuralError("miscalibration needs a confidence level per cell");
    const T& w = view.mass(c.h, c.b);
    mass[c.b] += w;
    pos[c.b] += w * *view.rate(c.h, c.b);
    conf[c.b] += w * *view.confidence(c.h, c.b);
    total += w;
  }
  if (!(total > T(0))) throw InvalidArgument("miscalibration metrics over an empty table");
  MiscalibrationMetrics<T> out;
  for (std::size_t b = 0; b < view.cols(); ++b) {
    if (!(mass[b] > T(0))) continue;
    const T gap = detail::abs_value(T((pos[b] - conf[b]) / mass[b]));
    out.ece += mass[b] / total * gap;
    if (mass[b] >= min_mass && gap > out.mce) out.mce = gap;
  }
  return out;
}

inline MiscalibrationMetrics<double> miscalibration_metrics(const CellTable& table) {
  return miscalibration_metrics(view_of(table), static_cast<double>(table.min_count));
}

/// (alpha, lambda)-multicalibration over the strata of a table: every group
/// holding at least alpha*lambda of its stratum must have
/// |mean confidence - positive rate| <= alpha.
inline AuditReport check_discretized_multicalibration(const CellTable& table, double alpha, double lambda) {
  detail::check_alpha(alpha);
  if (!table.b_bins.matches(lambda)) {
    throw InvalidArgument(detail::concat("table is binned at width ", table.b_bins.width(),
                                         " which does not match lambda=", lambda));
  }
  AuditReport report;
  report.kind = AuditKind::DiscretizedMulticalibration;
  report.alpha = alpha;
  const double total = static_cast<double>(table.total_count());
  if (total == 0.0) throw InvalidArgument("multicalibration audit over an empty table");
  double small_mass = 0.0;
  for (std::size_t h = 0; h < table.rows(); ++h) {
    const double stratum = static_cast<double>(table.row_count(h));
    const double floor = alpha * lambda * stratum;
    for (std::size_t b = 0; b < table.cols(); ++b) {
      const std::size_t n = table.count(h, b);
      if (n == 0) continue;
      const double gap = std::abs(*table.mean_b(h, b) - *table.pos_rate(h, b));
      if (static_cast<double>(n) < floor) {
        small_mass += static_cast<double>(n);
        if (gap > alpha) report.exempted.push_back({Cell{h, b}, std::nullopt, gap, n / total});
        continue;
      }
      if (gap > alpha + 1e-12) report.witnesses.push_back({Cell{h, b}, std::nullopt, gap, n / total});
    }
  }
  detail::sort_witnesses(report.witnesses);
  report.excluded_mass = small_mass / total;
  report.passed = report.witnesses.empty();
  return report;
}

}  // namespace alignedcal
