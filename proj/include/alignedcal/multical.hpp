#pragma once

// Multicalibration post-processing with respect to the human-confidence
// strata S_h: the iterative lambda-binned update loop, per-stratum uniform
// mass binning, and the sample-size calculators for the latter.

#include "alignedcal/constructions.hpp"
#include "alignedcal/core.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace alignedcal {

struct CalibrationSample {
  std::size_t h = 0;  // index into CalibrationSet::h_values
  double b_raw = 0.0;
  int y = 0;
};

struct CalibrationSet {
  std::vector<double> h_values;
  std::vector<CalibrationSample> samples;

  void validate() const {
    if (h_values.empty()) throw InvalidArgument("calibration set has no h levels");
    for (const auto& s : samples) {
      if (s.h >= h_values.size()) throw InvalidArgument("sample h index out of range");
      if (!(s.b_raw >= 0.0 && s.b_raw <= 1.0)) throw InvalidArgument(detail::concat("b_raw ", s.b_raw, " outside [0,1]"));
      if (s.y != 0 && s.y != 1) throw InvalidArgument("labels must be 0 or 1");
    }
  }

  std::vector<std::size_t> stratum_sizes() const {
    std::vector<std::size_t> n(h_values.size(), 0);
    for (const auto& s : samples) ++n[s.h];
    return n;
  }
};

/// Shift applied to every value of stratum `h` currently in lambda-bin `bin`.
struct ConfidenceShift {
  std::size_t h = 0;
  std::size_t bin = 0;
  double delta = 0.0;
};

/// Piecewise-constant recalibration map, one set of bins per stratum.
/// Inputs are first pushed through `shifts` (in order), then binned.
class DiscretizedConfidenceFunction {
 public:
  struct Stratum {
    std::vector<double> edges;    // size outputs+1, edges.front()=0, edges.back()=1
    std::vector<double> outputs;
  };

  std::string method;
  std::vector<double> h_values;
  std::vector<Stratum> strata;
  std::vector<ConfidenceShift> shifts;
  // When set, bins are the uniform lambda partition rather than `edges`.
  std::optional<std::size_t> uniform_bins;

  /// Pre-binning value after replaying the shift log.
  double shifted(std::size_t h, double b) const {
    if (!uniform_bins) return b;
    const LambdaBinning bins(*uniform_bins);
    for (const auto& s : shifts) {
      if (s.h == h && bins.index(b) == s.bin) b = std::clamp(b + s.delta, 0.0, 1.0);
    }
    return b;
  }

  std::size_t bin_of(std::size_t h, double b) const {
    if (h >= strata.size()) throw InvalidArgument("stratum index out of range");
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument(detail::concat("confidence ", b, " outside [0,1]"));
    const double v = shifted(h, b);
    if (uniform_bins) return LambdaBinning(*uniform_bins).index(v);
    const auto& e = strata[h].edges;
    // Half-open [e_i, e_{i+1}); the last bin is closed at 1.
    const auto it = std::upper_bound(e.begin() + 1, e.end() - 1, v);
    return static_cast<std::size_t>(it - (e.begin() + 1));
  }

  double operator()(std::size_t h, double b) const { return strata[h].outputs[bin_of(h, b)]; }
};

// ---------------------------------------------------------------------------
// Sample-size calculators

namespace detail {

inline void check_open_unit(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw InvalidArgument(detail::concat(name, " must lie in (0,1), got ", v));
}

inline std::size_t bins_for_lambda(double lambda) {
  return static_cast<std::size_t>(std::ceil(1.0 / lambda - 1e-12));
}

inline double n_min_real(double alpha, std::size_t bins, double log_numerator) {
  const double b = static_cast<double>(bins);
  return (2.0 * std::log(log_numerator * b) / (alpha * alpha) + 2.0) * b;
}

}  // namespace detail

/// Minimum stratum size for `bins` uniform-mass bins to be
/// (alpha/2, xi/n_groups)-conditionally calibrated:
/// ceil((2 ln(2 n_groups / xi * bins) / alpha^2 + 2) * bins).
inline std::size_t umd_min_group_size_for_bins(double alpha, std::size_t bins, double xi, std::size_t n_groups) {
  detail::check_open_unit(alpha, "alpha");
  detail::check_open_unit(xi, "xi");
  if (bins == 0) throw InvalidArgument("need at least one bin");
  if (n_groups < 1) throw InvalidArgument("need at least one group");
  return static_cast<std::size_t>(
      std::ceil(detail::n_min_real(alpha, bins, 2.0 * static_cast<double>(n_groups) / xi)));
}

inline std::size_t umd_min_group_size(double alpha, double lambda, double xi, std::size_t n_groups) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in (0,1]");
  return umd_min_group_size_for_bins(alpha, detail::bins_for_lambda(lambda), xi, n_groups);
}

/// Calibration set size that gives every stratum at least n_min samples with
/// probability 1 - xi/2 when each stratum has mass >= gamma, using xi/2
/// inside n_min: ceil(2 n_groups ln(2/xi) / gamma * n_min').
inline std::size_t required_calibration_set_size(double alpha, double lambda, double xi, double gamma,
                                                 std::size_t n_groups) {
  detail::check_open_unit(alpha, "alpha");
  detail::check_open_unit(xi, "xi");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in (0,1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0,1]");
  if (n_groups < 2) throw InvalidArgument("calibration set size bound needs at least two groups");
  const double n_min = detail::n_min_real(alpha, detail::bins_for_lambda(lambda), 4.0 * static_cast<double>(n_groups) / xi);
  return static_cast<std::size_t>(
      std::ceil(2.0 * static_cast<double>(n_groups) * std::log(2.0 / xi) / gamma * n_min));
}

/// Largest bin count whose n_min fits in `group_size`; 0 when even one bin
/// does not.
inline std::size_t umd_bins_for_group_size(std::size_t group_size, double alpha, double xi, std::size_t n_groups) {
  std::size_t bins = 0;
  while (umd_min_group_size_for_bins(alpha, bins + 1, xi, n_groups) <= group_size) ++bins;
  return bins;
}

// ---------------------------------------------------------------------------
// Uniform mass binning

struct UmdOptions {
  std::size_t bins = 8;
  // Floor on every stratum's size in addition to 2 * bins.
  std::size_t min_group_size = 0;
  // Break ties in b_raw with uniform jitter of width 1e-9.
  bool jitter_ties = false;
  std::uint64_t seed = 0;
};

/// Per stratum: equal-count bins at empirical quantiles of b_raw, each
/// returning the empirical positive rate of its samples. Interior edges sit
/// midway between the neighbouring order statistics; samples equal to an
/// edge fall in the upper bin, and bins collapsed by ties are merged.
inline DiscretizedConfidenceFunction multicalibrate_umd(const CalibrationSet& set, const UmdOptions& opts) {
  set.validate();
  if (opts.bins == 0) throw InvalidArgument("need at least one bin");
  const std::size_t floor = std::max(2 * opts.bins, opts.min_group_size);
  DiscretizedConfidenceFunction fn;
  fn.method = "umd";
  fn.h_values = set.h_values;
  fn.strata.resize(set.h_values.size());

  std::vector<std::vector<double>> values(set.h_values.size());
  std::vector<std::vector<int>> labels(set.h_values.size());
  for (const auto& s : set.samples) {
    values[s.h].push_back(s.b_raw);
    labels[s.h].push_back(s.y);
  }
  Rng rng(substream_seed(opts.seed, "umd-jitter"));
  for (std::size_t h = 0; h < set.h_values.size(); ++h) {
    auto& v = values[h];
    const auto& y = labels[h];
    const std::size_t n = v.size();
    if (n < floor) {
      throw InvalidArgument(detail::concat("stratum h=", set.h_values[h], " has ", n,
                                           " samples; uniform mass binning needs at least n_min=", floor));
    }
    if (opts.jitter_ties) {
      std::map<double, int> seen;
      for (double b : v) ++seen[b];
      for (double& b : v)
        if (seen[b] > 1) b = std::clamp(b + rng.uniform(-0.5e-9, 0.5e-9), 0.0, 1.0);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> edges{0.0};
    for (std::size_t i = 1; i < opts.bins; ++i) {
      const std::size_t pos = i * n / opts.bins;
      const double edge = 0.5 * (v[order[pos - 1]] + v[order[pos]]);
      if (edge > edges.back()) edges.push_back(edge);
    }
    if (edges.back() < 1.0) {
      edges.push_back(1.0);
    } else {
      edges.back() = 1.0;  // a tie at 1 collapsed the last bin
    }
    if (edges.size() < 2) edges = {0.0, 1.0};
    auto& stratum = fn.strata[h];
    stratum.edges = edges;
    const std::size_t bins = edges.size() - 1;
    std::vector<double> pos(bins, 0.0), cnt(bins, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, v[i]);
      const std::size_t bin = static_cast<std::size_t>(it - (edges.begin() + 1));
      cnt[bin] += 1.0;
      pos[bin] += y[i];
    }
    const double pooled = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    for (std::size_t bin = 0; bin < bins; ++bin) stratum.outputs.push_back(cnt[bin] > 0 ? pos[bin] / cnt[bin] : pooled);
  }
  return fn;
}

// ---------------------------------------------------------------------------
// Iterative lambda-binned multicalibration

struct IterativeOptions {
  // Default 10 * ceil(1 / (alpha'^2 lambda)).
  std::optional<std::size_t> max_rounds;
};

struct UpdateRecord {
  std::size_t round = 0;
  std::size_t h = 0;
  std::size_t bin = 0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double positive_rate = 0.0;
  double delta = 0.0;
  double potential_before = 0.0;  // sum_i (f_i - y_i)^2
  double potential_after = 0.0;
};

struct IterativeResult {
  DiscretizedConfidenceFunction function;
  std::vector<UpdateRecord> updates;
  std::size_t rounds = 0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, UpdateRecord last) : std::runtime_error(what), last_(last) {}
  const UpdateRecord& last_update() const { return last_; }

 private:
  UpdateRecord last_;
};

inline std::size_t default_max_rounds(double alpha_prime, double lambda) {
  return 10 * static_cast<std::size_t>(std::ceil(1.0 / (alpha_prime * alpha_prime * lambda)));
}

/// Repeatedly scans the groups (h, lambda-bin) in lexicographic order; any
/// group holding at least alpha'*lambda of its stratum whose positive rate
/// differs from its mean confidence by more than alpha' has its confidences
/// shifted by that difference (clamped to [0,1]). On convergence every
/// (h, bin) group outputs the mean of its final confidences.
inline IterativeResult multicalibrate_iterative(const CalibrationSet& set, double alpha_prime, double lambda,
                                                const IterativeOptions& opts = {}) {
  set.validate();
  detail::check_open_unit(alpha_prime, "alpha'");
  detail::check_open_unit(lambda, "lambda");
  const LambdaBinning bins = LambdaBinning::from_lambda(lambda);
  const std::size_t max_rounds = opts.max_rounds.value_or(default_max_rounds(alpha_prime, lambda));
  const std::size_t n_h = set.h_values.size();

  std::vector<std::vector<std::size_t>> members(n_h);
  for (std::size_t i = 0; i < set.samples.size(); ++i) members[set.samples[i].h].push_back(i);
  for (std::size_t h = 0; h < n_h; ++h) {
    if (members[h].empty()) throw InvalidArgument(detail::concat("stratum h=", set.h_values[h], " has no samples"));
  }
  std::vector<double> f(set.samples.size());
  double potential = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = set.samples[i].b_raw;
    const double d = f[i] - set.samples[i].y;
    potential += d * d;
  }

  IterativeResult result;
  std::vector<std::size_t> group;
  bool updated = true;
  while (updated) {
    updated = false;
    if (result.rounds == max_rounds) {
      const UpdateRecord last = result.updates.empty() ? UpdateRecord{} : result.updates.back();
      throw ConvergenceError(detail::concat("no convergence within ", max_rounds, " rounds; last update h=", last.h,
                                            " bin=", last.bin, " delta=", last.delta),
                             last);
    }
    ++result.rounds;
    for (std::size_t h = 0; h < n_h; ++h) {
      const double floor = alpha_prime * lambda * static_cast<double>(members[h].size());
      for (std::size_t bin = 0; bin < bins.size(); ++bin) {
        group.clear();
        double sum_f = 0.0, sum_y = 0.0;
        for (std::size_t i : members[h]) {
          if (bins.index(f[i]) != bin) continue;
          group.push_back(i);
          sum_f += f[i];
          sum_y += set.samples[i].y;
        }
        if (group.empty() || static_cast<double>(group.size()) < floor) continue;
        const double n = static_cast<double>(group.size());
        const double mean = sum_f / n, rate = sum_y / n;
        if (!(std::abs(rate - mean) > alpha_prime)) continue;
        UpdateRecord rec{result.rounds, h, bin, group.size(), mean, rate, rate - mean, potential, 0.0};
        double change = 0.0;
        for (std::size_t i : group) {
          const double y = set.samples[i].y;
          const double before = (f[i] - y) * (f[i] - y);
          f[i] = std::clamp(f[i] + rec.delta, 0.0, 1.0);
          change += (f[i] - y) * (f[i] - y) - before;
        }
        potential += change;
        rec.potential_after = potential;
        if (!(change < 0.0)) {
          throw std::logic_error("multicalibration update failed to decrease the squared-error potential");
        }
        result.updates.push_back(rec);
        updated = true;
      }
    }
  }

  auto& fn = result.function;
  fn.method = "iterative";
  fn.h_values = set.h_values;
  fn.uniform_bins = bins.size();
  for (const auto& u : result.updates) fn.shifts.push_back({u.h, u.bin, u.delta});
  fn.strata.resize(n_h);
  for (std::size_t h = 0; h < n_h; ++h) {
    std::vector<double> sum(bins.size(), 0.0), cnt(bins.size(), 0.0);
    for (std::size_t i : members[h]) {
      const std::size_t bin = bins.index(f[i]);
      sum[bin] += f[i];
      cnt[bin] += 1.0;
    }
    auto& st = fn.strata[h];
    for (std::size_t bin = 0; bin <= bins.size(); ++bin) st.edges.push_back(static_cast<double>(bin) / bins.size());
    for (std::size_t bin = 0; bin < bins.size(); ++bin)
      st.outputs.push_back(cnt[bin] > 0 ? sum[bin] / cnt[bin] : bins.center(bin));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

/// Table of (h, fn(h, b_raw), y) binned at width 1/bins.
inline CellTable recalibrated_table(const CalibrationSet& set, const DiscretizedConfidenceFunction& fn,
                                    LambdaBinning bins, std::size_t min_count = 30) {
  std::vector<std::size_t> h;
  std::vector<double> b;
  std::vector<int> y;
  for (const auto& s : set.samples) {
    h.push_back(s.h);
    b.push_back(fn(s.h, s.b_raw));
    y.push_back(s.y);
  }
  return CellTable::from_samples(set.h_values, bins, h, b, y, min_count);
}

/// Table of the raw confidences.
inline CellTable raw_table(const CalibrationSet& set, LambdaBinning bins, std::size_t min_count = 30) {
  std::vector<std::size_t> h;
  std::vector<double> b;
  std::vector<int> y;
  for (const auto& s : set.samples) {
    h.push_back(s.h);
    b.push_back(s.b_raw);
    y.push_back(s.y);
  }
  return CellTable::from_samples(set.h_values, bins, h, b, y, min_count);
}

/// Process induced by pushing a score model through a binned recalibration
/// map: cells are (h, output value) with the model's true positive rate.
inline DecisionProcess<double> induced_process(const ScoreModel& model, const DiscretizedConfidenceFunction& fn,
                                               const Utility<double>& utility = symmetric_utility<double>()) {
  if (fn.uniform_bins) throw InvalidArgument("induced_process needs an edge-based map");
  if (fn.strata.size() != model.strata()) throw InvalidArgument("map and model disagree on the number of strata");
  struct Piece {
    std::size_t h;
    double value, mass, positive;
  };
  std::vector<Piece> pieces;
  std::vector<double> levels;
  for (std::size_t h = 0; h < model.strata(); ++h) {
    const auto& st = fn.strata[h];
    for (std::size_t i = 0; i < st.outputs.size(); ++i) {
      const double lo = st.edges[i], hi = st.edges[i + 1];
      const double mass = model.stratum(h).mass * (hi - lo);
      if (!(mass > 0.0)) continue;
      pieces.push_back({h, st.outputs[i], mass, mass * model.mean_rate(h, lo, hi)});
      levels.push_back(st.outputs[i]);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  Grid<double> weight(model.strata(), levels.size(), 0.0), positive(model.strata(), levels.size(), 0.0);
  for (const auto& p : pieces) {
    const std::size_t col = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), p.value) - levels.begin());
    weight(p.h, col) += p.mass;
    positive(p.h, col) += p.positive;
  }
  Grid<std::optional<double>> rate(model.strata(), levels.size());
  for (std::size_t h = 0; h < model.strata(); ++h)
    for (std::size_t j = 0; j < levels.size(); ++j)
      if (weight(h, j) > 0.0) rate(h, j) = std::clamp(positive(h, j) / weight(h, j), 0.0, 1.0);
  std::vector<double> h_values;
  for (std::size_t h = 0; h < model.strata(); ++h) h_values.push_back(model.stratum(h).h_value);
  return DecisionProcess<double>(std::move(h_values), std::move(levels), std::move(weight), std::move(rate), utility);
}

/// A process with every confidence replaced by the mass-weighted mean
/// confidence of its lambda-bin within the same stratum.
struct LambdaDiscretization {
  // Groups (h, bin) with bin centres as levels, for (alpha, lambda) audits.
  CellView<double> groups;
  // The emitted process over the distinct group means.
  DecisionProcess<double> emitted;
};

inline LambdaDiscretization lambda_discretize(const DecisionProcess<double>& proc, LambdaBinning bins) {
  const std::size_t rows = proc.rows(), nb = bins.size();
  Grid<double> mass(rows, nb, 0.0), conf(rows, nb, 0.0), pos(rows, nb, 0.0);
  for (const Cell& c : proc.support()) {
    const std::size_t j = bins.index(proc.b_values()[c.b]);
    const double w = proc.weight(c);
    mass(c.h, j) += w;
    conf(c.h, j) += w * proc.b_values()[c.b];
    pos(c.h, j) += w * proc.rate(c);
  }
  LambdaDiscretization out;
  auto& g = out.groups;
  g.h_levels = proc.h_values();
  for (std::size_t j = 0; j < nb; ++j) g.b_levels.push_back(bins.center(j));
  g.mass = Grid<double>(rows, nb, 0.0);
  g.rate = Grid<std::optional<double>>(rows, nb);
  g.confidence = Grid<std::optional<double>>(rows, nb);
  std::vector<double> levels;
  for (std::size_t h = 0; h < rows; ++h) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (!(mass(h, j) > 0.0)) continue;
      g.mass(h, j) = mass(h, j);
      g.rate(h, j) = std::clamp(pos(h, j) / mass(h, j), 0.0, 1.0);
      g.confidence(h, j) = conf(h, j) / mass(h, j);
      levels.push_back(*g.confidence(h, j));
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  Grid<double> weight(rows, levels.size(), 0.0);
  Grid<std::optional<double>> rate(rows, levels.size());
  for (std::size_t h = 0; h < rows; ++h) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (!g.confidence(h, j)) continue;
      const auto col = static_cast<std::size_t>(
          std::lower_bound(levels.begin(), levels.end(), *g.confidence(h, j)) - levels.begin());
      weight(h, col) = g.mass(h, j);
      rate(h, col) = g.rate(h, j);
    }
  }
  out.emitted = DecisionProcess<double>(proc.h_values(), std::move(levels), std::move(weight), std::move(rate),
                                        proc.utility());
  return out;
}

}  // namespace alignedcal
