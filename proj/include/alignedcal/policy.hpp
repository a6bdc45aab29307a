#pragma once

// Decision policies over a DecisionProcess: monotonicity, the per-cell
// optimum, the optimal monotone policy and the monotone repair of an
// arbitrary policy.

#include "alignedcal/core.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/rational.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace alignedcal {

template <typename T>
struct PolicyResult {
  CellPolicy<T> policy;
  T utility{0};
  bool is_monotone = false;
  T gap_to_optimal{0};
  std::vector<Cell> upset;  // support cells deciding T=1
  std::string solver;
};

/// True iff p is non-decreasing over every comparable pair of support cells.
template <typename T>
bool is_monotone(const CellPolicy<T>& pol, const DecisionProcess<T>& proc) {
  if (pol.p.rows() != proc.rows() || pol.p.cols() != proc.cols()) {
    throw StructuralError("policy shape does not match process");
  }
  const auto cells = proc.support();
  const T tol = ScalarTraits<T>::tolerance();
  for (const Cell& a : cells)
    for (const Cell& b : cells)
      if (a.precedes(b) && pol(a) > pol(b) + tol) return false;
  return true;
}

/// Support cells where the policy decides T=1 with probability one.
template <typename T>
std::vector<Cell> accepted_cells(const CellPolicy<T>& pol, const DecisionProcess<T>& proc) {
  std::vector<Cell> out;
  for (const Cell& c : proc.support())
    if (pol(c) == T(1)) out.push_back(c);
  return out;
}

/// Deterministic per-cell optimum: decide 1 iff rate > c (ties decide 0).
template <typename T>
PolicyResult<T> optimal_policy(const DecisionProcess<T>& proc) {
  const T c = decision_threshold(proc.utility());
  Grid<T> p(proc.rows(), proc.cols(), T(0));
  for (const Cell& cell : proc.support())
    if (proc.rate(cell) > c) p(cell.h, cell.b) = T(1);
  PolicyResult<T> out;
  out.policy = CellPolicy<T>(std::move(p));
  out.utility = expected_utility(proc, out.policy);
  out.is_monotone = is_monotone(out.policy, proc);
  out.gap_to_optimal = T(0);
  out.upset = accepted_cells(out.policy, proc);
  out.solver = "threshold";
  return out;
}

/// Utility gain of switching a cell from T=0 to T=1.
template <typename T>
T acceptance_gain(const DecisionProcess<T>& proc, const Cell& c) {
  const auto& u = proc.utility();
  const T& r = proc.rate(c);
  return proc.weight(c) * (r * (u.u11 - u.u01) + (T(1) - r) * (u.u10 - u.u00));
}

namespace detail {

/// Dinic max-flow on a small dense-ish graph with scalar capacities.
template <typename T>
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes) : adj_(nodes) {}

  void add_edge(std::size_t from, std::size_t to, const T& cap) {
    adj_[from].push_back(edges_.size());
    edges_.push_back({to, cap});
    adj_[to].push_back(edges_.size());
    edges_.push_back({from, T(0)});
  }

  T run(std::size_t s, std::size_t t, const T& eps) {
    T flow(0);
    while (levels(s, t, eps)) {
      next_.assign(adj_.size(), 0);
      while (true) {
        const T pushed = push(s, t, std::nullopt, eps);
        if (!(pushed > eps)) break;
        flow += pushed;
      }
    }
    return flow;
  }

  /// Nodes reachable from s in the residual graph.
  std::vector<std::uint8_t> source_side(std::size_t s, const T& eps) const {
    std::vector<std::uint8_t> seen(adj_.size(), 0);
    std::deque<std::size_t> queue{s};
    seen[s] = 1;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t e : adj_[v]) {
        if (edges_[e].cap > eps && !seen[edges_[e].to]) {
          seen[edges_[e].to] = 1;
          queue.push_back(edges_[e].to);
        }
      }
    }
    return seen;
  }

 private:
  struct Edge {
    std::size_t to;
    T cap;
  };

  bool levels(std::size_t s, std::size_t t, const T& eps) {
    level_.assign(adj_.size(), -1);
    std::deque<std::size_t> queue{s};
    level_[s] = 0;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t e : adj_[v]) {
        if (edges_[e].cap > eps && level_[edges_[e].to] < 0) {
          level_[edges_[e].to] = level_[v] + 1;
          queue.push_back(edges_[e].to);
        }
      }
    }
    return level_[t] >= 0;
  }

  // Unlimited when `limit` is empty (only at the source).
  T push(std::size_t v, std::size_t t, const std::optional<T>& limit, const T& eps) {
    if (v == t) return *limit;
    for (std::size_t& i = next_[v]; i < adj_[v].size(); ++i) {
      const std::size_t e = adj_[v][i];
      Edge& edge = edges_[e];
      if (!(edge.cap > eps) || level_[edge.to] != level_[v] + 1) continue;
      const T room = limit ? std::min(*limit, edge.cap) : edge.cap;
      const T pushed = push(edge.to, t, room, eps);
      if (pushed > eps) {
        edge.cap -= pushed;
        edges_[e ^ 1].cap += pushed;
        return pushed;
      }
    }
    return T(0);
  }

  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
};

template <typename T>
PolicyResult<T> finish_monotone(const DecisionProcess<T>& proc, std::vector<std::uint8_t> chosen,
                                std::string solver) {
  // Fill zero-weight cells with the up-closure so the grid is monotone too.
  Grid<T> p(proc.rows(), proc.cols(), T(0));
  for (std::size_t h = 0; h < proc.rows(); ++h) {
    for (std::size_t b = 0; b < proc.cols(); ++b) {
      if (!chosen[h * proc.cols() + b]) continue;
      for (std::size_t h2 = h; h2 < proc.rows(); ++h2)
        for (std::size_t b2 = b; b2 < proc.cols(); ++b2) p(h2, b2) = T(1);
    }
  }
  PolicyResult<T> out;
  out.policy = CellPolicy<T>(std::move(p));
  out.utility = expected_utility(proc, out.policy);
  out.is_monotone = is_monotone(out.policy, proc);
  out.gap_to_optimal = optimal_policy(proc).utility - out.utility;
  out.upset = accepted_cells(out.policy, proc);
  out.solver = std::move(solver);
  return out;
}

}  // namespace detail

enum class MonotoneSolver { Auto, Exhaustive, MinCut };

/// Support size up to which Auto uses exhaustive up-set enumeration.
inline constexpr std::size_t kExhaustiveSupportLimit = 20;

/// Optimal monotone policy by enumerating every up-set of the support poset.
template <typename T>
PolicyResult<T> optimal_monotone_policy_exhaustive(const DecisionProcess<T>& proc) {
  std::vector<Cell> cells = proc.support();
  if (cells.size() > 30) throw InvalidArgument("exhaustive up-set enumeration limited to 30 support cells");
  // Every strict upper bound of a cell comes before it in this order.
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.h + a.b > b.h + b.b; });
  const std::size_t n = cells.size();
  std::vector<std::vector<std::size_t>> uppers(n);
  std::vector<T> gain(n);
  for (std::size_t i = 0; i < n; ++i) {
    gain[i] = acceptance_gain(proc, cells[i]);
    for (std::size_t j = 0; j < i; ++j)
      if (cells[i].precedes(cells[j])) uppers[i].push_back(j);
  }
  std::vector<std::uint8_t> in(n, 0), best_in(n, 0);
  T best(0);
  // Iterative DFS; frame state 0 = try exclude, 1 = try include, 2 = done.
  std::vector<int> state(n + 1, 0);
  std::vector<T> acc(n + 1, T(0));
  std::size_t depth = 0;
  while (n > 0) {
    if (depth == n) {
      if (acc[n] > best) {
        best = acc[n];
        best_in = in;
      }
      --depth;
      continue;
    }
    int& st = state[depth];
    if (st == 0) {
      st = 1;
      in[depth] = 0;
      acc[depth + 1] = acc[depth];
      state[depth + 1] = 0;
      ++depth;
    } else if (st == 1) {
      st = 2;
      bool ok = true;
      for (std::size_t j : uppers[depth]) ok = ok && in[j];
      if (ok) {
        in[depth] = 1;
        acc[depth + 1] = acc[depth] + gain[depth];
        state[depth + 1] = 0;
        ++depth;
      }
    } else {
      in[depth] = 0;
      if (depth == 0) break;
      --depth;
    }
  }
  std::vector<std::uint8_t> chosen(proc.rows() * proc.cols(), 0);
  for (std::size_t i = 0; i < n; ++i)
    if (best_in[i]) chosen[cells[i].h * proc.cols() + cells[i].b] = 1;
  return detail::finish_monotone(proc, std::move(chosen), "exhaustive");
}

/// Optimal monotone policy as a maximum-weight closure: source to cells with
/// positive gain, cells with negative gain to sink, unbounded edges to the
/// right and upper grid neighbours. The source side of a minimum cut is an
/// optimal up-set.
template <typename T>
PolicyResult<T> optimal_monotone_policy_mincut(const DecisionProcess<T>& proc) {
  const std::size_t k = proc.rows(), m = proc.cols();
  const std::size_t source = k * m, sink = k * m + 1;
  detail::MaxFlow<T> flow(k * m + 2);
  T positive(0);
  for (const Cell& c : proc.support()) {
    const T g = acceptance_gain(proc, c);
    if (g > T(0)) {
      flow.add_edge(source, c.h * m + c.b, g);
      positive += g;
    } else if (g < T(0)) {
      flow.add_edge(c.h * m + c.b, sink, T(-g));
    }
  }
  const T unbounded = positive + T(1);
  for (std::size_t h = 0; h < k; ++h) {
    for (std::size_t b = 0; b < m; ++b) {
      if (h + 1 < k) flow.add_edge(h * m + b, (h + 1) * m + b, unbounded);
      if (b + 1 < m) flow.add_edge(h * m + b, h * m + b + 1, unbounded);
    }
  }
  T eps(0);
  if constexpr (!ScalarTraits<T>::exact) eps = T(1e-15) * (positive + T(1));
  flow.run(source, sink, eps);
  auto side = flow.source_side(source, eps);
  std::vector<std::uint8_t> chosen(k * m, 0);
  for (std::size_t i = 0; i < k * m; ++i) chosen[i] = side[i];
  return detail::finish_monotone(proc, std::move(chosen), "mincut");
}

template <typename T>
PolicyResult<T> optimal_monotone_policy(const DecisionProcess<T>& proc, MonotoneSolver solver = MonotoneSolver::Auto) {
  switch (solver) {
    case MonotoneSolver::Exhaustive: return optimal_monotone_policy_exhaustive(proc);
    case MonotoneSolver::MinCut: return optimal_monotone_policy_mincut(proc);
    case MonotoneSolver::Auto: break;
  }
  if (proc.support().size() <= kExhaustiveSupportLimit) return optimal_monotone_policy_exhaustive(proc);
  return optimal_monotone_policy_mincut(proc);
}

/// Worst-case utility loss of the best monotone policy under alpha-alignment:
/// alpha * [u11 - u01 + 3/2 (u00 - u10)].
template <typename T>
T monotone_gap_bound(double alpha, const Utility<T>& u) {
  u.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
  const T a = scalar_from_double<T>(alpha);
  return a * (u.u11 - u.u01 + T(3) / T(2) * (u.u00 - u.u10));
}

/// Minimum b index per h row such that some kept cell at or below that row
/// reaches the decision threshold. Non-increasing in h; empty when no
/// such cell exists.
template <typename T>
std::vector<std::optional<std::size_t>> repair_thresholds(const DecisionProcess<T>& proc,
                                                          const Grid<std::uint8_t>& kept) {
  const T c = decision_threshold(proc.utility());
  std::vector<std::optional<std::size_t>> out(proc.rows());
  std::optional<std::size_t> running;
  for (std::size_t h = 0; h < proc.rows(); ++h) {
    for (std::size_t b = 0; b < proc.cols(); ++b) {
      if (!proc.in_support({h, b}) || !kept(h, b)) continue;
      if (proc.rate({h, b}) >= c) {
        if (!running || b < *running) running = b;
        break;
      }
    }
    out[h] = running;
  }
  return out;
}

/// Monotone rendering of `pol`. Cells at or right of the row threshold that
/// sit above a violated cell decide 1; cells left of it that sit below a
/// violating cell decide 0; everything else keeps its input value. The result
/// is monotone for any input and equals the input when it already is.
template <typename T>
CellPolicy<T> monotone_repair(const DecisionProcess<T>& proc, const CellPolicy<T>& pol,
                              const Grid<std::uint8_t>& kept) {
  if (pol.p.rows() != proc.rows() || pol.p.cols() != proc.cols()) {
    throw StructuralError("policy shape does not match process");
  }
  if (kept.rows() != proc.rows() || kept.cols() != proc.cols()) {
    throw StructuralError("kept-cell mask shape does not match process");
  }
  const auto thresholds = repair_thresholds(proc, kept);
  auto upper_region = [&](const Cell& c) { return thresholds[c.h] && c.b >= *thresholds[c.h]; };
  const auto cells = proc.support();

  std::vector<Cell> victims, aggressors;
  for (const Cell& y : cells) {
    bool victim = false, aggressor = false;
    for (const Cell& x : cells) {
      if (x.precedes(y) && pol(x) > pol(y)) victim = true;
      if (y.precedes(x) && pol(y) > pol(x)) aggressor = true;
    }
    if (upper_region(y) && victim) victims.push_back(y);
    if (!upper_region(y) && aggressor) aggressors.push_back(y);
  }

  CellPolicy<T> out = pol;
  for (const Cell& x : cells) {
    if (upper_region(x)) {
      for (const Cell& v : victims)
        if (v.precedes(x)) out(x) = T(1);
    } else {
      for (const Cell& a : aggressors)
        if (x.precedes(a)) out(x) = T(0);
    }
  }
  return out;
}

/// Repair using kept subsets from an alignment audit.
template <typename T>
CellPolicy<T> monotone_repair(const DecisionProcess<T>& proc, const CellPolicy<T>& pol, const AuditReport& audit) {
  return monotone_repair(proc, pol, audit.kept);
}

/// Repair with every support cell kept.
template <typename T>
CellPolicy<T> monotone_repair(const DecisionProcess<T>& proc, const CellPolicy<T>& pol) {
  Grid<std::uint8_t> kept(proc.rows(), proc.cols(), 1);
  return monotone_repair(proc, pol, kept);
}

}  // namespace alignedcal
