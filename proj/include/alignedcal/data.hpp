#pragma once

// Prediction-log ingestion and the empirical analyses over it: confidence
// transform, cohort filter, (h, b) cell tables, advice-shift tables with
// bootstrap intervals and ROC curves.

#include "alignedcal/core.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/random.hpp"
#include "alignedcal/rational.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace alignedcal {

class InputError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct PredictionRecord {
  std::string task;
  std::string participant;
  std::string instance;
  int y = 0;
  double b_hat = 0.0;  // raw scale [-1, 1]
  double h_hat = 0.0;
  double h_ai_hat = 0.0;
  std::string country;
  std::optional<double> told_accuracy;
  std::string group;
};

struct TransformedRecord {
  std::string task;
  std::string participant;
  std::string instance;
  int y = 0;
  double b = 0.0;
  double h = 0.0;
  double h_ai = 0.0;
};

/// Raw [-1,1] confidence to the probability that y = 1.
inline double transform_confidence(double raw, int y) {
  if (!(raw >= -1.0 && raw <= 1.0)) throw InvalidArgument(detail::concat("raw confidence ", raw, " outside [-1,1]"));
  if (y != 0 && y != 1) throw InvalidArgument("label must be 0 or 1");
  const double p = (raw + 1.0) / 2.0;
  return y == 1 ? p : 1.0 - p;
}

inline double inverse_transform_confidence(double value, int y) {
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidArgument(detail::concat("confidence ", value, " outside [0,1]"));
  if (y != 0 && y != 1) throw InvalidArgument("label must be 0 or 1");
  const double p = y == 1 ? value : 1.0 - value;
  return 2.0 * p - 1.0;
}

inline TransformedRecord transform(const PredictionRecord& r) {
  return {r.task, r.participant, r.instance, r.y,
          transform_confidence(r.b_hat, r.y), transform_confidence(r.h_hat, r.y), transform_confidence(r.h_ai_hat, r.y)};
}

inline std::vector<TransformedRecord> transform_all(const std::vector<PredictionRecord>& records) {
  std::vector<TransformedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(transform(r));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& record_fields() {
  static const std::vector<std::string> fields{"task", "participant", "instance", "y", "b_hat",
                                               "h_hat", "h_ai_hat", "country", "told_accuracy", "group"};
  return fields;
}

/// Maps a record field to the header used in the file. Fields not listed
/// keep their own name.
struct ColumnMapping {
  std::map<std::string, std::string> columns;

  std::string header_for(const std::string& field) const {
    const auto it = columns.find(field);
    return it == columns.end() ? field : it->second;
  }

  static ColumnMapping from_json(const nlohmann::ordered_json& j) {
    ColumnMapping m;
    const nlohmann::ordered_json& cols = j.contains("columns") ? j.at("columns") : j;
    for (auto it = cols.begin(); it != cols.end(); ++it) {
      const auto& fields = record_fields();
      if (std::find(fields.begin(), fields.end(), it.key()) == fields.end())
        throw InputError("column mapping names unknown field '" + it.key() + "'");
      m.columns[it.key()] = it.value().get<std::string>();
    }
    return m;
  }
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct CsvOptions {
  ColumnMapping mapping;
  bool skip_bad_rows = false;
};

struct LoadResult {
  std::vector<PredictionRecord> records;
  std::vector<RowError> skipped;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw InputError("unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

inline double parse_double_field(const std::string& text, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InputError(concat("field ", field, ": '", text, "' is not a number"));
  }
  if (used != text.size() || !std::isfinite(v)) throw InputError(concat("field ", field, ": '", text, "' is not a number"));
  return v;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  return out + "\"";
}

}  // namespace detail

/// Reads a prediction log with a header row. Required fields are task, y,
/// b_hat, h_hat and h_ai_hat; other fields default to empty. Unknown columns
/// are ignored.
inline LoadResult read_prediction_csv(std::istream& in, const CsvOptions& opts = {}) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw InputError("empty CSV: no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position.emplace(header[i], i);
  std::map<std::string, std::size_t> col;
  for (const auto& f : record_fields()) {
    const auto it = position.find(opts.mapping.header_for(f));
    if (it != position.end()) col[f] = it->second;
  }
  for (const char* required : {"task", "y", "b_hat", "h_hat", "h_ai_hat"}) {
    if (!col.count(required)) {
      throw InputError(detail::concat("CSV header lacks column '", opts.mapping.header_for(required), "'"));
    }
  }

  LoadResult result;
  while (next_line()) {
    if (line.empty()) continue;
    try {
      const auto fields = detail::split_csv_line(line);
      auto get = [&](const std::string& f) -> std::string {
        const auto it = col.find(f);
        if (it == col.end()) return {};
        if (it->second >= fields.size()) throw InputError(detail::concat("row has no value for ", f));
        return fields[it->second];
      };
      PredictionRecord r;
      r.task = get("task");
      r.participant = get("participant");
      r.instance = get("instance");
      const std::string y = get("y");
      if (y != "0" && y != "1") throw InputError("y must be 0 or 1, got '" + y + "'");
      r.y = y == "1" ? 1 : 0;
      r.b_hat = detail::parse_double_field(get("b_hat"), "b_hat");
      r.h_hat = detail::parse_double_field(get("h_hat"), "h_hat");
      r.h_ai_hat = detail::parse_double_field(get("h_ai_hat"), "h_ai_hat");
      for (double v : {r.b_hat, r.h_hat, r.h_ai_hat})
        if (v < -1.0 || v > 1.0) throw InputError(detail::concat("raw confidence ", v, " outside [-1,1]"));
      r.country = get("country");
      if (const std::string told = get("told_accuracy"); !told.empty())
        r.told_accuracy = detail::parse_double_field(told, "told_accuracy");
      r.group = get("group");
      result.records.push_back(std::move(r));
    } catch (const InvalidArgument& e) {
      if (!opts.skip_bad_rows) throw InputError(detail::concat("line ", line_no, ": ", e.what()));
      result.skipped.push_back({line_no, e.what()});
    }
  }
  return result;
}

inline void write_prediction_csv(std::ostream& out, const std::vector<PredictionRecord>& records) {
  const auto& fields = record_fields();
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
  out << '\n';
  for (const auto& r : records) {
    out << detail::csv_quote(r.task) << ',' << detail::csv_quote(r.participant) << ','
        << detail::csv_quote(r.instance) << ',' << r.y << ',' << shortest_decimal(r.b_hat) << ','
        << shortest_decimal(r.h_hat) << ',' << shortest_decimal(r.h_ai_hat) << ',' << detail::csv_quote(r.country)
        << ',' << (r.told_accuracy ? shortest_decimal(*r.told_accuracy) : std::string()) << ','
        << detail::csv_quote(r.group) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cohort

struct CohortResult {
  std::vector<PredictionRecord> records;
  std::optional<std::string> warning;
};

/// Keeps records from `country` whose told accuracy equals `told_accuracy`.
/// Both treatment and control groups stay in.
inline CohortResult filter_cohort(const std::vector<PredictionRecord>& records,
                                  const std::optional<std::string>& country,
                                  const std::optional<double>& told_accuracy) {
  CohortResult out;
  for (const auto& r : records) {
    if (country && r.country != *country) continue;
    if (told_accuracy && (!r.told_accuracy || std::abs(*r.told_accuracy - *told_accuracy) > 1e-9)) continue;
    out.records.push_back(r);
  }
  if (out.records.empty()) out.warning = "cohort filter matched no records";
  return out;
}

inline std::size_t count_participants(const std::vector<PredictionRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.participant);
  return ids.size();
}

/// Task names in order of first appearance.
template <typename Record>
std::vector<std::string> task_names(const std::vector<Record>& records) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.task).second) out.push_back(r.task);
  return out;
}

// ---------------------------------------------------------------------------
// Binning

/// Equal-mass bins over h by rank. A bin's upper edge is the value at its
/// rank boundary; values tied with it stay in the lower bin. Bins left empty
/// by ties are dropped.
struct HBinning {
  std::vector<double> upper;   // inclusive upper edge per bin
  std::vector<double> values;  // mean h per bin

  std::size_t size() const { return values.size(); }

  std::size_t index(double h) const {
    for (std::size_t i = 0; i + 1 < upper.size(); ++i)
      if (h <= upper[i]) return i;
    return upper.size() - 1;
  }

  static HBinning equal_mass(std::vector<double> h, std::size_t bins = 3) {
    if (h.empty()) throw InvalidArgument("cannot bin an empty set of h values");
    if (bins == 0) throw InvalidArgument("need at least one h bin");
    std::sort(h.begin(), h.end());
    const std::size_t n = h.size();
    std::vector<double> edges;
    for (std::size_t k = 1; k <= bins; ++k) {
      const std::size_t last = (k * n + bins - 1) / bins;  // ceil(k n / bins)
      if (last == 0) continue;
      const double e = h[last - 1];
      if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    HBinning out;
    out.upper = edges;
    std::vector<double> sum(edges.size(), 0.0), cnt(edges.size(), 0.0);
    for (double v : h) {
      const std::size_t i = out.index(v);
      sum[i] += v;
      cnt[i] += 1.0;
    }
    for (std::size_t i = 0; i < edges.size(); ++i) out.values.push_back(sum[i] / cnt[i]);
    return out;
  }
};

inline constexpr std::size_t kDefaultBBins = 8;
inline constexpr std::size_t kDefaultHBins = 3;

/// Records of one task binned into (h bin, b bin) cells.
struct TaskCells {
  std::string task;
  std::vector<TransformedRecord> records;
  HBinning h_bins;
  LambdaBinning b_bins;
  std::vector<std::size_t> h_index;
  std::vector<std::size_t> b_index;
  CellTable table;
};

inline TaskCells bin_task(const std::vector<TransformedRecord>& all, const std::string& task,
                          std::size_t min_count = 30, std::size_t b_bins = kDefaultBBins,
                          std::size_t h_bins = kDefaultHBins) {
  TaskCells out;
  out.task = task;
  for (const auto& r : all)
    if (r.task == task) out.records.push_back(r);
  if (out.records.empty()) throw InvalidArgument("task '" + task + "' has no records");
  std::vector<double> h;
  for (const auto& r : out.records) h.push_back(r.h);
  out.h_bins = HBinning::equal_mass(h, h_bins);
  out.b_bins = LambdaBinning(b_bins);
  std::vector<double> b;
  std::vector<int> y;
  for (const auto& r : out.records) {
    out.h_index.push_back(out.h_bins.index(r.h));
    out.b_index.push_back(out.b_bins.index(r.b));
    b.push_back(r.b);
    y.push_back(r.y);
  }
  out.table = CellTable::from_samples(out.h_bins.values, out.b_bins, out.h_index, b, y, min_count);
  return out;
}

inline CellTable build_cell_table(const std::vector<TransformedRecord>& records, const std::string& task,
                                  std::size_t min_count = 30) {
  return bin_task(records, task, min_count).table;
}

// ---------------------------------------------------------------------------
// Advice shift

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double level = 0.9;
  bool cluster_by_participant = false;
  std::uint64_t seed = 0;
};

struct ShiftTable {
  std::vector<double> h_values;
  LambdaBinning b_bins;
  Grid<std::size_t> count;
  Grid<std::optional<double>> mean;
  Grid<std::optional<double>> lower;
  Grid<std::optional<double>> upper;
  std::size_t min_count = 30;
};

struct ShiftDecrease {
  std::size_t h = 0;
  std::size_t b = 0;  // the pair is (b, b + 1)
  double difference = 0.0;
  double upper = 0.0;  // upper end of the interval for mean(b+1) - mean(b)
};

struct ShiftAnalysis {
  ShiftTable table;
  std::vector<ShiftDecrease> decreases;  // adjacent pairs with a significant drop
};

namespace detail {

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Per-cell mean of h_ai - h with percentile bootstrap intervals. Adjacent
/// b cells within an h row (both meeting min_count) count as a significant
/// decrease when the interval for their difference lies below zero.
inline ShiftAnalysis advice_shift_table(const TaskCells& cells, const BootstrapOptions& opts = {}) {
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw InvalidArgument("bootstrap level must lie in (0,1)");
  const std::size_t rows = cells.table.rows(), cols = cells.table.cols();
  const std::size_t n = cells.records.size();
  ShiftAnalysis out;
  ShiftTable& t = out.table;
  t.h_values = cells.table.h_values;
  t.b_bins = cells.b_bins;
  t.min_count = cells.table.min_count;
  t.count = cells.table.count;
  t.mean = Grid<std::optional<double>>(rows, cols);
  t.lower = Grid<std::optional<double>>(rows, cols);
  t.upper = Grid<std::optional<double>>(rows, cols);

  auto cell_means = [&](const std::vector<std::size_t>& draws) {
    Grid<double> sum(rows, cols, 0.0), cnt(rows, cols, 0.0);
    for (std::size_t i : draws) {
      sum(cells.h_index[i], cells.b_index[i]) += cells.records[i].h_ai - cells.records[i].h;
      cnt(cells.h_index[i], cells.b_index[i]) += 1.0;
    }
    Grid<double> mean(rows, cols, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t h = 0; h < rows; ++h)
      for (std::size_t b = 0; b < cols; ++b)
        if (cnt(h, b) > 0) mean(h, b) = sum(h, b) / cnt(h, b);
    return mean;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const Grid<double> point = cell_means(all);
  for (std::size_t h = 0; h < rows; ++h)
    for (std::size_t b = 0; b < cols; ++b)
      if (!std::isnan(point(h, b))) t.mean(h, b) = point(h, b);

  std::map<std::string, std::vector<std::size_t>> by_participant;
  for (std::size_t i = 0; i < n; ++i) by_participant[cells.records[i].participant].push_back(i);
  std::vector<const std::vector<std::size_t>*> clusters;
  for (const auto& [id, idx] : by_participant) clusters.push_back(&idx);

  std::vector<Grid<double>> resampled;
  resampled.reserve(opts.resamples);
  std::vector<std::size_t> draws;
  for (std::size_t r = 0; r < opts.resamples; ++r) {
    Rng rng(substream_seed(opts.seed, "bootstrap", r));
    draws.clear();
    if (opts.cluster_by_participant) {
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& idx = *clusters[rng.below(clusters.size())];
        draws.insert(draws.end(), idx.begin(), idx.end());
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) draws.push_back(rng.below(n));
    }
    resampled.push_back(cell_means(draws));
  }
  const double lo_q = (1.0 - opts.level) / 2.0, hi_q = 1.0 - lo_q;
  auto interval = [&](auto value_of) -> std::optional<std::pair<double, double>> {
    std::vector<double> vals;
    for (const auto& g : resampled) {
      const double v = value_of(g);
      if (!std::isnan(v)) vals.push_back(v);
    }
    if (vals.empty()) return std::nullopt;
    std::sort(vals.begin(), vals.end());
    return std::make_pair(detail::quantile_sorted(vals, lo_q), detail::quantile_sorted(vals, hi_q));
  };
  for (std::size_t h = 0; h < rows; ++h) {
    for (std::size_t b = 0; b < cols; ++b) {
      if (!t.mean(h, b)) continue;
      if (auto iv = interval([&](const Grid<double>& g) { return g(h, b); })) {
        t.lower(h, b) = iv->first;
        t.upper(h, b) = iv->second;
      }
    }
    for (std::size_t b = 0; b + 1 < cols; ++b) {
      if (t.count(h, b) < t.min_count || t.count(h, b + 1) < t.min_count) continue;
      const auto iv = interval([&](const Grid<double>& g) { return g(h, b + 1) - g(h, b); });
      if (iv && iv->second < 0.0) out.decreases.push_back({h, b, *t.mean(h, b + 1) - *t.mean(h, b), iv->second});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ROC

enum class ScoreSource { B, H, HAi };

inline const char* to_string(ScoreSource s) {
  switch (s) {
    case ScoreSource::B: return "B";
    case ScoreSource::H: return "H";
    case ScoreSource::HAi: return "H_AI";
  }
  return "?";
}

struct RocPoint {
  double threshold = 0.0;  // +inf for the origin
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline double score_of(const TransformedRecord& r, ScoreSource s) {
  switch (s) {
    case ScoreSource::B: return r.b;
    case ScoreSource::H: return r.h;
    case ScoreSource::HAi: return r.h_ai;
  }
  return 0.0;
}

/// ROC of the policy "decide 1 iff score >= threshold", swept over every
/// distinct score in descending order, with trapezoidal AUC.
inline RocCurve roc_curve(std::vector<std::pair<double, int>> scored) {
  std::size_t pos = 0, neg = 0;
  for (const auto& [s, y] : scored) (y ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw InvalidArgument("AUC is undefined when only one class is present");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  RocCurve out;
  out.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double s = scored[i].first;
    while (i < scored.size() && scored[i].first == s) {
      (scored[i].second ? tp : fp) += 1;
      ++i;
    }
    const RocPoint p{s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
    const RocPoint& prev = out.points.back();
    out.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    out.points.push_back(p);
  }
  return out;
}

inline RocCurve policy_auc(const std::vector<TransformedRecord>& records, const std::string& task, ScoreSource source) {
  std::vector<std::pair<double, int>> scored;
  for (const auto& r : records)
    if (r.task == task) scored.emplace_back(score_of(r, source), r.y);
  if (scored.empty()) throw InvalidArgument("task '" + task + "' has no records");
  return roc_curve(std::move(scored));
}

// ---------------------------------------------------------------------------
// Per-task report

struct TaskReport {
  std::string task;
  std::size_t records = 0;
  std::size_t participants = 0;
  MisalignmentMetrics<double> misalignment;
  MiscalibrationMetrics<double> miscalibration;
  RocCurve roc_b, roc_h, roc_h_ai;
  TaskCells cells;
  ShiftAnalysis shift;
};

struct ReproOptions {
  std::size_t min_count = 30;
  BootstrapOptions bootstrap;
};

inline TaskReport analyze_task(const std::vector<TransformedRecord>& records, const std::string& task,
                               const ReproOptions& opts = {}) {
  TaskReport rep;
  rep.task = task;
  rep.cells = bin_task(records, task, opts.min_count);
  rep.records = rep.cells.records.size();
  std::set<std::string> ids;
  for (const auto& r : rep.cells.records) ids.insert(r.participant);
  rep.participants = ids.size();
  rep.misalignment = misalignment_metrics(rep.cells.table);
  rep.miscalibration = miscalibration_metrics(rep.cells.table);
  rep.roc_b = policy_auc(rep.cells.records, task, ScoreSource::B);
  rep.roc_h = policy_auc(rep.cells.records, task, ScoreSource::H);
  rep.roc_h_ai = policy_auc(rep.cells.records, task, ScoreSource::HAi);
  BootstrapOptions boot = opts.bootstrap;
  boot.seed = substream_seed(opts.bootstrap.seed, task);
  rep.shift = advice_shift_table(rep.cells, boot);
  return rep;
}

// ---------------------------------------------------------------------------
// Synthetic logs

struct SyntheticLogOptions {
  std::size_t n = 20000;
  std::uint64_t seed = 7;
  std::string task = "synthetic";
  std::size_t participants = 200;
  double h_jitter = 0.05;
  double advice_weight = 0.5;  // h_ai = h + advice_weight * (b - h) + noise
  double advice_noise = 0.05;
  std::string country = "US";
  double told_accuracy = 80.0;
};

/// Samples records from a process: a cell by weight, then the label from the
/// cell's rate. Human confidence is the cell's h level plus uniform jitter;
/// the classifier confidence is the cell's b level.
template <typename T>
std::vector<PredictionRecord> sample_prediction_log(const DecisionProcess<T>& proc, const SyntheticLogOptions& opts) {
  const auto cells = proc.support();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const Cell& c : cells) {
    acc += to_double(proc.weight(c));
    cumulative.push_back(acc);
  }
  if (opts.participants == 0) throw InvalidArgument("need at least one participant");
  Rng rng(substream_seed(opts.seed, "synthetic-log"));
  std::vector<PredictionRecord> out;
  out.reserve(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    const Cell& c = cells[rng.categorical(cumulative)];
    const int y = rng.bernoulli(to_double(proc.rate(c))) ? 1 : 0;
    const double h = std::clamp(to_double(proc.h_values()[c.h]) + rng.uniform(-opts.h_jitter, opts.h_jitter), 0.0, 1.0);
    const double b = to_double(proc.b_values()[c.b]);
    const double h_ai = std::clamp(h + opts.advice_weight * (b - h) + rng.uniform(-opts.advice_noise, opts.advice_noise), 0.0, 1.0);
    const std::size_t participant = rng.below(opts.participants);
    PredictionRecord r;
    r.task = opts.task;
    r.participant = "p" + std::to_string(participant);
    r.instance = "i" + std::to_string(i);
    r.y = y;
    r.b_hat = inverse_transform_confidence(b, y);
    r.h_hat = inverse_transform_confidence(h, y);
    r.h_ai_hat = inverse_transform_confidence(h_ai, y);
    r.country = opts.country;
    r.told_accuracy = opts.told_accuracy;
    r.group = participant % 2 == 0 ? "treatment" : "control";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace alignedcal
