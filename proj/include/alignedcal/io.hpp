#pragma once

// JSON and CSV renderings of the library's values.

#include "alignedcal/constructions.hpp"
#include "alignedcal/core.hpp"
#include "alignedcal/data.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/multical.hpp"
#include "alignedcal/policy.hpp"
#include "alignedcal/rational.hpp"

#include "json.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace alignedcal {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Scalars

/// Rationals become "p/q" strings when `exact`, numbers otherwise.
template <typename T>
Json scalar_json(const T& v, bool exact = true) {
  if constexpr (ScalarTraits<T>::exact) {
    if (exact) return to_string(v);
    return to_double(v);
  } else {
    return v;
  }
}

template <typename T>
T scalar_from_json(const Json& j) {
  if (j.is_string()) {
    const Rational r = parse_rational(j.get<std::string>());
    if constexpr (ScalarTraits<T>::exact) {
      return r;
    } else {
      return to_double(r);
    }
  }
  if (!j.is_number()) throw InvalidArgument(detail::concat("expected a number, got ", j.dump()));
  return scalar_from_double<T>(j.get<double>());
}

/// True when any scalar in the document is written as a string.
inline bool json_has_string_scalars(const Json& j) {
  if (j.is_string()) return true;
  if (j.is_array() || j.is_object()) {
    for (const auto& v : j)
      if (json_has_string_scalars(v)) return true;
  }
  return false;
}

inline Json cell_json(const Cell& c) {
  auto idx = [](std::size_t i) { return i == Witness::kAllRows ? Json("all") : Json(i); };
  return Json::array({idx(c.h), idx(c.b)});
}

// ---------------------------------------------------------------------------
// Utility and process

template <typename T>
Json utility_json(const Utility<T>& u, bool exact = true) {
  return Json{{"u11", scalar_json(u.u11, exact)},
              {"u10", scalar_json(u.u10, exact)},
              {"u00", scalar_json(u.u00, exact)},
              {"u01", scalar_json(u.u01, exact)}};
}

/// Accepts {"u11":..,"u10":..,"u00":..,"u01":..} or [u11,u10,u00,u01].
template <typename T>
Utility<T> utility_from_json(const Json& j) {
  Utility<T> u;
  if (j.is_array()) {
    if (j.size() != 4) throw InvalidArgument("utility array needs four entries u11,u10,u00,u01");
    u = {scalar_from_json<T>(j[0]), scalar_from_json<T>(j[1]), scalar_from_json<T>(j[2]), scalar_from_json<T>(j[3])};
  } else {
    u = {scalar_from_json<T>(j.at("u11")), scalar_from_json<T>(j.at("u10")), scalar_from_json<T>(j.at("u00")),
         scalar_from_json<T>(j.at("u01"))};
  }
  u.validate();
  return u;
}

template <typename T>
Json process_json(const DecisionProcess<T>& proc, bool exact = true) {
  Json j;
  Json h = Json::array(), b = Json::array(), w = Json::array(), r = Json::array();
  for (const auto& v : proc.h_values()) h.push_back(scalar_json(v, exact));
  for (const auto& v : proc.b_values()) b.push_back(scalar_json(v, exact));
  for (std::size_t i = 0; i < proc.rows(); ++i) {
    Json wr = Json::array(), rr = Json::array();
    for (std::size_t k = 0; k < proc.cols(); ++k) {
      wr.push_back(scalar_json(proc.weight()(i, k), exact));
      const auto& rate = proc.rate()(i, k);
      rr.push_back(proc.in_support({i, k}) && rate ? scalar_json(*rate, exact) : Json(nullptr));
    }
    w.push_back(std::move(wr));
    r.push_back(std::move(rr));
  }
  j["h_values"] = std::move(h);
  j["b_values"] = std::move(b);
  j["weight"] = std::move(w);
  j["rate"] = std::move(r);
  j["utility"] = utility_json(proc.utility(), exact);
  return j;
}

template <typename T>
DecisionProcess<T> process_from_json(const Json& j) {
  for (const char* key : {"h_values", "b_values", "weight", "rate"})
    if (!j.contains(key)) throw InvalidArgument(detail::concat("process document lacks \"", key, "\""));
  std::vector<T> h, b;
  for (const auto& v : j.at("h_values")) h.push_back(scalar_from_json<T>(v));
  for (const auto& v : j.at("b_values")) b.push_back(scalar_from_json<T>(v));
  const auto& w = j.at("weight");
  const auto& r = j.at("rate");
  if (w.size() != h.size() || r.size() != h.size()) throw InvalidArgument("weight/rate rows must match h_values");
  Grid<T> weight(h.size(), b.size(), T(0));
  Grid<std::optional<T>> rate(h.size(), b.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (w[i].size() != b.size() || r[i].size() != b.size()) throw InvalidArgument("weight/rate columns must match b_values");
    for (std::size_t k = 0; k < b.size(); ++k) {
      weight(i, k) = scalar_from_json<T>(w[i][k]);
      if (!r[i][k].is_null()) rate(i, k) = scalar_from_json<T>(r[i][k]);
    }
  }
  const Utility<T> u = j.contains("utility") ? utility_from_json<T>(j.at("utility")) : symmetric_utility<T>();
  return DecisionProcess<T>(std::move(h), std::move(b), std::move(weight), std::move(rate), u);
}

// ---------------------------------------------------------------------------
// Construction spec

inline Json spec_json(const ConstructionSpec& s) {
  Json j{{"kind", to_string(s.kind)}, {"p_minus", s.p_minus}, {"p_plus", s.p_plus},
         {"utility", utility_json(s.utility)}};
  if (s.kind == ConstructionKind::Grid) {
    j["k"] = s.k;
    j["m"] = s.m;
  }
  if (s.kind == ConstructionKind::Continuous) {
    j["k"] = s.k;
    j["sub_bins"] = s.sub_bins;
    j["seed"] = s.seed;
  }
  return j;
}

inline ConstructionKind construction_kind_from_string(const std::string& s) {
  if (s == "small3x3" || s == "small_3x3") return ConstructionKind::Small3x3;
  if (s == "grid") return ConstructionKind::Grid;
  if (s == "continuous") return ConstructionKind::Continuous;
  throw InvalidArgument("unknown construction kind '" + s + "'");
}

inline ConstructionSpec spec_from_json(const Json& j) {
  ConstructionSpec s;
  s.kind = construction_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("k")) s.k = j.at("k").get<std::size_t>();
  if (j.contains("m")) s.m = j.at("m").get<std::size_t>();
  if (j.contains("sub_bins")) s.sub_bins = j.at("sub_bins").get<std::size_t>();
  if (j.contains("p_minus")) s.p_minus = scalar_from_json<double>(j.at("p_minus"));
  if (j.contains("p_plus")) s.p_plus = scalar_from_json<double>(j.at("p_plus"));
  if (j.contains("utility")) s.utility = utility_from_json<double>(j.at("utility"));
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

// ---------------------------------------------------------------------------
// Reports

inline Json witness_json(const Witness& w) {
  Json j{{"cell", cell_json(w.first)}};
  j["other"] = w.second ? cell_json(*w.second) : Json(nullptr);
  j["magnitude"] = w.magnitude;
  j["mass"] = w.mass;
  return j;
}

inline Json audit_json(const AuditReport& r) {
  Json j{{"check", to_string(r.kind)}, {"passed", r.passed}, {"alpha", r.alpha}, {"search", to_string(r.search)},
         {"excluded_mass", r.excluded_mass}};
  Json w = Json::array(), e = Json::array();
  for (const auto& x : r.witnesses) w.push_back(witness_json(x));
  for (const auto& x : r.exempted) e.push_back(witness_json(x));
  j["witnesses"] = std::move(w);
  j["exempted"] = std::move(e);
  return j;
}

template <typename T>
Json policy_json(const CellPolicy<T>& pol, bool exact = true) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < pol.p.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < pol.p.cols(); ++k) row.push_back(scalar_json(pol.p(i, k), exact));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
Json policy_result_json(const PolicyResult<T>& r, bool exact = true) {
  Json up = Json::array();
  for (const Cell& c : r.upset) up.push_back(cell_json(c));
  return Json{{"solver", r.solver},
              {"utility", scalar_json(r.utility, exact)},
              {"is_monotone", r.is_monotone},
              {"gap_to_optimal", scalar_json(r.gap_to_optimal, exact)},
              {"upset", std::move(up)},
              {"policy", policy_json(r.policy, exact)}};
}

template <typename T>
Json misalignment_json(const MisalignmentMetrics<T>& m, bool exact = true) {
  return Json{{"violation_count", m.violation_count},
              {"pair_count", m.pair_count},
              {"eae", scalar_json(m.eae, exact)},
              {"mae", scalar_json(m.mae, exact)},
              {"insufficient_cells", m.insufficient}};
}

template <typename T>
Json miscalibration_json(const MiscalibrationMetrics<T>& m, bool exact = true) {
  return Json{{"ece", scalar_json(m.ece, exact)}, {"mce", scalar_json(m.mce, exact)}};
}

inline Json confidence_function_json(const DiscretizedConfidenceFunction& fn) {
  Json j{{"method", fn.method}, {"h_values", fn.h_values}};
  Json strata = Json::array();
  for (const auto& s : fn.strata) strata.push_back(Json{{"edges", s.edges}, {"outputs", s.outputs}});
  j["strata"] = std::move(strata);
  if (fn.uniform_bins) {
    j["uniform_bins"] = *fn.uniform_bins;
    Json shifts = Json::array();
    for (const auto& s : fn.shifts) shifts.push_back(Json{{"h", s.h}, {"bin", s.bin}, {"delta", s.delta}});
    j["shifts"] = std::move(shifts);
  }
  return j;
}

inline DiscretizedConfidenceFunction confidence_function_from_json(const Json& j) {
  DiscretizedConfidenceFunction fn;
  fn.method = j.value("method", std::string());
  fn.h_values = j.at("h_values").get<std::vector<double>>();
  for (const auto& s : j.at("strata")) {
    DiscretizedConfidenceFunction::Stratum st;
    st.edges = s.at("edges").get<std::vector<double>>();
    st.outputs = s.at("outputs").get<std::vector<double>>();
    if (st.edges.size() != st.outputs.size() + 1) throw InvalidArgument("stratum needs one more edge than outputs");
    fn.strata.push_back(std::move(st));
  }
  if (fn.strata.size() != fn.h_values.size()) throw InvalidArgument("one stratum per h value required");
  if (j.contains("uniform_bins")) {
    fn.uniform_bins = j.at("uniform_bins").get<std::size_t>();
    for (const auto& s : j.at("shifts"))
      fn.shifts.push_back({s.at("h").get<std::size_t>(), s.at("bin").get<std::size_t>(), s.at("delta").get<double>()});
  }
  return fn;
}

inline Json update_json(const UpdateRecord& u) {
  return Json{{"round", u.round},
              {"h", u.h},
              {"bin", u.bin},
              {"count", u.count},
              {"mean_confidence", u.mean_confidence},
              {"positive_rate", u.positive_rate},
              {"delta", u.delta},
              {"potential_before", u.potential_before},
              {"potential_after", u.potential_after}};
}

// ---------------------------------------------------------------------------
// CSV exports

namespace detail {

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return shortest_decimal(v);
}

template <typename T>
std::string csv_optional(const std::optional<T>& v) {
  return v ? csv_number(*v) : std::string();
}

}  // namespace detail

inline void write_cell_table_csv(std::ostream& out, const CellTable& t) {
  out << "h_bin,h_value,b_bin,b_center,count,positives,pos_rate,mean_b\n";
  for (std::size_t h = 0; h < t.rows(); ++h)
    for (std::size_t b = 0; b < t.cols(); ++b)
      out << h << ',' << detail::csv_number(t.h_values[h]) << ',' << b << ',' << detail::csv_number(t.b_bins.center(b))
          << ',' << t.count(h, b) << ',' << t.positives(h, b) << ',' << detail::csv_optional(t.pos_rate(h, b)) << ','
          << detail::csv_optional(t.mean_b(h, b)) << '\n';
}

inline void write_shift_table_csv(std::ostream& out, const ShiftTable& t) {
  out << "h_bin,h_value,b_bin,b_center,count,mean_shift,lower,upper\n";
  for (std::size_t h = 0; h < t.h_values.size(); ++h)
    for (std::size_t b = 0; b < t.b_bins.size(); ++b)
      out << h << ',' << detail::csv_number(t.h_values[h]) << ',' << b << ',' << detail::csv_number(t.b_bins.center(b))
          << ',' << t.count(h, b) << ',' << detail::csv_optional(t.mean(h, b)) << ','
          << detail::csv_optional(t.lower(h, b)) << ',' << detail::csv_optional(t.upper(h, b)) << '\n';
}

inline void write_roc_csv(std::ostream& out, const RocCurve& roc) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points)
    out << detail::csv_number(p.threshold) << ',' << detail::csv_number(p.fpr) << ',' << detail::csv_number(p.tpr) << '\n';
}

inline Json task_report_json(const TaskReport& r) {
  Json decreases = Json::array();
  for (const auto& d : r.shift.decreases)
    decreases.push_back(Json{{"h_bin", d.h}, {"b_bin", d.b}, {"difference", d.difference}, {"upper", d.upper}});
  return Json{{"task", r.task},
              {"records", r.records},
              {"participants", r.participants},
              {"h_bin_values", r.cells.h_bins.values},
              {"misalignment", misalignment_json(r.misalignment)},
              {"miscalibration", miscalibration_json(r.miscalibration)},
              {"auc", Json{{"pi_B", r.roc_b.auc}, {"pi_H", r.roc_h.auc}, {"pi_H_AI", r.roc_h_ai.auc}}},
              {"shift_significant_decreases", std::move(decreases)}};
}

// ---------------------------------------------------------------------------
// Calibration samples

/// CSV with columns h, b, y. Distinct h values, sorted, become the strata.
inline CalibrationSet read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty CSV: no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  auto find = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(detail::concat("CSV header lacks column '", name, "'"));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ch = find("h"), cb = find("b"), cy = find("y");
  std::vector<std::tuple<double, double, int>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() <= std::max({ch, cb, cy})) throw InputError(detail::concat("line ", line_no, ": too few fields"));
    try {
      const double h = detail::parse_double_field(f[ch], "h");
      const double b = detail::parse_double_field(f[cb], "b");
      if (f[cy] != "0" && f[cy] != "1") throw InputError("y must be 0 or 1, got '" + f[cy] + "'");
      if (b < 0.0 || b > 1.0) throw InputError(detail::concat("b ", b, " outside [0,1]"));
      rows.emplace_back(h, b, f[cy] == "1" ? 1 : 0);
    } catch (const InvalidArgument& e) {
      throw InputError(detail::concat("line ", line_no, ": ", e.what()));
    }
  }
  if (rows.empty()) throw InputError("calibration CSV has no rows");
  CalibrationSet set;
  for (const auto& r : rows) set.h_values.push_back(std::get<0>(r));
  std::sort(set.h_values.begin(), set.h_values.end());
  set.h_values.erase(std::unique(set.h_values.begin(), set.h_values.end()), set.h_values.end());
  for (const auto& [h, b, y] : rows) {
    const auto idx = std::lower_bound(set.h_values.begin(), set.h_values.end(), h) - set.h_values.begin();
    set.samples.push_back({static_cast<std::size_t>(idx), b, y});
  }
  return set;
}

inline void write_calibration_csv(std::ostream& out, const CalibrationSet& set) {
  out << "h,b,y\n";
  for (const auto& s : set.samples)
    out << shortest_decimal(set.h_values[s.h]) << ',' << shortest_decimal(s.b_raw) << ',' << s.y << '\n';
}

/// Prediction log as calibration samples: transformed b and y, with h taken
/// from equal-mass bins of the transformed human confidence.
inline CalibrationSet calibration_set_from_log(const std::vector<TransformedRecord>& records,
                                               std::size_t h_bins = kDefaultHBins) {
  if (records.empty()) throw InputError("prediction log has no records");
  std::vector<double> h;
  for (const auto& r : records) h.push_back(r.h);
  const HBinning bins = HBinning::equal_mass(h, h_bins);
  CalibrationSet set;
  set.h_values = bins.values;
  for (const auto& r : records) set.samples.push_back({bins.index(r.h), r.b, r.y});
  return set;
}

}  // namespace alignedcal
