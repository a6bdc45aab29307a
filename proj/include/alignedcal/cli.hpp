#pragma once

// Command-line front end. `run_cli` parses argv and dispatches to the
// subcommands; it is a header so tests can drive it in-process.
//
// Exit codes: 0 success or pass, 1 audit failure, 2 input error.

#include "alignedcal/alignedcal.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace alignedcal::cli {

inline constexpr const char* kToolName = "alignedcal";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "ALIGNEDCAL_OUT_DIR";

enum ExitCode : int { kOk = 0, kAuditFail = 1, kInputError = 2 };

namespace fs = std::filesystem;

/// Run directory with a manifest of the configuration and written files.
class RunDir {
 public:
  RunDir(const std::string& out_dir, const std::string& name, std::string command, Json config)
      : path_(fs::path(out_dir) / name), command_(std::move(command)), config_(std::move(config)) {
    fs::create_directories(path_);
  }

  const fs::path& path() const { return path_; }

  void write(const std::string& file, const std::string& content) {
    std::ofstream out(path_ / file, std::ios::binary);
    if (!out) throw InputError("cannot write " + (path_ / file).string());
    out << content;
    files_.push_back(file);
  }

  void write_json(const std::string& file, const Json& j) { write(file, j.dump(2) + "\n"); }

  void finish() {
    std::sort(files_.begin(), files_.end());
    Json manifest{{"tool", kToolName},
                  {"version", kToolVersion},
                  {"json_library", detail::concat(NLOHMANN_JSON_VERSION_MAJOR, ".", NLOHMANN_JSON_VERSION_MINOR, ".",
                                                  NLOHMANN_JSON_VERSION_PATCH)},
                  {"command", command_},
                  {"config", config_},
                  {"outputs", files_}};
    std::ofstream out(path_ / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

 private:
  fs::path path_;
  std::string command_;
  Json config_;
  std::vector<std::string> files_;
};

struct Common {
  std::string out_dir;
  std::string run_name;
};

inline std::string default_out_dir() {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "alignedcal-runs";
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(detail::concat(path, ": ", e.what()));
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

inline Utility<double> parse_utility(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) v.push_back(to_double(parse_rational(part)));
  if (v.size() != 4) throw InvalidArgument("--utility needs four comma-separated values u11,u10,u00,u01");
  Utility<double> u{v[0], v[1], v[2], v[3]};
  u.validate();
  return u;
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream oss;
  oss << std::setprecision(precision) << v;
  return oss.str();
}

template <typename T>
std::string fmt_scalar(const T& v) {
  if constexpr (ScalarTraits<T>::exact) {
    return to_string(v) + " (" + fmt(to_double(v), 6) + ")";
  } else {
    return fmt(v, 6);
  }
}

inline std::string cell_label(const Cell& c) {
  auto idx = [](std::size_t i) { return i == Witness::kAllRows ? std::string("*") : std::to_string(i); };
  return "(" + idx(c.h) + "," + idx(c.b) + ")";
}

inline std::string witness_label(const Witness& w) {
  std::string s = cell_label(w.first);
  if (w.second) s += " > " + cell_label(*w.second);
  return s + " gap " + fmt(w.magnitude);
}

// ---------------------------------------------------------------------------
// construct

struct ConstructArgs {
  std::string kind;
  double p_minus = 0.2, p_plus = 0.8;
  std::string utility = "1,0,1,0";
  std::size_t k = 3, m = 4, sub_bins = 16, rows = 4, cols = 4;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  std::string spec_file;
  std::string output;
  bool exact = false;
};

template <typename T>
void describe_process(std::ostream& out, const DecisionProcess<T>& proc) {
  const auto marg = marginal_rates(proc);
  out << "b_values:";
  for (const auto& b : proc.b_values()) out << ' ' << fmt_scalar(b);
  out << "\nP(Y=1|H):";
  for (const auto& r : marg.by_h) out << ' ' << (r ? fmt_scalar(*r) : std::string("undefined"));
  out << (non_decreasing(marg.by_h) ? "  (monotone)" : "  (not monotone)") << "\n";
  const auto cal = check_calibration(view_of(proc), 0.0);
  out << "calibrated at alpha=0: " << (cal.passed ? "yes" : "no") << "\n";
  const auto opt = optimal_policy(proc);
  const auto mono = optimal_monotone_policy(proc);
  out << "optimal utility: " << fmt_scalar(opt.utility) << "\n";
  out << "optimal monotone utility: " << fmt_scalar(mono.utility) << "\n";
  out << "gap: " << fmt_scalar(T(opt.utility - mono.utility)) << "\n";
}

inline int cmd_construct(const ConstructArgs& a, const Common& common, std::ostream& out) {
  ConstructionSpec spec;
  if (!a.spec_file.empty()) {
    spec = spec_from_json(read_json_file(a.spec_file));
  } else {
    if (a.kind == "random-aligned") {
      spec.kind = ConstructionKind::Grid;  // placeholder, unused
    } else {
      spec.kind = construction_kind_from_string(a.kind);
    }
    spec.p_minus = a.p_minus;
    spec.p_plus = a.p_plus;
    spec.utility = parse_utility(a.utility);
    spec.k = a.k;
    spec.m = a.m;
    spec.sub_bins = a.sub_bins;
    spec.seed = a.seed;
  }
  Json config{{"kind", a.spec_file.empty() ? a.kind : to_string(spec.kind)}, {"exact", a.exact}};
  if (a.kind == "random-aligned") {
    config.update(Json{{"alpha", a.alpha}, {"rows", a.rows}, {"cols", a.cols}, {"seed", a.seed}, {"utility", a.utility}});
  } else {
    config["spec"] = spec_json(spec);
  }
  RunDir run(common.out_dir, common.run_name.empty() ? "construct" : common.run_name, "construct", config);
  Json doc;
  if (a.kind == "random-aligned" && a.spec_file.empty()) {
    const auto proc = build_random_aligned(a.alpha, a.rows, a.cols, a.seed, parse_utility(a.utility));
    doc = process_json(proc);
    describe_process(out, proc);
  } else if (spec.kind == ConstructionKind::Continuous) {
    const auto proc = build_continuous(spec);
    doc = process_json(proc);
    describe_process(out, proc);
  } else {
    const auto proc = spec.kind == ConstructionKind::Small3x3 ? build_small_example(spec) : build_grid(spec);
    doc = process_json(proc, a.exact);
    describe_process(out, proc);
  }
  run.write_json("process.json", doc);
  if (!a.output.empty()) {
    std::ofstream f(a.output, std::ios::binary);
    if (!f) throw InputError("cannot write " + a.output);
    f << doc.dump(2) << "\n";
  }
  run.finish();
  out << "wrote " << (run.path() / "process.json").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
  std::string process;
  std::string log;
  std::string task;
  std::vector<std::string> checks;
  double alpha = 0.1;
  std::string search = "auto";
  std::size_t min_count = 30;
};

inline AlignmentOptions alignment_options(const std::string& search) {
  AlignmentOptions o;
  if (search == "greedy") o.search = AlignmentSearch::Greedy;
  else if (search == "exhaustive") o.search = AlignmentSearch::Exhaustive;
  else if (search == "auto") o.search = AlignmentSearch::Auto;
  else throw InvalidArgument("--search must be greedy, exhaustive or auto");
  return o;
}

template <typename T>
int run_audits(const CellView<T>& view, const AuditArgs& a, RunDir& run, Json report, std::ostream& out) {
  const AlignmentOptions opts = alignment_options(a.search);
  bool all = true;
  Json checks = Json::array();
  for (const auto& name : a.checks) {
    AuditReport r;
    if (name == "calibration") r = check_calibration(view, a.alpha);
    else if (name == "multicalibration") r = check_multicalibration(view, a.alpha);
    else if (name == "alignment") r = check_alignment(view, a.alpha, opts);
    else if (name == "aligned-calibration") r = check_aligned_calibration(view, a.alpha, opts);
    else throw InvalidArgument("unknown check '" + name + "'");
    all = all && r.passed;
    out << std::left << std::setw(20) << name << (r.passed ? "pass" : "FAIL") << "  alpha=" << fmt(a.alpha)
        << "  excluded_mass=" << fmt(r.excluded_mass);
    if (r.kind == AuditKind::Alignment || r.kind == AuditKind::AlignedCalibration) out << "  search=" << to_string(r.search);
    out << "\n";
    if (!r.witnesses.empty()) out << "  worst witness: " << witness_label(r.witnesses.front()) << "\n";
    checks.push_back(audit_json(r));
  }
  const auto mis = misalignment_metrics(view);
  const auto cal = miscalibration_metrics(view);
  out << "EAE " << fmt(to_double(mis.eae)) << "  MAE " << fmt(to_double(mis.mae)) << "  violations "
      << mis.violation_count << "/" << mis.pair_count << "  ECE " << fmt(to_double(cal.ece)) << "  MCE "
      << fmt(to_double(cal.mce)) << "\n";
  report["checks"] = std::move(checks);
  report["misalignment"] = misalignment_json(mis);
  report["miscalibration"] = miscalibration_json(cal);
  report["passed"] = all;
  run.write_json("report.json", report);
  run.finish();
  return all ? kOk : kAuditFail;
}

inline int cmd_audit(AuditArgs a, const Common& common, std::ostream& out) {
  if (a.process.empty() == a.log.empty()) throw InvalidArgument("audit needs exactly one of --process or --log");
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw InvalidArgument("--alpha must lie in [0,1]");
  if (a.checks.empty()) a.checks = {"calibration", "alignment"};
  alignment_options(a.search);
  Json config{{"process", a.process}, {"log", a.log}, {"task", a.task}, {"checks", a.checks},
              {"alpha", a.alpha},     {"search", a.search}, {"min_count", a.min_count}};
  RunDir run(common.out_dir, common.run_name.empty() ? "audit" : common.run_name, "audit", config);
  if (!a.process.empty()) {
    const Json doc = read_json_file(a.process);
    if (json_has_string_scalars(doc)) {
      const auto proc = process_from_json<Rational>(doc);
      return run_audits(view_of(proc), a, run, Json{{"input", "process"}, {"exact", true}}, out);
    }
    const auto proc = process_from_json<double>(doc);
    return run_audits(view_of(proc), a, run, Json{{"input", "process"}, {"exact", false}}, out);
  }
  auto in = open_input(a.log);
  const auto records = transform_all(read_prediction_csv(in).records);
  if (records.empty()) throw InputError("prediction log has no records");
  const std::string task = a.task.empty() ? task_names(records).front() : a.task;
  const TaskCells cells = bin_task(records, task, a.min_count);
  return run_audits(view_of(cells.table, true), a, run, Json{{"input", "log"}, {"task", task}}, out);
}

// ---------------------------------------------------------------------------
// policy

struct PolicyArgs {
  std::string process;
  std::optional<double> alpha;
  std::string solver = "auto";
  std::string search = "auto";
  bool exact = false;
};

template <typename T>
int run_policy(const DecisionProcess<T>& proc, const PolicyArgs& a, RunDir& run, std::ostream& out, bool exact) {
  MonotoneSolver solver = MonotoneSolver::Auto;
  if (a.solver == "exhaustive") solver = MonotoneSolver::Exhaustive;
  else if (a.solver == "mincut") solver = MonotoneSolver::MinCut;
  else if (a.solver != "auto") throw InvalidArgument("--solver must be auto, exhaustive or mincut");
  const AlignmentOptions opts = alignment_options(a.search);
  const auto view = view_of(proc);
  const double alpha = a.alpha ? *a.alpha : alignment_level(view, 1e-4, opts);
  const auto audit = check_alignment(view, alpha, opts);
  const auto opt = optimal_policy(proc);
  const auto mono = optimal_monotone_policy(proc, solver);
  const auto repaired = monotone_repair(proc, opt.policy, audit);
  const T repaired_utility = expected_utility(proc, repaired);
  const T gap = opt.utility - mono.utility;
  const T bound = monotone_gap_bound(alpha, proc.utility());
  const bool within = to_double(gap) <= to_double(bound) + 1e-9;
  out << "alpha: " << fmt(alpha, 6) << (a.alpha ? "" : " (smallest passing level found by bisection)")
      << "  alignment audit: " << (audit.passed ? "pass" : "FAIL") << "\n";
  out << "optimal utility: " << fmt_scalar(opt.utility) << "\n";
  out << "optimal monotone utility: " << fmt_scalar(mono.utility) << "  (solver " << mono.solver << ")\n";
  out << "repaired policy utility: " << fmt_scalar(repaired_utility) << "\n";
  out << "gap: " << fmt_scalar(gap) << "\n";
  out << "bound: " << fmt_scalar(bound) << "\n";
  out << "bound satisfied: " << (within ? "yes" : "no") << "\n";
  Json doc{{"alpha", alpha},
           {"alpha_from_bisection", !a.alpha.has_value()},
           {"alignment", audit_json(audit)},
           {"optimal", policy_result_json(opt, exact)},
           {"optimal_monotone", policy_result_json(mono, exact)},
           {"repaired", Json{{"utility", scalar_json(repaired_utility, exact)},
                             {"is_monotone", is_monotone(repaired, proc)},
                             {"policy", policy_json(repaired, exact)}}},
           {"gap", scalar_json(gap, exact)},
           {"bound", scalar_json(bound, exact)},
           {"bound_satisfied", within}};
  run.write_json("policy.json", doc);
  run.finish();
  return audit.passed && within ? kOk : kAuditFail;
}

inline int cmd_policy(const PolicyArgs& a, const Common& common, std::ostream& out) {
  if (a.alpha && !(*a.alpha >= 0.0 && *a.alpha <= 1.0)) throw InvalidArgument("--alpha must lie in [0,1]");
  Json config{{"process", a.process}, {"solver", a.solver}, {"search", a.search}, {"exact", a.exact}};
  config["alpha"] = a.alpha ? Json(*a.alpha) : Json(nullptr);
  RunDir run(common.out_dir, common.run_name.empty() ? "policy" : common.run_name, "policy", config);
  const Json doc = read_json_file(a.process);
  if (json_has_string_scalars(doc)) return run_policy(process_from_json<Rational>(doc), a, run, out, a.exact);
  return run_policy(process_from_json<double>(doc), a, run, out, false);
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string log;
  std::string method = "umd";
  std::size_t bins = 8;
  std::optional<double> alpha;
  std::optional<double> alpha_prime;
  double lambda = 0.125;
  double xi = 0.1;
  std::optional<std::size_t> max_rounds;
  bool jitter = false;
  std::uint64_t seed = 0;
  std::size_t min_count = 30;
};

inline CalibrationSet load_calibration_input(const std::string& path) {
  auto in = open_input(path);
  std::string header;
  std::getline(in, header);
  in.clear();
  in.seekg(0);
  const auto cols = detail::split_csv_line(header);
  if (std::find(cols.begin(), cols.end(), "b_hat") != cols.end())
    return calibration_set_from_log(transform_all(read_prediction_csv(in).records));
  return read_calibration_csv(in);
}

inline Json table_summary(const CellTable& t) {
  const auto view = view_of(t, true);
  const auto mis = misalignment_metrics(view);
  const auto cal = miscalibration_metrics(t);
  return Json{{"alignment_level", alignment_level(view)},
              {"eae", mis.eae},
              {"mae", mis.mae},
              {"ece", cal.ece},
              {"mce", cal.mce}};
}

inline int cmd_calibrate(const CalibrateArgs& a, const Common& common, std::ostream& out) {
  const CalibrationSet set = load_calibration_input(a.log);
  set.validate();
  const auto sizes = set.stratum_sizes();
  const std::size_t n_groups = set.h_values.size();
  Json config{{"log", a.log},        {"method", a.method}, {"bins", a.bins}, {"lambda", a.lambda},
              {"xi", a.xi},          {"jitter", a.jitter}, {"seed", a.seed}, {"min_count", a.min_count}};
  config["alpha"] = a.alpha ? Json(*a.alpha) : Json(nullptr);
  config["alpha_prime"] = a.alpha_prime ? Json(*a.alpha_prime) : Json(nullptr);
  config["max_rounds"] = a.max_rounds ? Json(*a.max_rounds) : Json(nullptr);

  LambdaBinning bins;
  std::size_t floor = 0;
  if (a.method == "umd") {
    bins = LambdaBinning(a.bins);
    if (a.alpha) floor = umd_min_group_size_for_bins(*a.alpha, a.bins, a.xi, n_groups);
  } else if (a.method == "iterative") {
    bins = LambdaBinning::from_lambda(a.lambda);
    if (a.alpha) floor = umd_min_group_size(*a.alpha, a.lambda, a.xi, n_groups);
    if (!a.alpha && !a.alpha_prime) throw InvalidArgument("iterative method needs --alpha or --alpha-prime");
  } else {
    throw InvalidArgument("--method must be umd or iterative");
  }
  for (std::size_t h = 0; h < n_groups; ++h) {
    if (sizes[h] < floor) {
      throw InvalidArgument(detail::concat("stratum h=", set.h_values[h], " has ", sizes[h],
                                           " samples; the sample-size floor is n_min=", floor));
    }
  }
  RunDir run(common.out_dir, common.run_name.empty() ? "calibrate" : common.run_name, "calibrate", config);
  DiscretizedConfidenceFunction fn;
  Json extra;
  if (a.method == "umd") {
    fn = multicalibrate_umd(set, UmdOptions{a.bins, floor, a.jitter, a.seed});
  } else {
    const double ap = a.alpha_prime ? *a.alpha_prime : *a.alpha / 2.0;
    IterativeOptions opts;
    opts.max_rounds = a.max_rounds;
    auto res = multicalibrate_iterative(set, ap, a.lambda, opts);
    fn = res.function;
    Json updates = Json::array();
    for (const auto& u : res.updates) updates.push_back(update_json(u));
    extra = Json{{"alpha_prime", ap}, {"rounds", res.rounds}, {"updates", std::move(updates)}};
    const auto audit = check_discretized_multicalibration(recalibrated_table(set, fn, bins, a.min_count), ap, a.lambda);
    extra["discretized_multicalibration"] = audit_json(audit);
  }
  CellTable before = raw_table(set, bins, a.min_count);
  CellTable after = recalibrated_table(set, fn, bins, a.min_count);
  const Json b = table_summary(before), f = table_summary(after);
  out << std::left << std::setw(18) << "metric" << std::setw(12) << "before" << "after\n";
  for (const char* key : {"alignment_level", "eae", "mae", "ece", "mce"})
    out << std::setw(18) << key << std::setw(12) << fmt(b[key].get<double>()) << fmt(f[key].get<double>()) << "\n";
  run.write_json("function.json", confidence_function_json(fn));
  Json report{{"method", a.method}, {"strata", n_groups}, {"stratum_sizes", sizes}, {"before", b}, {"after", f}};
  if (!extra.is_null()) report["iterative"] = extra;
  run.write_json("report.json", report);
  run.finish();
  return kOk;
}

// ---------------------------------------------------------------------------
// repro

struct ReproArgs {
  std::string data;
  std::string mapping;
  bool skip_bad_rows = false;
  bool no_filter = false;
  std::string country = "US";
  double told_accuracy = 80.0;
  std::vector<std::string> tasks;
  std::size_t resamples = 1000;
  bool cluster = false;
  std::uint64_t seed = 0;
  std::size_t min_count = 30;
};

inline std::string file_token(const std::string& task) {
  std::string s;
  for (char ch : task) s.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
  return s;
}

inline std::string table1_text(const std::vector<TaskReport>& reports) {
  std::ostringstream t;
  t << std::left << std::setw(14) << "Task" << std::setw(11) << "EAE" << std::setw(9) << "MAE" << std::setw(9)
    << "ECE" << std::setw(9) << "MCE" << std::setw(9) << "AUC_B" << std::setw(9) << "AUC_H" << "AUC_H+AI\n";
  for (const auto& r : reports) {
    std::ostringstream eae;
    eae << std::scientific << std::setprecision(1) << r.misalignment.eae;
    auto pct = [](double v) { return detail::concat(std::fixed, std::setprecision(1), 100.0 * v, "%"); };
    t << std::setw(14) << r.task << std::setw(11) << eae.str() << std::setw(9)
      << detail::concat(std::fixed, std::setprecision(3), r.misalignment.mae) << std::setw(9)
      << detail::concat(std::fixed, std::setprecision(3), r.miscalibration.ece) << std::setw(9)
      << detail::concat(std::fixed, std::setprecision(3), r.miscalibration.mce) << std::setw(9) << pct(r.roc_b.auc)
      << std::setw(9) << pct(r.roc_h.auc) << pct(r.roc_h_ai.auc) << "\n";
  }
  return t.str();
}

inline int cmd_repro(const ReproArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  CsvOptions csv;
  csv.skip_bad_rows = a.skip_bad_rows;
  if (!a.mapping.empty()) csv.mapping = ColumnMapping::from_json(read_json_file(a.mapping));
  auto in = open_input(a.data);
  LoadResult loaded = read_prediction_csv(in, csv);
  for (const auto& e : loaded.skipped) err << "warning: skipped line " << e.line << ": " << e.message << "\n";
  if (loaded.records.empty()) throw InputError("prediction log has no records");
  std::vector<PredictionRecord> cohort = loaded.records;
  Json warnings = Json::array();
  if (!a.no_filter) {
    auto filtered = filter_cohort(loaded.records, a.country, a.told_accuracy);
    if (filtered.warning) {
      err << "warning: " << *filtered.warning << "\n";
      warnings.push_back(*filtered.warning);
    }
    cohort = std::move(filtered.records);
  }
  const auto records = transform_all(cohort);
  std::vector<std::string> tasks = a.tasks.empty() ? task_names(cohort) : a.tasks;
  Json config{{"data", a.data},         {"mapping", a.mapping},     {"skip_bad_rows", a.skip_bad_rows},
              {"filter", !a.no_filter}, {"country", a.country},     {"told_accuracy", a.told_accuracy},
              {"tasks", a.tasks},       {"resamples", a.resamples}, {"cluster_by_participant", a.cluster},
              {"seed", a.seed},         {"min_count", a.min_count}};
  RunDir run(common.out_dir, common.run_name.empty() ? "repro" : common.run_name, "repro", config);
  ReproOptions opts;
  opts.min_count = a.min_count;
  opts.bootstrap.resamples = a.resamples;
  opts.bootstrap.cluster_by_participant = a.cluster;
  opts.bootstrap.seed = a.seed;
  std::vector<TaskReport> reports;
  const auto present = task_names(cohort);
  for (const auto& task : tasks) {
    if (std::find(present.begin(), present.end(), task) == present.end()) {
      const std::string w = "task '" + task + "' has no records";
      err << "warning: " << w << "\n";
      warnings.push_back(w);
      continue;
    }
    reports.push_back(analyze_task(records, task, opts));
  }
  if (reports.empty()) throw InputError("no task could be analysed");
  Json tasks_json = Json::array();
  for (const auto& r : reports) {
    tasks_json.push_back(task_report_json(r));
    const std::string tok = file_token(r.task);
    std::ostringstream cells, shift, roc_b, roc_h, roc_hai;
    write_cell_table_csv(cells, r.cells.table);
    write_shift_table_csv(shift, r.shift.table);
    write_roc_csv(roc_b, r.roc_b);
    write_roc_csv(roc_h, r.roc_h);
    write_roc_csv(roc_hai, r.roc_h_ai);
    run.write("cells_" + tok + ".csv", cells.str());
    run.write("shift_" + tok + ".csv", shift.str());
    run.write("roc_" + tok + "_B.csv", roc_b.str());
    run.write("roc_" + tok + "_H.csv", roc_h.str());
    run.write("roc_" + tok + "_H_AI.csv", roc_hai.str());
  }
  const std::string table = table1_text(reports);
  out << table;
  run.write("table1.txt", table);
  run.write_json("report.json", Json{{"records_loaded", loaded.records.size()},
                                     {"records_in_cohort", cohort.size()},
                                     {"participants_in_cohort", count_participants(cohort)},
                                     {"skipped_rows", loaded.skipped.size()},
                                     {"warnings", warnings},
                                     {"tasks", tasks_json}});
  run.finish();
  return kOk;
}

// ---------------------------------------------------------------------------
// synth-log

struct SynthArgs {
  std::string source = "small3x3";
  std::string process;
  std::size_t n = 20000;
  std::uint64_t seed = 7;
  std::string task = "synthetic";
  std::string output;
};

inline int cmd_synth_log(const SynthArgs& a, const Common& common, std::ostream& out) {
  Json config{{"source", a.source}, {"process", a.process}, {"n", a.n}, {"seed", a.seed}, {"task", a.task}};
  RunDir run(common.out_dir, common.run_name.empty() ? "synth-log" : common.run_name, "synth-log", config);
  std::ostringstream csv;
  if (a.source == "misaligned") {
    const auto model = ScoreModel::misaligned();
    CalibrationSet set;
    for (std::size_t h = 0; h < model.strata(); ++h) set.h_values.push_back(model.stratum(h).h_value);
    for (const auto& d : model.sample(a.n, a.seed)) set.samples.push_back({d.h, d.b, d.y});
    write_calibration_csv(csv, set);
  } else {
    SyntheticLogOptions opts;
    opts.n = a.n;
    opts.seed = a.seed;
    opts.task = a.task;
    if (a.source == "small3x3") {
      write_prediction_csv(csv, sample_prediction_log(build_small_example(ConstructionSpec{}), opts));
    } else if (a.source == "process") {
      const Json doc = read_json_file(a.process);
      if (json_has_string_scalars(doc)) {
        write_prediction_csv(csv, sample_prediction_log(process_from_json<Rational>(doc), opts));
      } else {
        write_prediction_csv(csv, sample_prediction_log(process_from_json<double>(doc), opts));
      }
    } else {
      throw InvalidArgument("--source must be small3x3, process or misaligned");
    }
  }
  run.write("log.csv", csv.str());
  if (!a.output.empty()) {
    std::ofstream f(a.output, std::ios::binary);
    if (!f) throw InputError("cannot write " + a.output);
    f << csv.str();
  }
  run.finish();
  out << "wrote " << a.n << " records to " << (run.path() / "log.csv").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Calibration, alignment and monotone-policy toolkit for AI-assisted decisions", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Common common;
  common.out_dir = default_out_dir();
  app.add_option("--out-dir", common.out_dir, "Directory receiving run directories (env " + std::string(kOutDirEnv) + ")");
  app.add_option("--run-name", common.run_name, "Run directory name (defaults to the subcommand)");

  ConstructArgs ca;
  auto* construct = app.add_subcommand("construct", "Build a decision process and write it as JSON");
  construct->add_option("kind", ca.kind, "small3x3 | grid | continuous | random-aligned")
      ->check(CLI::IsMember({"small3x3", "grid", "continuous", "random-aligned"}));
  construct->add_option("--p-minus", ca.p_minus, "Rate below the decision threshold");
  construct->add_option("--p-plus", ca.p_plus, "Rate above the decision threshold");
  construct->add_option("--utility", ca.utility, "u11,u10,u00,u01");
  construct->add_option("--k", ca.k, "Number of h levels (grid, continuous)");
  construct->add_option("--m", ca.m, "Number of b levels (grid)");
  construct->add_option("--sub-bins", ca.sub_bins, "b levels per interval (continuous)");
  construct->add_option("--alpha", ca.alpha, "Alignment level (random-aligned)");
  construct->add_option("--rows", ca.rows, "Rows (random-aligned)");
  construct->add_option("--cols", ca.cols, "Columns (random-aligned)");
  construct->add_option("--seed", ca.seed, "Seed");
  construct->add_option("--spec", ca.spec_file, "Construction spec JSON file");
  construct->add_option("-o,--output", ca.output, "Also write the process JSON here");
  construct->add_flag("--exact", ca.exact, "Write exact values as \"p/q\" strings");

  AuditArgs aa;
  auto* audit = app.add_subcommand("audit", "Audit a process or a prediction log");
  audit->add_option("--process", aa.process, "Process JSON");
  audit->add_option("--log", aa.log, "Prediction log CSV");
  audit->add_option("--task", aa.task, "Task within the log (default: first)");
  audit->add_option("--check", aa.checks, "calibration | multicalibration | alignment | aligned-calibration")
      ->check(CLI::IsMember({"calibration", "multicalibration", "alignment", "aligned-calibration"}));
  audit->add_option("--alpha", aa.alpha, "Audit level");
  audit->add_option("--search", aa.search, "Alignment subset search: auto | greedy | exhaustive");
  audit->add_option("--min-count", aa.min_count, "Minimum samples per cell (logs)");

  PolicyArgs pa;
  auto* policy = app.add_subcommand("policy", "Optimal and optimal monotone policies with the gap bound");
  policy->add_option("--process", pa.process, "Process JSON")->required();
  policy->add_option("--alpha", pa.alpha, "Alignment level (default: smallest passing level)");
  policy->add_option("--solver", pa.solver, "auto | exhaustive | mincut");
  policy->add_option("--search", pa.search, "Alignment subset search: auto | greedy | exhaustive");
  policy->add_flag("--exact", pa.exact, "Write exact values as \"p/q\" strings");

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Multicalibrate confidences per human-confidence stratum");
  calibrate->add_option("--log", cal.log, "CSV with columns h,b,y or a prediction log")->required();
  calibrate->add_option("--method", cal.method, "umd | iterative");
  calibrate->add_option("--bins", cal.bins, "Bins per stratum (umd)");
  calibrate->add_option("--alpha", cal.alpha, "Target level; enables the sample-size floor");
  calibrate->add_option("--alpha-prime", cal.alpha_prime, "Update tolerance (iterative; default alpha/2)");
  calibrate->add_option("--lambda", cal.lambda, "Bin width (iterative)");
  calibrate->add_option("--xi", cal.xi, "Failure probability for the sample-size floor");
  calibrate->add_option("--max-rounds", cal.max_rounds, "Round cap (iterative)");
  calibrate->add_flag("--jitter", cal.jitter, "Jitter tied confidences (umd)");
  calibrate->add_option("--seed", cal.seed, "Seed");
  calibrate->add_option("--min-count", cal.min_count, "Minimum samples per cell in the summaries");

  ReproArgs ra;
  auto* repro = app.add_subcommand("repro", "Per-task metrics, shift tables and ROC curves from a prediction log");
  repro->add_option("data", ra.data, "Prediction log CSV")->required();
  repro->add_option("--mapping", ra.mapping, "Column mapping JSON");
  repro->add_flag("--skip-bad-rows", ra.skip_bad_rows, "Skip rows that fail to parse");
  repro->add_flag("--no-filter", ra.no_filter, "Keep every record instead of the country/told-accuracy cohort");
  repro->add_option("--country", ra.country, "Cohort country");
  repro->add_option("--told-accuracy", ra.told_accuracy, "Cohort told accuracy");
  repro->add_option("--task", ra.tasks, "Tasks to analyse (default: all)");
  repro->add_option("--resamples", ra.resamples, "Bootstrap resamples");
  repro->add_flag("--cluster", ra.cluster, "Bootstrap by participant");
  repro->add_option("--seed", ra.seed, "Seed");
  repro->add_option("--min-count", ra.min_count, "Minimum samples per cell");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-log", "Sample a synthetic log");
  synth->add_option("--source", sa.source, "small3x3 | process | misaligned");
  synth->add_option("--process", sa.process, "Process JSON (source=process)");
  synth->add_option("--n", sa.n, "Number of records");
  synth->add_option("--seed", sa.seed, "Seed");
  synth->add_option("--task", sa.task, "Task name");
  synth->add_option("-o,--output", sa.output, "Also write the CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  try {
    if (*construct) {
      if (ca.kind.empty() && ca.spec_file.empty()) throw InvalidArgument("construct needs a kind or --spec");
      return cmd_construct(ca, common, out);
    }
    if (*audit) return cmd_audit(aa, common, out);
    if (*policy) return cmd_policy(pa, common, out);
    if (*calibrate) return cmd_calibrate(cal, common, out);
    if (*repro) return cmd_repro(ra, common, out, err);
    if (*synth) return cmd_synth_log(sa, common, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace alignedcal::cli
