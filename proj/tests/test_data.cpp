#include "alignedcal/data.hpp"
#include "alignedcal/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace alignedcal;

namespace {

/// Three equally likely h levels far apart, b levels in distinct eighths,
/// rates rising by 0.2 along either axis.
DecisionProcess<double> separated_process() {
  Grid<double> w(3, 3, 1.0 / 9.0);
  Grid<std::optional<double>> r(3, 3);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t b = 0; b < 3; ++b) r(h, b) = 0.1 + 0.2 * h + 0.2 * b;
  return DecisionProcess<double>({0.25, 0.5, 0.75}, {0.2, 0.5, 0.8}, w, r, symmetric_utility<double>());
}

std::vector<TransformedRecord> sample(const DecisionProcess<double>& p, std::size_t n, std::uint64_t seed) {
  SyntheticLogOptions opts;
  opts.n = n;
  opts.seed = seed;
  return transform_all(sample_prediction_log(p, opts));
}

TransformedRecord rec(const std::string& participant, int y, double b, double h, double h_ai) {
  return {"t", participant, "", y, b, h, h_ai};
}

double mann_whitney(const std::vector<std::pair<double, int>>& scored) {
  double wins = 0.0, pairs = 0.0;
  for (const auto& [sp, yp] : scored)
    for (const auto& [sn, yn] : scored) {
      if (yp != 1 || yn != 0) continue;
      pairs += 1;
      wins += sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0;
    }
  return wins / pairs;
}

const char* kCsv =
    "task,participant,instance,y,b_hat,h_hat,h_ai_hat,country,told_accuracy,group,extra\n"
    "art,p1,i1,1,0.5,-0.25,0,US,80,treatment,x\n"
    "\"cities, large\",p2,i2,0,1,1,-1,UK,60,control,y\n";

}  // namespace

TEST(Transform, Examples) {
  EXPECT_EQ(transform_confidence(0.0, 1), 0.5);
  EXPECT_EQ(transform_confidence(1.0, 0), 0.0);
  EXPECT_EQ(transform_confidence(-1.0, 1), 0.0);
  EXPECT_EQ(transform_confidence(-1.0, 0), 1.0);
  EXPECT_THROW(transform_confidence(1.5, 1), InvalidArgument);
  EXPECT_THROW(transform_confidence(0.0, 2), InvalidArgument);
}

TEST(Transform, RoundTrip) {
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double raw = rng.uniform(-1.0, 1.0);
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    const double v = transform_confidence(raw, y);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(inverse_transform_confidence(v, y), raw, 1e-12);
  }
}

TEST(Csv, ReadsCanonicalSchema) {
  std::istringstream in(kCsv);
  const auto r = read_prediction_csv(in);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].task, "art");
  EXPECT_EQ(r.records[0].h_hat, -0.25);
  EXPECT_EQ(*r.records[0].told_accuracy, 80.0);
  EXPECT_EQ(r.records[1].task, "cities, large");
  EXPECT_EQ(r.records[1].y, 0);
  EXPECT_EQ(r.records[1].group, "control");
}

TEST(Csv, WriteThenReadIsLossless) {
  std::istringstream in(kCsv);
  const auto first = read_prediction_csv(in).records;
  std::ostringstream out;
  write_prediction_csv(out, first);
  std::istringstream again(out.str());
  const auto second = read_prediction_csv(again).records;
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].task, second[i].task);
    EXPECT_EQ(first[i].b_hat, second[i].b_hat);
    EXPECT_EQ(first[i].told_accuracy, second[i].told_accuracy);
  }
}

TEST(Csv, CrlfAndByteOrderMark) {
  std::istringstream in("\xEF\xBB\xBFtask,y,b_hat,h_hat,h_ai_hat\r\nart,1,0,0,0\r\n");
  const auto r = read_prediction_csv(in);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].task, "art");
  EXPECT_FALSE(r.records[0].told_accuracy.has_value());
}

TEST(Csv, MappingRenamesColumns) {
  std::istringstream in("Task,Label,AI,Before,After\nart,1,0.2,0.1,0.3\n");
  CsvOptions opts;
  opts.mapping = ColumnMapping::from_json(
      Json::parse(R"({"columns": {"task": "Task", "y": "Label", "b_hat": "AI", "h_hat": "Before", "h_ai_hat": "After"}})"));
  const auto r = read_prediction_csv(in, opts);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].b_hat, 0.2);
  EXPECT_EQ(r.records[0].h_ai_hat, 0.3);
  EXPECT_THROW(ColumnMapping::from_json(Json::parse(R"({"bogus": "x"})")), InputError);
}

TEST(Csv, Errors) {
  std::istringstream empty("");
  try {
    read_prediction_csv(empty);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("empty CSV"), std::string::npos);
  }
  std::istringstream missing("task,y,b_hat,h_hat\nart,1,0,0\n");
  EXPECT_THROW(read_prediction_csv(missing), InputError);

  const std::string bad = "task,y,b_hat,h_hat,h_ai_hat\nart,1,0,0,0\nart,1,2,0,0\nart,x,0,0,0\nart,0,zz,0,0\nart,0,0,0\n";
  std::istringstream in(bad);
  try {
    read_prediction_csv(in);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 3:", 0), 0u) << e.what();
  }
  std::istringstream again(bad);
  CsvOptions skip;
  skip.skip_bad_rows = true;
  const auto r = read_prediction_csv(again, skip);
  EXPECT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.skipped.size(), 4u);
  EXPECT_EQ(r.skipped[0].line, 3u);
  EXPECT_EQ(r.skipped[3].line, 6u);
}

TEST(Cohort, KeepsBothGroups) {
  std::vector<PredictionRecord> rs(4);
  rs[0].country = "US", rs[0].told_accuracy = 80, rs[0].group = "treatment", rs[0].participant = "a";
  rs[1].country = "US", rs[1].told_accuracy = 80, rs[1].group = "control", rs[1].participant = "b";
  rs[2].country = "US", rs[2].told_accuracy = 70, rs[2].participant = "c";
  rs[3].country = "CA", rs[3].told_accuracy = 80, rs[3].participant = "a";
  const auto c = filter_cohort(rs, std::string("US"), 80.0);
  EXPECT_EQ(c.records.size(), 2u);
  EXPECT_FALSE(c.warning.has_value());
  EXPECT_EQ(count_participants(c.records), 2u);
  EXPECT_EQ(filter_cohort(rs, std::nullopt, std::nullopt).records.size(), 4u);
  const auto none = filter_cohort(rs, std::string("FR"), 80.0);
  EXPECT_TRUE(none.records.empty());
  EXPECT_TRUE(none.warning.has_value());
}

TEST(HBins, EqualMassWithoutTies) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h;
    const std::size_t n = 3 + rng.below(500);
    for (std::size_t i = 0; i < n; ++i) h.push_back(rng.uniform());
    const auto bins = HBinning::equal_mass(h, 3);
    ASSERT_EQ(bins.size(), 3u);
    std::vector<std::size_t> count(3, 0);
    std::vector<double> sum(3, 0.0);
    for (double v : h) {
      ++count[bins.index(v)];
      sum[bins.index(v)] += v;
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    EXPECT_LE(*hi - *lo, 1u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(bins.values[i], sum[i] / count[i], 1e-12);
  }
}

TEST(HBins, TiesGoToTheLowerBin) {
  const auto bins = HBinning::equal_mass({0.1, 0.5, 0.5, 0.5, 0.5, 0.9}, 3);
  EXPECT_EQ(bins.upper, (std::vector<double>{0.5, 0.9}));
  EXPECT_EQ(bins.index(0.5), 0u);
  EXPECT_NEAR(bins.values[0], (0.1 + 2.0) / 5.0, 1e-12);
  const auto flat = HBinning::equal_mass(std::vector<double>(9, 0.4), 3);
  EXPECT_EQ(flat.size(), 1u);
}

TEST(CellTable, MonotoneProcessHasNoViolations) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto records = sample(separated_process(), 10000, seed);
    const auto t = build_cell_table(records, "synthetic");
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.cols(), 8u);
    EXPECT_EQ(misalignment_metrics(t).violation_count, 0u);
  }
}

TEST(CellTable, RatesConvergeToTheProcess) {
  const auto p = separated_process();
  const auto cells = bin_task(sample(p, 50000, 11), "synthetic");
  const auto& t = cells.table;
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t col = t.b_bins.index(p.b_values()[b]);
      const double truth = *p.rate()(h, b);
      const double n = static_cast<double>(t.count(h, col));
      ASSERT_GT(n, 0);
      EXPECT_LE(std::abs(*t.pos_rate(h, col) - truth), 3 * std::sqrt(truth * (1 - truth) / n)) << h << "," << b;
    }
}

TEST(CellTable, UnknownTaskIsAnError) {
  EXPECT_THROW(build_cell_table(sample(separated_process(), 100, 1), "nope"), InvalidArgument);
}

TEST(Shift, NoAdviceMeansNoShift) {
  auto records = sample(separated_process(), 3000, 4);
  for (auto& r : records) r.h_ai = r.h;
  BootstrapOptions opts;
  opts.resamples = 50;
  const auto s = advice_shift_table(bin_task(records, "synthetic"), opts);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t b = 0; b < 8; ++b)
      if (s.table.mean(h, b)) {
        EXPECT_EQ(*s.table.mean(h, b), 0.0);
        EXPECT_EQ(*s.table.lower(h, b), 0.0);
        EXPECT_EQ(*s.table.upper(h, b), 0.0);
      }
  EXPECT_TRUE(s.decreases.empty());
}

TEST(Shift, FollowingTheAdviceShiftsByTheGap) {
  std::vector<TransformedRecord> records;
  Rng rng(8);
  for (int i = 0; i < 3000; ++i) {
    const double h = 0.2 + 0.3 * (i % 3);
    const double b = rng.uniform();
    records.push_back(rec("p" + std::to_string(i % 50), rng.bernoulli(b) ? 1 : 0, b, h, b));
  }
  const auto cells = bin_task(records, "t");
  BootstrapOptions opts;
  opts.resamples = 20;
  const auto s = advice_shift_table(cells, opts);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t b = 0; b < 8; ++b)
      if (s.table.mean(h, b))
        EXPECT_NEAR(*s.table.mean(h, b), *cells.table.mean_b(h, b) - cells.h_bins.values[h], 1e-12);
}

TEST(Shift, DetectsAClearDecrease) {
  std::vector<TransformedRecord> records;
  Rng rng(10);
  for (int i = 0; i < 4000; ++i) {
    const double b = rng.uniform();
    const double h = 0.5;
    const double shift = b < 0.5 ? 0.2 : -0.2;
    records.push_back(rec("p" + std::to_string(i % 80), 1, b, h, h + shift + rng.uniform(-0.05, 0.05)));
  }
  BootstrapOptions opts;
  opts.resamples = 200;
  opts.seed = 1;
  const auto s = advice_shift_table(bin_task(records, "t"), opts);
  ASSERT_EQ(s.decreases.size(), 1u);
  EXPECT_EQ(s.decreases[0].b, 3u);
  EXPECT_LT(s.decreases[0].upper, 0.0);

  opts.cluster_by_participant = true;
  const auto clustered = advice_shift_table(bin_task(records, "t"), opts);
  EXPECT_EQ(clustered.decreases.size(), 1u);
  const auto again = advice_shift_table(bin_task(records, "t"), opts);
  EXPECT_EQ(clustered.table.lower, again.table.lower);
}

TEST(Roc, PerfectAndReversedScores) {
  std::vector<std::pair<double, int>> s{{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  EXPECT_EQ(roc_curve(s).auc, 1.0);
  for (auto& [score, y] : s) score = 1 - score;
  EXPECT_EQ(roc_curve(s).auc, 0.0);
  const auto c = roc_curve(s);
  EXPECT_TRUE(std::isinf(c.points.front().threshold));
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
}

TEST(Roc, SingleClassIsAnError) {
  EXPECT_THROW(roc_curve({{0.1, 1}, {0.4, 1}}), InvalidArgument);
}

TEST(Roc, MatchesPairCounting) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, int>> s;
    for (int i = 0; i < 200; ++i) {
      const double score = std::round(rng.uniform() * 20) / 20;  // plenty of ties
      s.emplace_back(score, rng.bernoulli(0.3 + 0.4 * score) ? 1 : 0);
    }
    EXPECT_NEAR(roc_curve(s).auc, mann_whitney(s), 1e-12);
  }
}

TEST(Roc, InvariantUnderIncreasingWarps) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, int>> s;
    for (int i = 0; i < 300; ++i) {
      const double score = std::round(rng.uniform() * 30) / 30;
      s.emplace_back(score, rng.bernoulli(score) ? 1 : 0);
    }
    const double base = roc_curve(s).auc;
    const double k = rng.uniform(0.5, 5.0);
    for (auto warp : {+[](double x, double) { return x * x * x; }, +[](double x, double a) { return std::exp(a * x); },
                      +[](double x, double a) { return 1 / (1 + std::exp(-a * (x - 0.5))); }}) {
      auto w = s;
      for (auto& [score, y] : w) score = warp(score, k);
      EXPECT_EQ(roc_curve(w).auc, base);
    }
  }
}

TEST(Roc, PolicyAucReadsTheRequestedScore) {
  std::vector<TransformedRecord> rs{rec("a", 1, 0.9, 0.1, 0.5), rec("a", 0, 0.1, 0.9, 0.5)};
  EXPECT_EQ(policy_auc(rs, "t", ScoreSource::B).auc, 1.0);
  EXPECT_EQ(policy_auc(rs, "t", ScoreSource::H).auc, 0.0);
  EXPECT_EQ(policy_auc(rs, "t", ScoreSource::HAi).auc, 0.5);
  EXPECT_THROW(policy_auc(rs, "other", ScoreSource::B), InvalidArgument);
}

TEST(Report, DeterministicGivenSeed) {
  const auto records = sample(separated_process(), 5000, 2);
  ReproOptions opts;
  opts.bootstrap.resamples = 100;
  opts.bootstrap.seed = 5;
  const auto a = task_report_json(analyze_task(records, "synthetic", opts)).dump();
  const auto b = task_report_json(analyze_task(records, "synthetic", opts)).dump();
  EXPECT_EQ(a, b);
}

TEST(CalibrationCsv, RoundTripAndLevels) {
  std::istringstream in("h,b,y\n0.7,0.1,1\n0.2,0.5,0\n0.7,1,0\n");
  const auto set = read_calibration_csv(in);
  EXPECT_EQ(set.h_values, (std::vector<double>{0.2, 0.7}));
  ASSERT_EQ(set.samples.size(), 3u);
  EXPECT_EQ(set.samples[0].h, 1u);
  std::ostringstream out;
  write_calibration_csv(out, set);
  EXPECT_EQ(out.str(), "h,b,y\n0.7,0.1,1\n0.2,0.5,0\n0.7,1,0\n");
  std::istringstream bad("h,b,y\n0.2,1.5,0\n");
  EXPECT_THROW(read_calibration_csv(bad), InputError);
  std::istringstream no_col("h,y\n0.2,0\n");
  EXPECT_THROW(read_calibration_csv(no_col), InputError);
}

TEST(CalibrationCsv, FromPredictionLog) {
  const auto records = sample(separated_process(), 3000, 6);
  const auto set = calibration_set_from_log(records);
  EXPECT_EQ(set.h_values.size(), 3u);
  EXPECT_EQ(set.samples.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(set.samples[i].b_raw, records[i].b);
}
