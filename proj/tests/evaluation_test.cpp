#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "biaslab/common.h"
#include "biaslab/evaluation.h"
#include "biaslab/labelspace.h"
#include "test_util.h"

using namespace biaslab;
using namespace biaslab::eval;

namespace {

// Reference macro-F1: scan-everything confusion counting in long double,
// written independently of the library implementation.
double reference_macro_f1(const std::vector<int>& golds,
                          const std::vector<int>& preds, int n_classes) {
  long double sum = 0.0L;
  for (int k = 0; k < n_classes; ++k) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      if (golds[i] == k && preds[i] == k) ++tp;
      if (golds[i] != k && preds[i] == k) ++fp;
      if (golds[i] == k && preds[i] != k) ++fn;
    }
    long double p = (tp + fp) == 0 ? 0.0L : static_cast<long double>(tp) / (tp + fp);
    long double r = (tp + fn) == 0 ? 0.0L : static_cast<long double>(tp) / (tp + fn);
    long double f = (p + r) == 0.0L ? 0.0L : 2.0L * p * r / (p + r);
    sum += f;
  }
  return static_cast<double>(sum / n_classes);
}

double t_log_density(double x, double df) {
  double logc = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                0.5 * std::log(df * M_PI);
  return logc - (df + 1.0) / 2.0 * std::log1p(x * x / df);
}

double simpson(double lo, double hi, double df) {
  double mid = 0.5 * (lo + hi);
  return (hi - lo) / 6.0 *
         (std::exp(t_log_density(lo, df)) +
          4.0 * std::exp(t_log_density(mid, df)) +
          std::exp(t_log_density(hi, df)));
}

double adaptive(double lo, double hi, double df, double whole, int depth) {
  double mid = 0.5 * (lo + hi);
  double left = simpson(lo, mid, df);
  double right = simpson(mid, hi, df);
  if (depth <= 0 || std::abs(left + right - whole) < 1e-14) {
    return left + right;
  }
  return adaptive(lo, mid, df, left, depth - 1) +
         adaptive(mid, hi, df, right, depth - 1);
}

// Reference two-sided p: quadrature over the t density, no incomplete beta.
double reference_two_sided_p(double t, double df) {
  double a = std::abs(t);
  if (a == 0.0) return 1.0;
  double central = adaptive(0.0, a, df, simpson(0.0, a, df), 40);
  return 1.0 - 2.0 * central;
}

PredictionDump make_dump(const std::string& split,
                         const std::vector<std::string>& tasks,
                         const std::vector<PredictionRow>& rows) {
  PredictionDump d;
  d.split = split;
  d.fingerprint = "abc";
  d.tasks = tasks;
  d.rows = rows;
  return d;
}

PredictionRow row1(const std::string& id, int gold, int pred,
                   const std::string& task = "bias",
                   const std::string& category = "") {
  PredictionRow r;
  r.example_id = id;
  r.category = category;
  r.gold[task] = gold;
  r.pred[task] = pred;
  return r;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("macro-F1 hand values") {
  CHECK(macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 1.0);
  CHECK(macro_f1({0, 1, 0, 1}, {1, 0, 1, 0}, 2) == 0.0);

  // all-A predictions on a balanced binary gold: class0 F1 = 2/3, class1
  // F1 = 0, so the macro average is exactly one third in IEEE arithmetic
  CHECK(macro_f1({0, 0, 1, 1}, {0, 0, 0, 0}, 2) == 1.0 / 3.0);

  // a class absent from gold and pred still dilutes the mean
  CHECK(macro_f1({0, 0}, {0, 0}, 3) == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(macro_f1({0, 1}, {0}, 2), ShapeError);
  CHECK_THROWS_AS(macro_f1(std::vector<int>{}, std::vector<int>{}, 2), DataError);
  CHECK_THROWS_AS(macro_f1({0, 1}, {0, 1}, 1), ConfigError);
  CHECK_THROWS_AS(macro_f1({0, 2}, {0, 1}, 2), DataError);
}

TEST_CASE("macro-F1 agrees with a brute-force confusion oracle") {
  DetRng rng(2024);
  for (int rep = 0; rep < 1000; ++rep) {
    int n_classes = 2 + static_cast<int>(rng.next_below(5));
    std::size_t n = 1 + rng.next_below(200);
    std::vector<int> golds(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      golds[i] = static_cast<int>(rng.next_below(n_classes));
      preds[i] = static_cast<int>(rng.next_below(n_classes));
    }
    double got = macro_f1(golds, preds, n_classes);
    double want = reference_macro_f1(golds, preds, n_classes);
    CHECK(std::abs(got - want) < 1e-12);
  }
}

TEST_CASE("string-label macro-F1 maps through the class list") {
  std::vector<std::string> golds{"no_bias", "bias", "bias", "no_bias"};
  std::vector<std::string> preds{"no_bias", "no_bias", "bias", "no_bias"};
  std::vector<std::string> classes{"no_bias", "bias"};
  double got = macro_f1(golds, preds, classes);
  CHECK(got == macro_f1({0, 1, 1, 0}, {0, 0, 1, 0}, 2));

  CHECK_THROWS_AS(macro_f1({"yes"}, {"no_bias"}, classes), DataError);
  std::vector<std::string> dup{"bias", "bias"};
  CHECK_THROWS_AS(macro_f1(golds, preds, dup), DataError);
}

TEST_CASE("task_metrics exposes the confusion matrix and per-class stats") {
  // gold:  0 0 0 1 1 1 1
  // pred:  0 1 0 1 1 0 1
  TaskMetrics m = task_metrics({0, 0, 0, 1, 1, 1, 1}, {0, 1, 0, 1, 1, 0, 1},
                               {"no_bias", "bias"});
  REQUIRE(m.classes.size() == 2);
  CHECK(m.confusion[0][0] == 2);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[1][1] == 3);

  const ClassMetrics& c0 = m.per_class[0];
  CHECK(c0.label == "no_bias");
  CHECK(c0.tp == 2);
  CHECK(c0.fp == 1);
  CHECK(c0.fn == 1);
  CHECK(c0.precision == doctest::Approx(2.0 / 3.0));
  CHECK(c0.recall == doctest::Approx(2.0 / 3.0));
  CHECK(c0.f1 == doctest::Approx(2.0 / 3.0));

  const ClassMetrics& c1 = m.per_class[1];
  CHECK(c1.tp == 3);
  CHECK(c1.fp == 1);
  CHECK(c1.fn == 1);
  CHECK(c1.f1 == doctest::Approx(0.75));

  CHECK(m.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.75) / 2.0));
  CHECK(m.macro_f1 ==
        macro_f1({0, 0, 0, 1, 1, 1, 1}, {0, 1, 0, 1, 1, 0, 1}, 2));
}

TEST_CASE("two-sided t tail matches closed forms at df 1 and 2") {
  for (double t : {0.1, 0.25, 0.5, 1.0, 1.7, 2.5, 4.0, 9.0}) {
    double cauchy = 1.0 - 2.0 / M_PI * std::atan(t);
    CHECK(std::abs(student_t_two_sided_p(t, 1.0) - cauchy) < 1e-12);
    CHECK(std::abs(student_t_two_sided_p(-t, 1.0) - cauchy) < 1e-12);

    double df2 = 1.0 - t / std::sqrt(t * t + 2.0);
    CHECK(std::abs(student_t_two_sided_p(t, 2.0) - df2) < 1e-12);
  }
  CHECK(student_t_two_sided_p(0.0, 5.0) == 1.0);
  CHECK(student_t_two_sided_p(std::numeric_limits<double>::infinity(), 5.0) ==
        0.0);
  CHECK_THROWS_AS(student_t_two_sided_p(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(
      student_t_two_sided_p(std::numeric_limits<double>::quiet_NaN(), 5.0),
      NumericError);
}

TEST_CASE("two-sided t tail matches density quadrature across df") {
  DetRng rng(5151);
  for (int rep = 0; rep < 60; ++rep) {
    double t = (rng.next_double() - 0.5) * 12.0;
    double df = 1.0 + rng.next_below(300);
    double got = student_t_two_sided_p(t, df);
    double want = reference_two_sided_p(t, df);
    CHECK(std::abs(got - want) < 1e-9);
  }
}

TEST_CASE("paired t-test hand case") {
  // d = b - a = {0, 1, 0, -1, 1}: mean 0.2, sample var 0.7
  SignificanceResult r = paired_t_test({0, 0, 1, 1, 0}, {0, 1, 1, 0, 1});
  CHECK(r.n == 5);
  CHECK(r.mean_difference == doctest::Approx(0.2));
  double expect_t = 0.2 / std::sqrt(0.7 / 5.0);
  CHECK(r.t_statistic == doctest::Approx(expect_t).epsilon(1e-12));
  CHECK(r.p_value ==
        doctest::Approx(reference_two_sided_p(expect_t, 4.0)).epsilon(1e-9));
  CHECK_FALSE(r.significant);
  CHECK(r.hypothesis.find("two-sided") != std::string::npos);
}

TEST_CASE("paired t-test degenerate conventions") {
  SignificanceResult zero = paired_t_test({1, 0, 1, 0}, {1, 0, 1, 0});
  CHECK(zero.t_statistic == 0.0);
  CHECK(zero.p_value == 1.0);
  CHECK_FALSE(zero.significant);

  SignificanceResult up = paired_t_test({0, 0, 0}, {1, 1, 1});
  CHECK(std::isinf(up.t_statistic));
  CHECK(up.t_statistic > 0);
  CHECK(up.p_value == 0.0);
  CHECK(up.significant);
  CHECK(up.mean_difference == 1.0);

  SignificanceResult down = paired_t_test({1, 1, 1}, {0, 0, 0});
  CHECK(down.t_statistic < 0);
  CHECK(std::isinf(down.t_statistic));

  CHECK_THROWS_AS(paired_t_test({0, 1}, {0}), ShapeError);
  CHECK_THROWS_AS(paired_t_test({0}, {1}), DataError);
}

TEST_CASE("paired t-test matches a rebuilt statistic on random vectors") {
  DetRng rng(777);
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t n = 5 + rng.next_below(496);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.next_below(2));
      b[i] = rng.next_double() < 0.35 ? 1 - a[i] : a[i];
    }

    long double mean = 0.0L;
    for (std::size_t i = 0; i < n; ++i) mean += b[i] - a[i];
    mean /= static_cast<long double>(n);
    long double var = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      long double d = (b[i] - a[i]) - mean;
      var += d * d;
    }
    var /= static_cast<long double>(n - 1);

    SignificanceResult r = paired_t_test(a, b);
    if (var == 0.0L) continue;  // conventions covered elsewhere
    long double want_t = mean / std::sqrt(var / static_cast<long double>(n));
    CHECK(std::abs(r.t_statistic - static_cast<double>(want_t)) < 1e-8);
    double want_p =
        reference_two_sided_p(static_cast<double>(want_t), double(n - 1));
    CHECK(std::abs(r.p_value - want_p) < 1e-8);
  }
}

TEST_CASE("prediction dumps roundtrip through files") {
  testutil::TempDir tmp;
  auto path = tmp / "predictions.test.tsv";

  PredictionDump d = make_dump(
      "test", {"bias", "stereotype"},
      {});
  for (int i = 0; i < 5; ++i) {
    PredictionRow r;
    r.example_id = "ex-" + std::to_string(i);
    r.category = i % 2 ? "gender" : "profession";
    r.gold["bias"] = i % 2;
    r.pred["bias"] = (i + 1) % 2;
    r.gold["stereotype"] = i % 2;
    r.pred["stereotype"] = i % 2;
    d.rows.push_back(r);
  }
  write_dump(path, d);

  PredictionDump r = read_dump(path);
  CHECK(r.split == "test");
  CHECK(r.fingerprint == "abc");
  CHECK(r.tasks == d.tasks);
  REQUIRE(r.rows.size() == 5);
  CHECK(r.rows[3].example_id == "ex-3");
  CHECK(r.rows[3].category == "gender");
  CHECK(r.rows[3].gold.at("bias") == 1);
  CHECK(r.rows[3].pred.at("bias") == 0);
  CHECK(r.rows[3].pred.at("stereotype") == 1);

  CHECK_THROWS_AS(read_dump(tmp / "absent.tsv"), DataError);
}

TEST_CASE("prediction dump validation") {
  PredictionDump d = make_dump("test", {"bias"},
                               {row1("a", 0, 0), row1("a", 1, 0)});
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("duplicate"), DataError);

  PredictionDump missing = make_dump("test", {"bias", "stereotype"},
                                     {row1("a", 0, 0)});
  CHECK_THROWS_WITH_AS(missing.validate(), doctest::Contains("missing task"),
                       DataError);

  PredictionDump none = make_dump("test", {}, {});
  CHECK_THROWS_AS(none.validate(), DataError);

  PredictionDump ok = make_dump("test", {"bias"}, {row1("a", 0, 0)});
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("joint dumps decompose along the frozen enumeration") {
  PredictionDump joint = make_dump("val", {"joint"}, {});
  // joint index = 2*stereotype + bias
  int golds[] = {0, 1, 2, 3};
  int preds[] = {3, 2, 1, 0};
  for (int i = 0; i < 4; ++i) {
    PredictionRow r;
    r.example_id = "j" + std::to_string(i);
    r.gold["joint"] = golds[i];
    r.pred["joint"] = preds[i];
    joint.rows.push_back(r);
  }

  PredictionDump d = decompose_full_mtl(joint);
  CHECK(d.tasks == std::vector<std::string>{"bias", "stereotype"});
  REQUIRE(d.rows.size() == 4);
  int want_gb[] = {0, 1, 0, 1}, want_gs[] = {0, 0, 1, 1};
  int want_pb[] = {1, 0, 1, 0}, want_ps[] = {1, 1, 0, 0};
  for (int i = 0; i < 4; ++i) {
    CHECK(d.rows[i].gold.at("bias") == want_gb[i]);
    CHECK(d.rows[i].gold.at("stereotype") == want_gs[i]);
    CHECK(d.rows[i].pred.at("bias") == want_pb[i]);
    CHECK(d.rows[i].pred.at("stereotype") == want_ps[i]);
  }

  PredictionDump binary = make_dump("val", {"bias"}, {row1("a", 0, 0)});
  CHECK_THROWS_AS(decompose_full_mtl(binary), DataError);

  PredictionDump bad = make_dump("val", {"joint"}, {});
  PredictionRow r;
  r.example_id = "x";
  r.gold["joint"] = 4;
  r.pred["joint"] = 0;
  bad.rows.push_back(r);
  CHECK_THROWS_AS(decompose_full_mtl(bad), DataError);
}

TEST_CASE("correctness vectors are ordered by example id") {
  PredictionDump d = make_dump("test", {"bias"},
                               {row1("c", 1, 1), row1("a", 0, 1), row1("b", 1, 1)});
  // sorted ids: a (wrong), b (right), c (right)
  CHECK(correctness_vector(d, "bias") == std::vector<int>{0, 1, 1});
  CHECK_THROWS_AS(correctness_vector(d, "joint"), DataError);
}

TEST_CASE("reports align runs against baselines and flag significance") {
  // 40 aligned examples; baseline always wrong, run always right -> the
  // paired differences are identically +1 and the improvement is certain.
  PredictionDump base = make_dump("test", {"bias"}, {});
  PredictionDump run = make_dump("test", {"bias"}, {});
  for (int i = 0; i < 40; ++i) {
    std::string id = "e" + std::to_string(100 + i);
    base.rows.push_back(row1(id, i % 2, 1 - i % 2));
    run.rows.push_back(row1(id, i % 2, i % 2));
  }

  EvalReport rep = build_report({{"mtl", run}}, {{"stl", base}});
  CHECK(rep.split == "test");
  REQUIRE(rep.entries.size() == 2);
  CHECK(rep.entries[0].name == "stl");
  CHECK(rep.entries[1].name == "mtl");
  CHECK(rep.entries[0].tasks.at("bias").macro_f1 == 0.0);
  CHECK(rep.entries[1].tasks.at("bias").macro_f1 == 1.0);

  const SignificanceResult& sig = rep.entries[1].significance.at("stl").at("bias");
  CHECK(sig.p_value == 0.0);
  CHECK(sig.significant);
  CHECK(sig.mean_difference == 1.0);

  std::string table = render_table(rep);
  CHECK(table.find("mtl") != std::string::npos);
  CHECK(table.find("1.0000") != std::string::npos);
  CHECK(table.find("↑") != std::string::npos);

  std::string js = report_to_json(rep);
  CHECK(js.find("\"significant\": true") != std::string::npos);
}

TEST_CASE("report construction rejects misaligned inputs") {
  PredictionDump run = make_dump("test", {"bias"}, {row1("a", 0, 0), row1("b", 1, 1)});
  PredictionDump other_split = make_dump("validation", {"bias"},
                                         {row1("a", 0, 0), row1("b", 1, 1)});
  CHECK_THROWS_AS(build_report({{"r", run}}, {{"b", other_split}}),
                  AlignmentError);

  PredictionDump other_ids = make_dump("test", {"bias"},
                                       {row1("a", 0, 0), row1("z", 1, 1)});
  CHECK_THROWS_WITH_AS(build_report({{"r", run}}, {{"b", other_ids}}),
                       doctest::Contains("different example ids"),
                       AlignmentError);

  CHECK_THROWS_AS(build_report({}, {}), DataError);
}

TEST_CASE("joint runs are decomposed before scoring in reports") {
  PredictionDump joint = make_dump("test", {"joint"}, {});
  for (int i = 0; i < 8; ++i) {
    PredictionRow r;
    r.example_id = "q" + std::to_string(i);
    r.gold["joint"] = i % 4;
    r.pred["joint"] = i % 4;
    joint.rows.push_back(r);
  }
  EvalReport rep = build_report({{"full", joint}}, {});
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].tasks.count("bias") == 1);
  CHECK(rep.entries[0].tasks.count("stereotype") == 1);
  CHECK(rep.entries[0].tasks.at("bias").macro_f1 == 1.0);
}

TEST_CASE("categories produce per-category scores") {
  PredictionDump d = make_dump("test", {"bias"}, {});
  for (int i = 0; i < 12; ++i) {
    PredictionRow r = row1("c" + std::to_string(i), i % 2,
                           i < 6 ? i % 2 : 1 - i % 2, "bias",
                           i < 6 ? "gender" : "religion");
    d.rows.push_back(r);
  }
  EvalReport rep = build_report({{"r", d}}, {});
  CHECK(rep.has_categories);
  const auto& by_cat = rep.entries[0].category_f1.at("bias");
  CHECK(by_cat.at("gender") == 1.0);
  CHECK(by_cat.at("religion") == 0.0);
}

}  // TEST_SUITE
