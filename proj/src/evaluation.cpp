#include "biaslab/evaluation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "biaslab/common.h"
#include "biaslab/io.h"
#include "biaslab/labelspace.h"

namespace biaslab::eval {

using nlohmann::json;

double macro_f1(const std::vector<int>& golds, const std::vector<int>& preds,
                int n_classes) {
  if (golds.size() != preds.size()) {
    throw ShapeError("macro_f1: gold/pred length mismatch (" +
                     std::to_string(golds.size()) + " vs " +
                     std::to_string(preds.size()) + ")");
  }
  if (golds.empty()) throw DataError("macro_f1: empty input");
  if (n_classes < 2) throw ConfigError("macro_f1: need at least 2 classes");

  std::vector<std::vector<long>> confusion(
      n_classes, std::vector<long>(n_classes, 0));
  for (std::size_t i = 0; i < golds.size(); ++i) {
    int g = golds[i], p = preds[i];
    if (g < 0 || g >= n_classes || p < 0 || p >= n_classes) {
      throw DataError("macro_f1: label outside [0, " +
                      std::to_string(n_classes) + ") at row " +
                      std::to_string(i));
    }
    ++confusion[g][p];
  }
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    long tp = confusion[c][c], fp = 0, fn = 0;
    for (int k = 0; k < n_classes; ++k) {
      if (k == c) continue;
      fp += confusion[k][c];
      fn += confusion[c][k];
    }
    double f1 = 0.0;  // undefined precision or recall -> 0
    if (tp + fp > 0 && tp + fn > 0) {
      double precision = static_cast<double>(tp) / (tp + fp);
      double recall = static_cast<double>(tp) / (tp + fn);
      if (precision + recall > 0.0) {
        f1 = 2.0 * precision * recall / (precision + recall);
      }
    }
    sum += f1;
  }
  return sum / n_classes;
}

namespace {

std::vector<int> to_ids(const std::vector<std::string>& values,
                        const std::vector<std::string>& classes,
                        const char* what) {
  std::vector<int> out;
  out.reserve(values.size());
  for (const std::string& v : values) {
    auto it = std::find(classes.begin(), classes.end(), v);
    if (it == classes.end()) {
      throw DataError(std::string("macro_f1: ") + what + " label \"" + v +
                      "\" not in class set");
    }
    out.push_back(static_cast<int>(it - classes.begin()));
  }
  return out;
}

}  // namespace

double macro_f1(const std::vector<std::string>& golds,
                const std::vector<std::string>& preds,
                const std::vector<std::string>& classes) {
  return macro_f1(to_ids(golds, classes, "gold"), to_ids(preds, classes, "pred"),
                  static_cast<int>(classes.size()));
}

TaskMetrics task_metrics(const std::vector<int>& golds,
                         const std::vector<int>& preds,
                         const std::vector<std::string>& classes) {
  const int n = static_cast<int>(classes.size());
  TaskMetrics m;
  m.classes = classes;
  m.macro_f1 = macro_f1(golds, preds, n);  // also validates inputs
  m.confusion.assign(n, std::vector<long>(n, 0));
  for (std::size_t i = 0; i < golds.size(); ++i) {
    ++m.confusion[golds[i]][preds[i]];
  }
  for (int c = 0; c < n; ++c) {
    ClassMetrics cm;
    cm.label = classes[c];
    cm.tp = m.confusion[c][c];
    for (int k = 0; k < n; ++k) {
      if (k == c) continue;
      cm.fp += m.confusion[k][c];
      cm.fn += m.confusion[c][k];
    }
    if (cm.tp + cm.fp > 0) {
      cm.precision = static_cast<double>(cm.tp) / (cm.tp + cm.fp);
    }
    if (cm.tp + cm.fn > 0) {
      cm.recall = static_cast<double>(cm.tp) / (cm.tp + cm.fn);
    }
    if (cm.tp + cm.fp > 0 && cm.tp + cm.fn > 0 &&
        cm.precision + cm.recall > 0.0) {
      cm.f1 = 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
    }
    m.per_class.push_back(cm);
  }
  return m;
}

// ---------------------------------------------------------------------------

void PredictionDump::validate() const {
  if (tasks.empty()) throw DataError("prediction dump has no tasks");
  std::set<std::string> ids;
  for (const PredictionRow& r : rows) {
    if (!ids.insert(r.example_id).second) {
      throw DataError("duplicate example_id " + r.example_id);
    }
    for (const std::string& t : tasks) {
      if (!r.gold.count(t) || !r.pred.count(t)) {
        throw DataError("example " + r.example_id + " is missing task " + t);
      }
    }
  }
}

void write_dump(const std::filesystem::path& path, const PredictionDump& dump) {
  dump.validate();
  io::Table t;
  t.meta["split"] = dump.split;
  t.meta["fingerprint"] = dump.fingerprint;
  t.meta["tasks"] = join(dump.tasks, ",");
  t.columns = {"id", "category"};
  for (const std::string& task : dump.tasks) {
    t.columns.push_back("gold_" + task);
    t.columns.push_back("pred_" + task);
  }
  for (const PredictionRow& r : dump.rows) {
    std::vector<std::string> row = {r.example_id, r.category};
    for (const std::string& task : dump.tasks) {
      row.push_back(std::to_string(r.gold.at(task)));
      row.push_back(std::to_string(r.pred.at(task)));
    }
    t.rows.push_back(std::move(row));
  }
  io::write_tsv(path, t);
}

PredictionDump read_dump(const std::filesystem::path& path) {
  io::Table t = io::read_tsv(path);
  PredictionDump dump;
  dump.split = t.meta.count("split") ? t.meta.at("split") : "";
  dump.fingerprint = t.meta.count("fingerprint") ? t.meta.at("fingerprint") : "";
  if (!t.meta.count("tasks")) {
    throw DataError(path.string() + ": missing tasks metadata");
  }
  dump.tasks = split_on(t.meta.at("tasks"), ',');
  int ci = t.column_index("id");
  int cc = t.column_index("category");
  if (ci < 0) throw ShapeError(path.string() + ": missing id column");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PredictionRow row;
    row.example_id = t.cell(r, ci);
    if (cc >= 0) row.category = t.cell(r, cc);
    for (const std::string& task : dump.tasks) {
      int cg = t.column_index("gold_" + task);
      int cp = t.column_index("pred_" + task);
      if (cg < 0 || cp < 0) {
        throw ShapeError(path.string() + ": missing columns for task " + task);
      }
      row.gold[task] = std::stoi(t.cell(r, cg));
      row.pred[task] = std::stoi(t.cell(r, cp));
    }
    dump.rows.push_back(std::move(row));
  }
  dump.validate();
  return dump;
}

PredictionDump decompose_full_mtl(const PredictionDump& dump) {
  if (std::find(dump.tasks.begin(), dump.tasks.end(), "joint") ==
      dump.tasks.end()) {
    throw DataError("decompose_full_mtl: dump has no joint task");
  }
  PredictionDump out;
  out.split = dump.split;
  out.fingerprint = dump.fingerprint;
  out.tasks = {"bias", "stereotype"};
  for (const PredictionRow& r : dump.rows) {
    int g = r.gold.at("joint"), p = r.pred.at("joint");
    if (g < 0 || g > 3 || p < 0 || p > 3) {
      throw DataError("decompose_full_mtl: joint label out of range at " +
                      r.example_id);
    }
    auto [gb, gs] = labels::from_joint(labels::JointLabel{g});
    auto [pb, ps] = labels::from_joint(labels::JointLabel{p});
    PredictionRow n;
    n.example_id = r.example_id;
    n.category = r.category;
    n.gold["bias"] = static_cast<int>(gb);
    n.gold["stereotype"] = static_cast<int>(gs);
    n.pred["bias"] = static_cast<int>(pb);
    n.pred["stereotype"] = static_cast<int>(ps);
    out.rows.push_back(std::move(n));
  }
  return out;
}

std::vector<int> correctness_vector(const PredictionDump& dump,
                                    const std::string& task) {
  if (std::find(dump.tasks.begin(), dump.tasks.end(), task) ==
      dump.tasks.end()) {
    throw DataError("correctness_vector: no task \"" + task + "\" in dump");
  }
  std::vector<const PredictionRow*> rows;
  rows.reserve(dump.rows.size());
  for (const PredictionRow& r : dump.rows) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(),
            [](const PredictionRow* a, const PredictionRow* b) {
              return a->example_id < b->example_id;
            });
  std::vector<int> out;
  out.reserve(rows.size());
  for (const PredictionRow* r : rows) {
    out.push_back(r->gold.at(task) == r->pred.at(task) ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                  a * std::log(x) + b * std::log1p(-x);
  double bt = std::exp(log_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * beta_cf(a, b, x) / a;
  }
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw ConfigError("t distribution needs df > 0");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  double x = df / (df + t * t);
  return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

SignificanceResult paired_t_test(const std::vector<int>& a,
                                 const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("paired_t_test: length mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) {
    throw DataError("paired_t_test: need n >= 2, got " +
                    std::to_string(a.size()));
  }
  const std::size_t n = a.size();
  std::vector<double> d(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = static_cast<double>(b[i]) - static_cast<double>(a[i]);
    if (d[i] != 0.0) all_zero = false;
  }

  SignificanceResult res;
  res.n = n;
  res.hypothesis =
      "H0: no difference in mean correctness; "
      "H1: two-sided difference; alpha = 0.05";
  if (all_zero) {
    res.t_statistic = 0.0;
    res.p_value = 1.0;
    res.significant = false;
    return res;
  }

  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  res.mean_difference = mean;

  if (var == 0.0) {
    // Identical nonzero differences everywhere: infinitely strong signal.
    res.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
    res.significant = true;
    return res;
  }
  res.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
  res.p_value =
      student_t_two_sided_p(res.t_statistic, static_cast<double>(n - 1));
  res.significant = res.p_value < 0.05;
  return res;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> task_class_names(const std::string& task) {
  if (task == "joint") {
    std::vector<std::string> names;
    for (int k = 0; k < 4; ++k) {
      auto [b, s] = labels::from_joint(labels::JointLabel{k});
      names.push_back(labels::label_name(b, "bias") + "+" +
                      labels::label_name(s, "stereotype"));
    }
    return names;
  }
  if (labels::is_known_task(task)) {
    const auto& aliases = labels::task_aliases(task);
    return {aliases.negative_name, aliases.positive_name};
  }
  return {"0", "1"};
}

PredictionDump effective_dump(const PredictionDump& dump) {
  bool has_joint = std::find(dump.tasks.begin(), dump.tasks.end(), "joint") !=
                   dump.tasks.end();
  return has_joint ? decompose_full_mtl(dump) : dump;
}

std::vector<std::string> sorted_ids(const PredictionDump& dump) {
  std::vector<std::string> ids;
  ids.reserve(dump.rows.size());
  for (const PredictionRow& r : dump.rows) ids.push_back(r.example_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ReportEntry score_dump(const std::string& name, const PredictionDump& dump) {
  ReportEntry entry;
  entry.name = name;
  for (const std::string& task : dump.tasks) {
    std::vector<int> golds, preds;
    for (const PredictionRow& r : dump.rows) {
      golds.push_back(r.gold.at(task));
      preds.push_back(r.pred.at(task));
    }
    entry.tasks[task] = task_metrics(golds, preds, task_class_names(task));

    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>>
        by_category;
    for (const PredictionRow& r : dump.rows) {
      if (r.category.empty()) continue;
      by_category[r.category].first.push_back(r.gold.at(task));
      by_category[r.category].second.push_back(r.pred.at(task));
    }
    for (const auto& [cat, gp] : by_category) {
      entry.category_f1[task][cat] =
          macro_f1(gp.first, gp.second,
                   static_cast<int>(task_class_names(task).size()));
    }
  }
  return entry;
}

std::string format_f1(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string format_p(double v) {
  char buf[16];
  if (v != 0.0 && v < 0.0001) {
    std::snprintf(buf, sizeof(buf), "%.1e", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f", v);
  }
  return buf;
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++w;  // count UTF-8 lead bytes only
  }
  return w;
}

std::string pad(const std::string& s, std::size_t width) {
  std::string out = s;
  std::size_t w = display_width(s);
  while (w++ < width) out += ' ';
  return out;
}

}  // namespace

EvalReport build_report(
    const std::vector<std::pair<std::string, PredictionDump>>& runs,
    const std::vector<std::pair<std::string, PredictionDump>>& baselines) {
  if (runs.empty()) throw DataError("build_report: no runs");

  EvalReport report;
  report.split = runs.front().second.split;
  auto check_split = [&](const PredictionDump& d, const std::string& name) {
    if (d.split != report.split) {
      throw AlignmentError("run " + name + " is on split \"" + d.split +
                           "\" but report covers \"" + report.split + "\"");
    }
  };

  std::vector<std::pair<std::string, PredictionDump>> base_eff;
  for (const auto& [name, dump] : baselines) {
    dump.validate();
    check_split(dump, name);
    base_eff.emplace_back(name, effective_dump(dump));
    report.baseline_names.push_back(name);
    report.entries.push_back(score_dump(name, base_eff.back().second));
  }

  bool any_category = false;
  for (const auto& [name, dump] : runs) {
    dump.validate();
    check_split(dump, name);
    PredictionDump eff = effective_dump(dump);
    ReportEntry entry = score_dump(name, eff);

    std::vector<std::string> run_ids = sorted_ids(eff);
    for (const auto& [bname, bdump] : base_eff) {
      if (sorted_ids(bdump) != run_ids) {
        throw AlignmentError("run " + name + " and baseline " + bname +
                             " cover different example ids");
      }
      for (const std::string& task : eff.tasks) {
        if (std::find(bdump.tasks.begin(), bdump.tasks.end(), task) ==
            bdump.tasks.end()) {
          continue;
        }
        entry.significance[bname][task] = paired_t_test(
            correctness_vector(bdump, task), correctness_vector(eff, task));
      }
    }
    report.entries.push_back(std::move(entry));
  }

  for (const ReportEntry& e : report.entries) {
    if (!e.category_f1.empty()) any_category = true;
  }
  report.has_categories = any_category;
  if (!any_category) {
    report.category_note = "category breakdown omitted: no category labels";
  }
  return report;
}

std::string render_table(const EvalReport& report) {
  // Collect the task columns in a stable order.
  std::vector<std::string> tasks;
  for (const ReportEntry& e : report.entries) {
    for (const auto& [task, _] : e.tasks) {
      if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
        tasks.push_back(task);
      }
    }
  }
  std::sort(tasks.begin(), tasks.end());

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"run"};
  for (const std::string& t : tasks) header.push_back(t + " F1");
  grid.push_back(header);

  for (const ReportEntry& e : report.entries) {
    bool is_baseline =
        std::find(report.baseline_names.begin(), report.baseline_names.end(),
                  e.name) != report.baseline_names.end();
    std::vector<std::string> row = {is_baseline ? e.name + " (baseline)"
                                                : e.name};
    for (const std::string& t : tasks) {
      auto it = e.tasks.find(t);
      if (it == e.tasks.end()) {
        row.push_back("-");
        continue;
      }
      std::string cell = format_f1(it->second.macro_f1);
      // Up-arrow: significant improvement over any baseline on this task.
      for (const auto& [bname, per_task] : e.significance) {
        auto sit = per_task.find(t);
        if (sit != per_task.end() && sit->second.significant &&
            sit->second.mean_difference > 0) {
          cell += "↑";
          break;
        }
      }
      row.push_back(cell);
    }
    grid.push_back(row);
  }

  std::vector<std::size_t> widths(grid.front().size(), 0);
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], display_width(row[c]));
    }
  }

  std::ostringstream out;
  out << "split: " << report.split << "\n\n";
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      out << pad(grid[r][c], widths[c]) << (c + 1 < grid[r].size() ? "  " : "");
    }
    out << "\n";
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c) {
        out << std::string(widths[c], '-') << (c + 1 < widths.size() ? "  " : "");
      }
      out << "\n";
    }
  }

  bool any_significance = false;
  for (const ReportEntry& e : report.entries) {
    if (!e.significance.empty()) any_significance = true;
  }
  if (any_significance) {
    out << "\nsignificance (paired t-test on correctness, two-sided, alpha = "
           "0.05; ↑ marks p < 0.05 with positive mean difference):\n";
    for (const ReportEntry& e : report.entries) {
      for (const auto& [bname, per_task] : e.significance) {
        for (const auto& [task, sig] : per_task) {
          out << "  " << e.name << " vs " << bname << " [" << task
              << "]: t = " << format_f1(sig.t_statistic)
              << ", p = " << format_p(sig.p_value) << ", n = " << sig.n
              << ", mean diff = " << format_f1(sig.mean_difference)
              << (sig.significant ? " *" : "") << "\n";
        }
      }
    }
  }

  if (report.has_categories) {
    out << "\nper-category Macro-F1:\n";
    for (const ReportEntry& e : report.entries) {
      for (const auto& [task, cats] : e.category_f1) {
        for (const auto& [cat, f1] : cats) {
          out << "  " << e.name << " [" << task << "/" << cat
              << "]: " << format_f1(f1) << "\n";
        }
      }
    }
  } else if (!report.category_note.empty()) {
    out << "\n" << report.category_note << "\n";
  }
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["split"] = report.split;
  j["baselines"] = report.baseline_names;
  json entries = json::array();
  for (const ReportEntry& e : report.entries) {
    json je;
    je["name"] = e.name;
    json tasks;
    for (const auto& [task, m] : e.tasks) {
      json jt;
      jt["macro_f1"] = m.macro_f1;
      jt["classes"] = m.classes;
      jt["confusion"] = m.confusion;
      json per_class = json::array();
      for (const ClassMetrics& c : m.per_class) {
        per_class.push_back({{"label", c.label},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"tp", c.tp},
                             {"fp", c.fp},
                             {"fn", c.fn}});
      }
      jt["per_class"] = per_class;
      tasks[task] = jt;
    }
    je["tasks"] = tasks;
    if (!e.category_f1.empty()) je["category_macro_f1"] = e.category_f1;
    json sig;
    for (const auto& [bname, per_task] : e.significance) {
      json jb;
      for (const auto& [task, s] : per_task) {
        jb[task] = {{"t", s.t_statistic},       {"p", s.p_value},
                    {"n", s.n},                 {"mean_difference", s.mean_difference},
                    {"significant", s.significant}, {"hypothesis", s.hypothesis}};
      }
      sig[bname] = jb;
    }
    if (!sig.empty()) je["significance"] = sig;
    entries.push_back(je);
  }
  j["entries"] = entries;
  if (!report.has_categories && !report.category_note.empty()) {
    j["category_note"] = report.category_note;
  }
  return j.dump(2) + "\n";
}

}  // namespace biaslab::eval
