#pragma once

// Macro-F1 and per-class metrics, prediction dumps, Full-MTL decomposition,
// paired t-tests, and report assembly/rendering.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace biaslab::eval {

// Macro-F1 over integer class ids in [0, n_classes). Per-class F1 uses the
// 0-when-undefined convention; classes never seen still count in the mean.
double macro_f1(const std::vector<int>& golds, const std::vector<int>& preds,
                int n_classes);

// Same metric over string labels drawn from an explicit class list.
double macro_f1(const std::vector<std::string>& golds,
                const std::vector<std::string>& preds,
                const std::vector<std::string>& classes);

struct ClassMetrics {
  std::string label;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct TaskMetrics {
  std::vector<std::string> classes;
  std::vector<std::vector<long>> confusion;  // [gold][pred]
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
};

TaskMetrics task_metrics(const std::vector<int>& golds,
                         const std::vector<int>& preds,
                         const std::vector<std::string>& classes);

// ---------------------------------------------------------------------------

struct PredictionRow {
  std::string example_id;
  std::string category;             // may be empty
  std::map<std::string, int> gold;  // task -> class id
  std::map<std::string, int> pred;
};

struct PredictionDump {
  std::string split;
  std::string fingerprint;  // config hash of the producing run
  std::vector<std::string> tasks;
  std::vector<PredictionRow> rows;

  void validate() const;  // unique ids, tasks consistent across rows
};

void write_dump(const std::filesystem::path& path, const PredictionDump& dump);
PredictionDump read_dump(const std::filesystem::path& path);

// Rowwise from_joint on gold and predicted joint labels; yields a dump with
// bias + stereotype tasks.
PredictionDump decompose_full_mtl(const PredictionDump& dump);

// 1 where pred == gold else 0, ordered canonically by example_id.
std::vector<int> correctness_vector(const PredictionDump& dump,
                                    const std::string& task);

// ---------------------------------------------------------------------------

struct SignificanceResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  double mean_difference = 0.0;
  bool significant = false;  // p_value < 0.05
  std::string hypothesis;
};

// Paired t-test on aligned 0/1 correctness vectors; d = b - a, two-sided p
// with n-1 degrees of freedom. All-zero differences give (t=0, p=1).
SignificanceResult paired_t_test(const std::vector<int>& a,
                                 const std::vector<int>& b);

// Two-sided tail probability of Student's t with df degrees of freedom,
// computed through the regularized incomplete beta continued fraction.
double student_t_two_sided_p(double t, double df);

// ---------------------------------------------------------------------------

struct ReportEntry {
  std::string name;
  std::map<std::string, TaskMetrics> tasks;
  // task -> category -> Macro-F1 (populated when rows carry categories)
  std::map<std::string, std::map<std::string, double>> category_f1;
  // baseline name -> task -> significance of this run vs. the baseline
  std::map<std::string, std::map<std::string, SignificanceResult>> significance;
};

struct EvalReport {
  std::string split;
  std::vector<std::string> baseline_names;
  std::vector<ReportEntry> entries;  // baselines first, then runs
  bool has_categories = false;
  std::string category_note;
};

// Dumps and baselines are (name, dump) pairs sharing one split; joint-task
// dumps are decomposed before scoring.
EvalReport build_report(
    const std::vector<std::pair<std::string, PredictionDump>>& runs,
    const std::vector<std::pair<std::string, PredictionDump>>& baselines);

// Aligned-text table: one row per run, per-task Macro-F1 columns, and for
// each baseline a p-value column with an up-arrow marker on significant
// improvements.
std::string render_table(const EvalReport& report);

std::string report_to_json(const EvalReport& report);

}  // namespace biaslab::eval
