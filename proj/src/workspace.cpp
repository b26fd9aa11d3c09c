#include "biaslab/workspace.h"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <set>
#include <sstream>

#include "biaslab/common.h"
#include "biaslab/evaluation.h"
#include "biaslab/io.h"
#include "biaslab/modeling.h"
#include "biaslab/promptlab.h"

namespace biaslab::workspace {

namespace fs = std::filesystem;
using nlohmann::json;

void Workspace::ensure_layout() const {
  fs::create_directories(data_dir());
  fs::create_directories(runs_dir());
  fs::create_directories(reports_dir());
}

Workspace resolve_workspace(const std::string& flag_value) {
  if (!flag_value.empty()) return Workspace{fs::path(flag_value)};
  if (const char* env = std::getenv("BIASLAB_WORKSPACE")) {
    if (*env) return Workspace{fs::path(env)};
  }
  return Workspace{fs::path("workspace")};
}

json load_config(const fs::path& path) {
  std::string content = io::read_file(path);
  json j;
  try {
    j = json::parse(content, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError(path.string() + ": config must be a JSON object");
  }
  return j;
}

std::string config_hash(const json& config) {
  return hex64(fnv1a64(config.dump()));
}

std::string make_run_id(const Workspace& ws, const std::string& name,
                        const json& config) {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y%m%dT%H%M%S", &tm);
  std::string base = name + "-" + ts + "-" + config_hash(config).substr(0, 8);
  std::string id = base;
  for (int k = 2; fs::exists(ws.runs_dir() / id); ++k) {
    id = base + "-" + std::to_string(k);
  }
  return id;
}

namespace {

fs::path resolve_relative(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_json_file(const fs::path& path, const json& j) {
  io::write_file(path, j.dump(2) + "\n");
}

std::array<double, 3> ratios_from(const json& j) {
  if (!j.contains("ratios")) return {0.72, 0.08, 0.20};
  auto v = j.at("ratios").get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("ratios must have 3 entries");
  return {v[0], v[1], v[2]};
}

}  // namespace

trainer::ExperimentConfig experiment_from_json(const json& j) {
  trainer::ExperimentConfig c;
  if (!j.contains("mode")) throw ConfigError("config is missing \"mode\"");
  c.mode.mode = labels::parse_task_mode(j.at("mode").get<std::string>());
  if (j.contains("auxiliary")) {
    c.mode.auxiliary =
        labels::parse_auxiliary_task(j.at("auxiliary").get<std::string>());
  } else if (c.mode.mode == labels::TaskMode::shared_mtl ||
             c.mode.mode == labels::TaskMode::stl_auxiliary) {
    c.mode.auxiliary = labels::AuxiliaryTask::stereotype;
  }
  c.backend_id = j.value("backend", std::string("stub"));
  if (j.contains("pooling")) {
    c.pooling = modeling::parse_pooling(j.at("pooling").get<std::string>());
  }
  c.learning_rate = j.value("learning_rate", 3e-4);
  c.allow_custom_lr = j.value("allow_custom_lr", false);
  c.epochs = j.value("epochs", 10);
  c.batch_size = j.value("batch_size", 8);
  c.grad_accumulation = j.value("grad_accumulation", 1);
  c.seed = j.value("seed", std::uint64_t{42});
  if (j.contains("task_weights")) {
    c.task_weights =
        j.at("task_weights").get<std::map<std::string, double>>();
  }
  if (j.contains("adaptation")) {
    const json& a = j.at("adaptation");
    if (a.contains("method")) {
      c.adaptation.method =
          modeling::parse_adaptation_method(a.at("method").get<std::string>());
    }
    c.adaptation.quant_bits = a.value("quant_bits", c.adaptation.quant_bits);
    c.adaptation.rank = a.value("rank", c.adaptation.rank);
    c.adaptation.alpha = a.value("alpha", c.adaptation.alpha);
    c.adaptation.dropout = a.value("dropout", c.adaptation.dropout);
  }
  c.validate();
  return c;
}

corpus::DatasetSplit load_split(const Workspace& ws,
                                const std::string& dataset_name) {
  corpus::DatasetSplit split;
  split.train =
      corpus::read_dataset(ws.data_dir() / (dataset_name + ".train.tsv"));
  split.validation =
      corpus::read_dataset(ws.data_dir() / (dataset_name + ".val.tsv"));
  split.test =
      corpus::read_dataset(ws.data_dir() / (dataset_name + ".test.tsv"));
  return split;
}

// ---------------------------------------------------------------------------

std::string distribution_svg(const corpus::DatasetStats& stats) {
  struct Bar {
    std::string label;
    std::size_t count;
  };
  std::vector<Bar> bars;
  for (int k = 0; k < 4; ++k) {
    auto [b, s] = labels::from_joint(labels::JointLabel{k});
    bars.push_back({labels::label_name(b, "bias") + "+" +
                        labels::label_name(s, "stereotype"),
                    stats.joint_counts[static_cast<std::size_t>(k)]});
  }
  std::vector<Bar> cats;
  for (const auto& [name, count] : stats.category_counts) {
    if (count > 0) cats.push_back({name, count});
  }

  std::size_t maxc = 1;
  for (const Bar& b : bars) maxc = std::max(maxc, b.count);
  for (const Bar& b : cats) maxc = std::max(maxc, b.count);

  const int bar_w = 56, gap = 14, chart_h = 180;
  const int top1 = 40, top2 = 280;
  int width = std::max<int>(640, 40 + static_cast<int>(std::max(
                                          bars.size(), cats.size())) *
                                         (bar_w + gap));
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"520\" viewBox=\"0 0 " << width << " 520\">\n"
      << "<style>text{font-family:sans-serif;font-size:11px;}"
         ".t{font-size:14px;font-weight:bold;}</style>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text class=\"t\" x=\"20\" y=\"24\">joint label distribution (total "
      << stats.total << ")</text>\n";
  auto draw = [&](const std::vector<Bar>& group, int top,
                  const std::string& color) {
    int x = 40;
    for (const Bar& b : group) {
      int h = static_cast<int>(static_cast<double>(b.count) / maxc * chart_h);
      int y = top + chart_h - h;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w
          << "\" height=\"" << h << "\" fill=\"" << color << "\"/>\n"
          << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << y - 4
          << "\" text-anchor=\"middle\">" << b.count << "</text>\n"
          << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + chart_h + 14
          << "\" text-anchor=\"middle\">" << b.label << "</text>\n";
      x += bar_w + gap;
    }
  };
  draw(bars, top1, "#4878a8");
  svg << "<text class=\"t\" x=\"20\" y=\"" << top2 - 16
      << "\">category distribution</text>\n";
  draw(cats, top2, "#a85f48");
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------

void cmd_build_dataset(const fs::path& config_path, const Workspace& ws,
                       const CliOverrides& over) {
  json j = load_config(config_path);
  if (over.seed) j["seed"] = *over.seed;
  ws.ensure_layout();
  const fs::path base = config_path.parent_path();
  if (!j.contains("sources")) {
    throw ConfigError(config_path.string() + ": missing \"sources\"");
  }
  const json& sources = j.at("sources");
  const std::string name = j.value("name", std::string("dataset"));
  const std::uint64_t seed = j.value("seed", std::uint64_t{13});
  const auto ratios = ratios_from(j);
  const bool include_neutral = j.value("include_neutral", true);
  const std::string marker = j.value("blank_marker", std::string("BLANK"));

  std::vector<corpus::SentenceRecord> records;
  if (sources.contains("crows_pairs")) {
    auto rows = corpus::read_paired_csv(
        resolve_relative(base, sources.at("crows_pairs").get<std::string>()));
    auto recs = corpus::extract_crows_pairs(rows);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  if (sources.contains("stereoset")) {
    auto items = corpus::read_stereoset_json(
        resolve_relative(base, sources.at("stereoset").get<std::string>()));
    auto recs = corpus::extract_stereoset(items, include_neutral, marker);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  // Pre-labeled auxiliary sources skip annotation aggregation and are kept
  // out of the main split.
  std::vector<corpus::SentenceRecord> auxiliary;
  const std::pair<const char*, corpus::Source> aux_sources[] = {
      {"toxicbias", corpus::Source::toxicbias},
      {"babe", corpus::Source::babe},
      {"sst2", corpus::Source::sst2}};
  for (const auto& [key, source] : aux_sources) {
    if (!sources.contains(key)) continue;
    auto recs = corpus::read_text_label_tsv(
        resolve_relative(base, sources.at(key).get<std::string>()), source);
    auxiliary.insert(auxiliary.end(), recs.begin(), recs.end());
  }
  if (records.empty()) {
    throw DataError("no sentences extracted from the configured sources");
  }
  if (!sources.contains("annotations")) {
    throw ConfigError(config_path.string() +
                      ": missing \"sources.annotations\"");
  }
  auto annotations = corpus::read_annotations(
      resolve_relative(base, sources.at("annotations").get<std::string>()));
  corpus::AggregationResult agg =
      corpus::aggregate_annotations(records, annotations);

  if (!agg.tie_ids.empty()) {
    io::Table review;
    review.columns = {"sentence_id", "text"};
    for (const std::string& id : agg.tie_ids) {
      for (const corpus::SentenceRecord& r : records) {
        if (r.id == id) {
          review.rows.push_back({id, r.text});
          break;
        }
      }
    }
    fs::path review_path = ws.reports_dir() / (name + "-ties.tsv");
    io::write_tsv(review_path, review);
    throw TieError(std::to_string(agg.tie_ids.size()) +
                   " sentences have tied votes; review file written to " +
                   review_path.string());
  }

  corpus::DatasetStats stats = corpus::dataset_stats(agg.labeled);
  corpus::DatasetSplit split = corpus::split(agg.labeled, ratios, seed);

  corpus::write_dataset(ws.data_dir() / (name + ".tsv"), agg.labeled);
  corpus::write_dataset(ws.data_dir() / (name + ".train.tsv"), split.train);
  corpus::write_dataset(ws.data_dir() / (name + ".val.tsv"), split.validation);
  corpus::write_dataset(ws.data_dir() / (name + ".test.tsv"), split.test);
  if (!auxiliary.empty()) {
    corpus::write_dataset(ws.data_dir() / (name + ".aux.tsv"), auxiliary);
  }

  json report = json::parse(corpus::stats_to_json(stats));
  report["name"] = name;
  report["agreement"] = {{"kappa_bias", agg.agreement.kappa_bias},
                         {"kappa_stereotype", agg.agreement.kappa_stereotype},
                         {"n_items", agg.agreement.n_items},
                         {"n_annotators", agg.agreement.n_annotators}};
  report["split_sizes"] = {split.train.size(), split.validation.size(),
                           split.test.size()};
  report["ratios"] = ratios;
  report["seed"] = seed;
  write_json_file(ws.reports_dir() / (name + "-stats.json"), report);
  io::write_file(ws.reports_dir() / (name + "-distribution.svg"),
                 distribution_svg(stats));

  std::cout << "dataset " << name << ": " << stats.total << " sentences ("
            << split.train.size() << "/" << split.validation.size() << "/"
            << split.test.size() << " train/val/test)\n"
            << "kappa: bias " << agg.agreement.kappa_bias << ", stereotype "
            << agg.agreement.kappa_stereotype << "\n";
}

// ---------------------------------------------------------------------------

namespace {

void write_metrics_tsv(const fs::path& path, const trainer::RunRecord& rec) {
  io::Table t;
  t.columns = {"epoch", "train_loss", "val_loss", "selection_score"};
  std::vector<std::string> f1_tasks;
  if (!rec.epochs.empty()) {
    for (const auto& [task, _] : rec.epochs.front().val_f1) {
      f1_tasks.push_back(task);
      t.columns.push_back("val_f1_" + task);
    }
  }
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (std::size_t e = 0; e < rec.epochs.size(); ++e) {
    const trainer::EpochMetrics& em = rec.epochs[e];
    std::vector<std::string> row = {std::to_string(e + 1),
                                    fmt(em.train_loss), fmt(em.val_loss),
                                    fmt(em.selection_score)};
    for (const std::string& task : f1_tasks) {
      row.push_back(fmt(em.val_f1.at(task)));
    }
    t.rows.push_back(std::move(row));
  }
  io::write_tsv(path, t);
}

json run_summary_json(const std::string& run_id, const std::string& command,
                      const std::string& hash, const trainer::RunRecord& rec,
                      const std::string& dataset) {
  json r;
  r["run_id"] = run_id;
  r["command"] = command;
  r["config_hash"] = hash;
  r["dataset"] = dataset;
  r["mode"] = rec.config.mode.describe();
  r["backend"] = rec.config.backend_id;
  r["pooling"] = modeling::pooling_name(rec.config.pooling);
  r["optimizer"] = rec.optimizer;
  r["learning_rate"] = rec.config.learning_rate;
  r["epochs"] = rec.config.epochs;
  r["batch_size"] = rec.config.batch_size;
  r["grad_accumulation"] = rec.config.grad_accumulation;
  r["seed"] = rec.config.seed;
  r["best_epoch"] = rec.best_epoch;
  r["best_score"] = rec.best_score;
  r["wall_time_seconds"] = rec.wall_time_seconds;
  r["truncation_count"] = rec.truncation_count;
  r["diverged"] = rec.diverged;
  r["completed"] = true;
  return r;
}

std::optional<fs::path> find_completed_run(const Workspace& ws,
                                           const std::string& hash) {
  if (!fs::exists(ws.runs_dir())) return std::nullopt;
  for (const auto& entry : fs::directory_iterator(ws.runs_dir())) {
    fs::path summary = entry.path() / "run.json";
    if (!fs::exists(summary)) continue;
    try {
      json r = json::parse(io::read_file(summary));
      if (r.value("config_hash", std::string()) == hash &&
          r.value("completed", false)) {
        return entry.path();
      }
    } catch (const std::exception&) {
      continue;  // unreadable run summaries never block new runs
    }
  }
  return std::nullopt;
}

}  // namespace

fs::path cmd_train(const fs::path& config_path, const Workspace& ws,
                   bool resume, const CliOverrides& over) {
  json j = load_config(config_path);
  if (over.seed) j["seed"] = *over.seed;
  if (over.backend) j["backend"] = *over.backend;
  ws.ensure_layout();
  trainer::ExperimentConfig cfg = experiment_from_json(j);
  if (!j.contains("dataset")) {
    throw ConfigError(config_path.string() + ": missing \"dataset\"");
  }
  const std::string dataset = j.at("dataset").get<std::string>();
  const std::string hash = config_hash(j);

  if (resume) {
    if (auto existing = find_completed_run(ws, hash)) {
      std::cout << "run for this config already completed: "
                << existing->string() << " (resume is a no-op)\n";
      return *existing;
    }
  }

  corpus::DatasetSplit split = load_split(ws, dataset);
  const std::string run_name =
      j.value("run_name", labels::task_mode_name(cfg.mode.mode));
  const std::string run_id = make_run_id(ws, run_name, j);
  const fs::path dir = ws.runs_dir() / run_id;
  fs::create_directories(dir);
  io::write_file(dir / "config.json", io::read_file(config_path));

  trainer::RunRecord rec;
  try {
    rec = trainer::train(cfg, split);
  } catch (const DivergenceError& e) {
    json r;
    r["run_id"] = run_id;
    r["command"] = "train";
    r["config_hash"] = hash;
    r["dataset"] = dataset;
    r["diverged"] = true;
    r["divergence_note"] = e.what();
    r["completed"] = false;
    write_json_file(dir / "run.json", r);
    throw;
  }

  write_metrics_tsv(dir / "metrics.tsv", rec);
  modeling::save_checkpoint(dir / "checkpoint.json", rec.checkpoint);
  rec.validation_dump.fingerprint = hash;
  eval::write_dump(dir / "predictions.validation.tsv", rec.validation_dump);
  if (!split.test.empty()) {
    eval::write_dump(
        dir / "predictions.test.tsv",
        trainer::predict_dump(rec.checkpoint, split.test, "test", hash));
  }
  write_json_file(dir / "run.json",
                  run_summary_json(run_id, "train", hash, rec, dataset));

  std::cout << "run " << run_id << ": best epoch " << rec.best_epoch << " of "
            << rec.config.epochs << ", selection score " << rec.best_score
            << "\n";
  return dir;
}

fs::path cmd_grid(const fs::path& config_path, const Workspace& ws,
                  int workers, const CliOverrides& over) {
  json j = load_config(config_path);
  if (over.seed) j["seed"] = *over.seed;
  if (over.backend) j["backend"] = *over.backend;
  ws.ensure_layout();
  trainer::ExperimentConfig base = experiment_from_json(j);
  if (!j.contains("dataset")) {
    throw ConfigError(config_path.string() + ": missing \"dataset\"");
  }
  const std::string dataset = j.at("dataset").get<std::string>();
  corpus::DatasetSplit split = load_split(ws, dataset);

  trainer::GridAxes axes;
  axes.learning_rates = trainer::learning_rate_grid();
  axes.epochs = trainer::encoder_epoch_grid();
  axes.batch_sizes = trainer::batch_size_grid();
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("learning_rates")) {
      axes.learning_rates = g.at("learning_rates").get<std::vector<double>>();
    }
    if (g.contains("epochs")) {
      axes.epochs = g.at("epochs").get<std::vector<int>>();
    }
    if (g.contains("batch_sizes")) {
      axes.batch_sizes = g.at("batch_sizes").get<std::vector<int>>();
    }
  }

  trainer::GridResult result = trainer::grid_search(base, axes, split, workers);

  const std::string hash = config_hash(j);
  const std::string run_id = make_run_id(ws, "grid", j);
  const fs::path dir = ws.runs_dir() / run_id;
  fs::create_directories(dir);
  io::write_file(dir / "config.json", io::read_file(config_path));

  io::Table t;
  t.meta["best_index"] = std::to_string(result.best_index);
  t.columns = {"index",      "learning_rate", "epochs",     "batch_size",
               "seed",       "diverged",      "best_epoch", "best_score"};
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const trainer::RunRecord& r = result.runs[i];
    char lr[32];
    std::snprintf(lr, sizeof(lr), "%g", r.config.learning_rate);
    t.rows.push_back({std::to_string(i), lr,
                      std::to_string(r.config.epochs),
                      std::to_string(r.config.batch_size),
                      std::to_string(r.config.seed),
                      r.diverged ? "1" : "0",
                      std::to_string(r.best_epoch),
                      std::to_string(r.best_score)});
  }
  io::write_tsv(dir / "grid_summary.tsv", t);

  const trainer::RunRecord& best = result.runs[result.best_index];
  modeling::save_checkpoint(dir / "checkpoint.json", best.checkpoint);
  eval::PredictionDump val_dump = best.validation_dump;
  val_dump.fingerprint = hash;
  eval::write_dump(dir / "predictions.validation.tsv", val_dump);
  if (!split.test.empty()) {
    eval::write_dump(
        dir / "predictions.test.tsv",
        trainer::predict_dump(best.checkpoint, split.test, "test", hash));
  }
  json r = run_summary_json(run_id, "grid", hash, best, dataset);
  r["grid_runs"] = result.runs.size();
  r["best_index"] = result.best_index;
  write_json_file(dir / "run.json", r);

  std::cout << "grid " << run_id << ": " << result.runs.size()
            << " runs, best #" << result.best_index << " (lr "
            << best.config.learning_rate << ", epochs " << best.config.epochs
            << ", batch " << best.config.batch_size << ", score "
            << best.best_score << ")\n";
  return dir;
}

void cmd_evaluate(const std::vector<std::string>& run_ids,
                  const std::vector<std::string>& baseline_ids,
                  const std::string& split, const Workspace& ws) {
  if (run_ids.empty()) throw ConfigError("evaluate: no run ids given");
  auto load = [&](const std::string& id) {
    fs::path dir = fs::exists(fs::path(id)) ? fs::path(id) : ws.runs_dir() / id;
    fs::path dump = dir / ("predictions." + split + ".tsv");
    if (!fs::exists(dump)) {
      throw DataError("no " + split + " predictions at " + dump.string());
    }
    return std::make_pair(dir.filename().string(), eval::read_dump(dump));
  };
  std::vector<std::pair<std::string, eval::PredictionDump>> runs, baselines;
  for (const std::string& id : baseline_ids) baselines.push_back(load(id));
  for (const std::string& id : run_ids) runs.push_back(load(id));

  eval::EvalReport report = eval::build_report(runs, baselines);
  std::string table = eval::render_table(report);

  ws.ensure_layout();
  std::string all_ids;
  for (const auto& [name, _] : baselines) all_ids += name + "+";
  for (const auto& [name, _] : runs) all_ids += name + "+";
  std::string stem = "eval-" + split + "-" + hex64(fnv1a64(all_ids)).substr(0, 8);
  io::write_file(ws.reports_dir() / (stem + ".txt"), table);
  io::write_file(ws.reports_dir() / (stem + ".json"), report_to_json(report));
  std::cout << table << "\nreport written to "
            << (ws.reports_dir() / (stem + ".txt")).string() << "\n";
}

// ---------------------------------------------------------------------------

namespace {

double dump_macro_f1(const eval::PredictionDump& dump, const std::string& task,
                     int n_classes) {
  std::vector<int> golds, preds;
  for (const eval::PredictionRow& row : dump.rows) {
    golds.push_back(row.gold.at(task));
    preds.push_back(row.pred.at(task));
  }
  return eval::macro_f1(golds, preds, n_classes);
}

std::vector<prompt::Shot> manual_shots_from(const json& arr) {
  std::vector<prompt::Shot> shots;
  for (const json& s : arr) {
    shots.push_back(
        {s.at("sentence").get<std::string>(), s.at("answer").get<std::string>()});
  }
  return shots;
}

}  // namespace

fs::path cmd_prompt(const fs::path& config_path, const Workspace& ws,
                    const CliOverrides& over) {
  json j = load_config(config_path);
  if (over.seed) j["seed"] = *over.seed;
  if (over.backend) j["lm_backend"] = *over.backend;
  ws.ensure_layout();
  if (!j.contains("lm_backend")) {
    throw ConfigError(config_path.string() + ": missing \"lm_backend\"");
  }
  if (!j.contains("dataset")) {
    throw ConfigError(config_path.string() + ": missing \"dataset\"");
  }
  const std::string task = j.value("task", std::string("bias"));
  const std::uint64_t seed = j.value("seed", std::uint64_t{7});
  const std::string ranking = j.value("ranking", std::string("perplexity"));
  prompt::RankBy rank;
  if (ranking == "perplexity") {
    rank = prompt::RankBy::perplexity;
  } else if (ranking == "raw_nll") {
    rank = prompt::RankBy::raw_nll;
  } else {
    throw ConfigError("unknown ranking \"" + ranking + "\"");
  }

  corpus::DatasetSplit split =
      load_split(ws, j.at("dataset").get<std::string>());
  auto options = prompt::default_options(task);

  std::vector<std::string> instructions;
  if (!j.contains("instructions") ||
      (j.at("instructions").is_string() &&
       j.at("instructions").get<std::string>() == "catalog")) {
    instructions = prompt::instruction_catalog();
  } else {
    instructions = j.at("instructions").get<std::vector<std::string>>();
  }

  std::vector<prompt::Shot> shots;
  std::size_t shot_count = 0;
  if (j.contains("shots")) {
    const json& s = j.at("shots");
    if (s.is_number_integer()) {
      shot_count = s.get<std::size_t>();
      if (shot_count > 0) {
        shots = prompt::sample_shots(split.validation, shot_count, seed, task,
                                     options);
      }
    } else if (s.is_object() && s.contains("manual")) {
      shots = manual_shots_from(s.at("manual"));
      shot_count = shots.size();
    } else {
      throw ConfigError("\"shots\" must be an integer or {\"manual\": [...]}");
    }
  }

  std::vector<prompt::PromptSpec> specs;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    prompt::PromptSpec spec;
    spec.name = "prompt-" + std::to_string(i + 1);
    spec.instruction = instructions[i];
    spec.options = options;
    spec.shots = shots;
    spec.task = task;
    spec.validate();
    specs.push_back(std::move(spec));
  }

  auto lm = prompt::make_lm_backend(j.at("lm_backend").get<std::string>(), seed);
  prompt::SelectionOutcome selection =
      prompt::select_prompt(*lm, specs, split.validation, rank);
  const prompt::PromptSpec& winner = specs[selection.best_index];

  const std::string hash = config_hash(j);
  prompt::PromptEvalResult test_result =
      prompt::run_prompt_eval(*lm, winner, split.test, "test", rank, hash);

  const std::string run_id = make_run_id(ws, "prompt", j);
  const fs::path dir = ws.runs_dir() / run_id;
  fs::create_directories(dir);
  io::write_file(dir / "config.json", io::read_file(config_path));
  eval::write_dump(dir / "predictions.test.tsv", test_result.dump);

  json sel;
  sel["task"] = task;
  sel["ranking"] = ranking;
  sel["shots"] = shot_count;
  json rows = json::array();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    rows.push_back({{"name", specs[i].name},
                    {"instruction", specs[i].instruction},
                    {"validation_macro_f1", selection.validation_f1[i]}});
  }
  sel["prompts"] = rows;
  sel["best_index"] = selection.best_index;
  sel["winner"] = winner.name;
  sel["test_macro_f1"] = dump_macro_f1(test_result.dump, task,
                                       static_cast<int>(options.size()));
  sel["ranking_disagreements"] = test_result.ranking_disagreements;

  // Manual-vs-random shot comparison as a first-class mode.
  if (j.contains("compare_shots")) {
    const json& c = j.at("compare_shots");
    prompt::PromptSpec manual = winner;
    manual.shots = manual_shots_from(c.at("manual"));
    prompt::PromptSpec random = winner;
    std::size_t k = c.value("k", manual.shots.size());
    random.shots = prompt::sample_shots(
        split.validation, k, c.value("seed", seed), task, options);
    auto manual_res =
        prompt::run_prompt_eval(*lm, manual, split.test, "test", rank, hash);
    auto random_res =
        prompt::run_prompt_eval(*lm, random, split.test, "test", rank, hash);
    eval::write_dump(dir / "predictions.manual_shots.tsv", manual_res.dump);
    eval::write_dump(dir / "predictions.random_shots.tsv", random_res.dump);
    sel["shot_comparison"] = {
        {"manual_macro_f1",
         dump_macro_f1(manual_res.dump, task, static_cast<int>(options.size()))},
        {"random_macro_f1",
         dump_macro_f1(random_res.dump, task,
                       static_cast<int>(options.size()))},
        {"k", k}};
  }
  write_json_file(dir / "selection.json", sel);

  json r;
  r["run_id"] = run_id;
  r["command"] = "prompt";
  r["config_hash"] = hash;
  r["dataset"] = j.at("dataset").get<std::string>();
  r["task"] = task;
  r["shots"] = shot_count;
  r["winner"] = winner.name;
  r["completed"] = true;
  write_json_file(dir / "run.json", r);

  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::cout << specs[i].name << ": validation Macro-F1 "
              << selection.validation_f1[i]
              << (i == selection.best_index ? "  <- selected" : "") << "\n";
  }
  std::cout << "test Macro-F1 (" << winner.name
            << "): " << sel["test_macro_f1"].get<double>() << "\n";
  return dir;
}

void cmd_report(const Workspace& ws) {
  ws.ensure_layout();
  json summary = json::array();
  std::vector<std::string> lines;
  if (fs::exists(ws.runs_dir())) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(ws.runs_dir())) {
      dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& dir : dirs) {
      fs::path rj = dir / "run.json";
      if (!fs::exists(rj)) continue;
      try {
        json r = json::parse(io::read_file(rj));
        summary.push_back(r);
        std::string line = r.value("run_id", dir.filename().string()) + "  " +
                           r.value("command", std::string("?"));
        if (r.contains("mode")) line += "  " + r["mode"].get<std::string>();
        if (r.contains("best_score")) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.4f", r["best_score"].get<double>());
          line += "  best_score=" + std::string(buf);
        }
        if (r.contains("winner")) line += "  winner=" + r["winner"].get<std::string>();
        if (r.value("diverged", false)) line += "  DIVERGED";
        lines.push_back(line);
      } catch (const std::exception&) {
        lines.push_back(dir.filename().string() + "  (unreadable run.json)");
      }
    }
  }
  std::string text = join(lines, "\n") + (lines.empty() ? "" : "\n");
  if (lines.empty()) text = "no runs recorded\n";
  io::write_file(ws.reports_dir() / "summary.txt", text);
  write_json_file(ws.reports_dir() / "summary.json", summary);
  std::cout << text;
}

}  // namespace biaslab::workspace
