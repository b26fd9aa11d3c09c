#include "biaslab/trainer.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "biaslab/common.h"

namespace biaslab::trainer {

const std::vector<double>& learning_rate_grid() {
  static const std::vector<double> grid = {1e-3, 3e-3, 5e-3, 1e-4, 3e-4,
                                           5e-4, 1e-5, 3e-5, 5e-5};
  return grid;
}

const std::vector<int>& encoder_epoch_grid() {
  static const std::vector<int> grid = {2, 5, 8, 10};
  return grid;
}

const std::vector<int>& decoder_epoch_grid() {
  static const std::vector<int> grid = {5, 8, 10, 12, 15};
  return grid;
}

const std::vector<int>& batch_size_grid() {
  static const std::vector<int> grid = {4, 8, 16};
  return grid;
}

void ExperimentConfig::validate() const {
  mode.validate();
  adaptation.validate();
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!allow_custom_lr) {
    const auto& grid = learning_rate_grid();
    if (std::find(grid.begin(), grid.end(), learning_rate) == grid.end()) {
      throw ConfigError("learning_rate " + std::to_string(learning_rate) +
                        " is not in the published sweep; set allow_custom_lr "
                        "to override");
    }
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_accumulation < 1) {
    throw ConfigError("grad_accumulation must be >= 1");
  }
}

int gold_for(const corpus::SentenceRecord& record, const std::string& task) {
  return corpus::task_gold(record, task);
}

namespace {

double weight_of(const std::map<std::string, double>& weights,
                 const std::string& task) {
  auto it = weights.find(task);
  return it == weights.end() ? 1.0 : it->second;
}

std::vector<std::string> active_tasks(const ExperimentConfig& config) {
  std::vector<std::string> out;
  for (const std::string& t : config.mode.head_tasks()) {
    if (weight_of(config.task_weights, t) != 0.0) out.push_back(t);
  }
  if (out.empty()) throw ConfigError("all head tasks have zero loss weight");
  return out;
}

double selection_score(const labels::TaskModeSpec& mode,
                       const std::map<std::string, double>& val_f1) {
  if (mode.mode == labels::TaskMode::full_mtl) {
    return (val_f1.at("bias") + val_f1.at("stereotype")) / 2.0;
  }
  // STL: the single task's score. Shared-MTL: unweighted mean of the heads.
  double sum = 0.0;
  int n = 0;
  for (const auto& [task, f1] : val_f1) {
    sum += f1;
    ++n;
  }
  return sum / n;
}

struct AdamState {
  Eigen::MatrixXd mw, vw;
  Eigen::VectorXd mb, vb;
};

class Adam {
 public:
  Adam(modeling::HeadSet& heads, double lr) : heads_(heads), lr_(lr) {
    for (const modeling::Head& h : heads.heads) {
      AdamState s;
      s.mw = Eigen::MatrixXd::Zero(h.weight.rows(), h.weight.cols());
      s.vw = s.mw;
      s.mb = Eigen::VectorXd::Zero(h.bias.size());
      s.vb = s.mb;
      state_[h.task] = std::move(s);
    }
  }

  void step(const std::map<std::string, modeling::HeadGrad>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(kBeta1, t_);
    double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (const auto& [task, g] : grads) {
      AdamState& s = state_.at(task);
      modeling::Head& h = heads_.head(task);
      s.mw = kBeta1 * s.mw + (1.0 - kBeta1) * g.weight;
      s.vw = kBeta2 * s.vw.array().matrix() +
             (1.0 - kBeta2) * g.weight.array().square().matrix();
      s.mb = kBeta1 * s.mb + (1.0 - kBeta1) * g.bias;
      s.vb = kBeta2 * s.vb.array().matrix() +
             (1.0 - kBeta2) * g.bias.array().square().matrix();
      h.weight.array() -=
          lr_ * (s.mw.array() / bc1) / ((s.vw.array() / bc2).sqrt() + kEps);
      h.bias.array() -=
          lr_ * (s.mb.array() / bc1) / ((s.vb.array() / bc2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  modeling::HeadSet& heads_;
  double lr_;
  std::map<std::string, AdamState> state_;
  long t_ = 0;
};

Eigen::MatrixXd encode_pooled(modeling::Backend& backend,
                              modeling::Pooling pooling,
                              const std::vector<corpus::SentenceRecord>& records) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const corpus::SentenceRecord& r : records) texts.push_back(r.text);
  return modeling::pool(backend.encode(texts), pooling);
}

std::map<std::string, std::vector<int>> gold_map(
    const std::vector<corpus::SentenceRecord>& records,
    const std::vector<std::string>& tasks) {
  std::map<std::string, std::vector<int>> out;
  for (const std::string& t : tasks) {
    std::vector<int>& v = out[t];
    v.reserve(records.size());
    for (const corpus::SentenceRecord& r : records) {
      v.push_back(gold_for(r, t));
    }
  }
  return out;
}

modeling::Checkpoint snapshot(const ExperimentConfig& config,
                              const modeling::HeadSet& heads, int epoch,
                              double score) {
  modeling::Checkpoint c;
  c.backend_id = config.backend_id;
  c.pooling = config.pooling;
  c.adaptation = config.adaptation;
  c.seed = config.seed;
  c.heads = heads;
  c.metrics["best_epoch"] = epoch;
  c.metrics["best_score"] = score;
  return c;
}

// Joint-task F1s are reported decomposed as well, so selection can average
// the bias and stereotype scores.
void add_decomposed_f1(const std::vector<int>& gold_joint,
                       const std::vector<int>& pred_joint,
                       std::map<std::string, double>& val_f1) {
  std::vector<int> gb, gs, pb, ps;
  for (std::size_t i = 0; i < gold_joint.size(); ++i) {
    auto [b1, s1] = labels::from_joint(labels::JointLabel{gold_joint[i]});
    auto [b2, s2] = labels::from_joint(labels::JointLabel{pred_joint[i]});
    gb.push_back(static_cast<int>(b1));
    gs.push_back(static_cast<int>(s1));
    pb.push_back(static_cast<int>(b2));
    ps.push_back(static_cast<int>(s2));
  }
  val_f1["bias"] = eval::macro_f1(gb, pb, 2);
  val_f1["stereotype"] = eval::macro_f1(gs, ps, 2);
}

}  // namespace

RunRecord train(const ExperimentConfig& config,
                const corpus::DatasetSplit& split) {
  auto t0 = std::chrono::steady_clock::now();
  config.validate();
  if (split.train.empty()) throw DataError("train: empty training split");
  if (split.validation.empty()) {
    throw DataError("train: empty validation split");
  }

  auto backend =
      modeling::make_backend(config.backend_id, config.seed, config.adaptation);
  modeling::validate_pooling(backend->info().family, config.pooling);

  RunRecord rec;
  rec.config = config;

  // The backend is frozen here; features are computed once and reused.
  Eigen::MatrixXd train_x = encode_pooled(*backend, config.pooling, split.train);
  Eigen::MatrixXd val_x =
      encode_pooled(*backend, config.pooling, split.validation);
  rec.truncation_count = backend->truncation_count();

  const std::vector<std::string> tasks = active_tasks(config);
  const auto train_gold = gold_map(split.train, tasks);
  const auto val_gold = gold_map(split.validation, tasks);

  modeling::HeadSet heads =
      modeling::make_heads(config.mode, backend->info().hidden_size, config.seed);
  Adam adam(heads, config.learning_rate);

  rec.best_epoch = 0;
  rec.best_score = -1.0;
  rec.checkpoint = snapshot(config, heads, 0, 0.0);

  const std::size_t n = split.train.size();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    DetRng rng(mix64(config.seed, fnv1a64("epoch") + epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::map<std::string, modeling::HeadGrad> acc;
    int micro = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      ++step;
      std::size_t count = std::min<std::size_t>(config.batch_size, n - start);
      Eigen::MatrixXd x(count, train_x.cols());
      std::map<std::string, std::vector<int>> gold;
      for (std::size_t k = 0; k < count; ++k) {
        std::size_t idx = order[start + k];
        x.row(k) = train_x.row(idx);
        for (const std::string& t : tasks) {
          gold[t].push_back(train_gold.at(t)[idx]);
        }
      }
      auto logits = modeling::forward(heads, x);
      auto loss =
          modeling::compute_loss(config.mode, logits, gold, config.task_weights);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("loss became non-finite at epoch " +
                              std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      loss_sum += loss.total * count;

      auto grads =
          modeling::head_gradients(heads, x, gold, config.task_weights);
      for (auto& [task, g] : grads) {
        auto it = acc.find(task);
        if (it == acc.end()) {
          acc[task] = std::move(g);
        } else {
          it->second.weight += g.weight;
          it->second.bias += g.bias;
        }
      }
      ++micro;
      bool last = start + count >= n;
      if (micro == config.grad_accumulation || last) {
        for (auto& [task, g] : acc) {
          g.weight /= micro;
          g.bias /= micro;
        }
        adam.step(acc);
        acc.clear();
        micro = 0;
      }
    }

    EpochMetrics em;
    em.train_loss = loss_sum / static_cast<double>(n);
    auto val_logits = modeling::forward(heads, val_x);
    em.val_loss =
        modeling::compute_loss(config.mode, val_logits, val_gold,
                               config.task_weights)
            .total;
    if (!std::isfinite(em.val_loss)) {
      throw DivergenceError("validation loss became non-finite after epoch " +
                            std::to_string(epoch));
    }
    auto preds = modeling::predict(config.mode, val_logits);
    for (const std::string& t : tasks) {
      em.val_f1[t] =
          eval::macro_f1(val_gold.at(t), preds.at(t), config.mode.classes_for(t));
    }
    if (config.mode.mode == labels::TaskMode::full_mtl) {
      add_decomposed_f1(val_gold.at("joint"), preds.at("joint"), em.val_f1);
    }
    em.selection_score = selection_score(config.mode, em.val_f1);
    rec.epochs.push_back(em);

    if (em.selection_score > rec.best_score) {
      rec.best_score = em.selection_score;
      rec.best_epoch = epoch;
      rec.checkpoint = snapshot(config, heads, epoch, em.selection_score);
    }
  }

  rec.checkpoint.metrics["epochs"] = config.epochs;
  rec.validation_dump =
      predict_dump(rec.checkpoint, split.validation, "validation");
  rec.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rec;
}

eval::PredictionDump predict_dump(
    const modeling::Checkpoint& checkpoint,
    const std::vector<corpus::SentenceRecord>& records,
    const std::string& split_name, const std::string& fingerprint) {
  if (records.empty()) throw DataError("predict_dump: no records");
  auto backend = modeling::make_backend(checkpoint.backend_id, checkpoint.seed,
                                        checkpoint.adaptation);
  Eigen::MatrixXd x = encode_pooled(*backend, checkpoint.pooling, records);
  auto logits = modeling::forward(checkpoint.heads, x);
  auto preds = modeling::predict(checkpoint.heads.mode, logits);

  eval::PredictionDump dump;
  dump.split = split_name;
  dump.fingerprint = fingerprint;
  dump.tasks = checkpoint.heads.mode.head_tasks();
  for (std::size_t i = 0; i < records.size(); ++i) {
    eval::PredictionRow row;
    row.example_id = records[i].id;
    if (records[i].category != corpus::Category::none) {
      row.category = corpus::category_name(records[i].category);
    }
    for (const std::string& t : dump.tasks) {
      row.gold[t] = gold_for(records[i], t);
      row.pred[t] = preds.at(t)[i];
    }
    dump.rows.push_back(std::move(row));
  }
  dump.validate();
  return dump;
}

int select_checkpoint(const RunRecord& record) {
  if (record.epochs.empty()) {
    throw DataError("select_checkpoint: no evaluated epochs");
  }
  int best = 1;
  for (std::size_t e = 1; e < record.epochs.size(); ++e) {
    if (record.epochs[e].selection_score >
        record.epochs[best - 1].selection_score) {
      best = static_cast<int>(e) + 1;
    }
  }
  return best;
}

std::vector<ExperimentConfig> grid_plan(const ExperimentConfig& base,
                                        const GridAxes& axes) {
  if (axes.learning_rates.empty() || axes.epochs.empty() ||
      axes.batch_sizes.empty()) {
    throw ConfigError("grid axes must be non-empty");
  }
  std::vector<ExperimentConfig> plan;
  std::uint64_t index = 0;
  for (double lr : axes.learning_rates) {
    for (int ep : axes.epochs) {
      for (int bs : axes.batch_sizes) {
        ExperimentConfig c = base;
        c.learning_rate = lr;
        c.epochs = ep;
        c.batch_size = bs;
        c.seed = base.seed + index;
        c.validate();
        plan.push_back(std::move(c));
        ++index;
      }
    }
  }
  return plan;
}

GridResult grid_search(const ExperimentConfig& base, const GridAxes& axes,
                       const corpus::DatasetSplit& split, int workers) {
  std::vector<ExperimentConfig> plan = grid_plan(base, axes);
  GridResult result;
  result.runs.resize(plan.size());

  auto run_one = [&](std::size_t i) {
    try {
      result.runs[i] = train(plan[i], split);
    } catch (const DivergenceError& e) {
      result.runs[i].config = plan[i];
      result.runs[i].diverged = true;
      result.runs[i].divergence_note = e.what();
    }
  };

  int usable = std::max(1, std::min<int>(workers, plan.size()));
  if (usable == 1) {
    for (std::size_t i = 0; i < plan.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(usable);
    for (int w = 0; w < usable; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= plan.size()) break;
            run_one(i);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  bool found = false;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const RunRecord& r = result.runs[i];
    if (r.diverged) continue;
    if (!found) {
      result.best_index = i;
      found = true;
      continue;
    }
    const RunRecord& b = result.runs[result.best_index];
    bool better = r.best_score > b.best_score;
    if (r.best_score == b.best_score) {
      if (r.config.epochs < b.config.epochs) {
        better = true;
      } else if (r.config.epochs == b.config.epochs &&
                 r.config.learning_rate < b.config.learning_rate) {
        better = true;
      }
    }
    if (better) result.best_index = i;
  }
  if (!found) throw DataError("grid_search: every run diverged");
  return result;
}

}  // namespace biaslab::trainer
