#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "biaslab/common.h"
#include "biaslab/corpus.h"
#include "biaslab/evaluation.h"
#include "biaslab/labelspace.h"
#include "biaslab/modeling.h"
#include "biaslab/trainer.h"
#include "test_util.h"

using namespace biaslab;
using namespace biaslab::trainer;

namespace {

labels::TaskModeSpec spec_for(labels::TaskMode m) {
  labels::TaskModeSpec s;
  s.mode = m;
  if (m == labels::TaskMode::stl_auxiliary || m == labels::TaskMode::shared_mtl) {
    s.auxiliary = labels::AuxiliaryTask::stereotype;
  }
  return s;
}

// Four linearly separable joint classes: marker tokens carry the label
// signal, filler tokens vary so sentences stay distinct.
std::vector<corpus::SentenceRecord> synthetic_corpus(int per_class) {
  const char* fill[] = {"river", "stone",  "cloud",  "meadow",
                        "lantern", "copper", "willow", "harbor"};
  std::vector<corpus::SentenceRecord> out;
  int id = 0;
  for (int cls = 0; cls < 4; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      std::string text = std::string(fill[(id * 3) % 8]) + " " +
                         fill[(id * 5 + 1) % 8];
      if (cls & 1) text += " biasmark biasmark biasmark";
      if (cls & 2) text += " stereomark stereomark stereomark";
      text += " " + std::string(fill[(id * 7 + 2) % 8]);
      corpus::SentenceRecord r = corpus::make_record(
          "syn-" + std::to_string(id + 1), text, corpus::Source::synthetic);
      r.bias = (cls & 1) ? labels::Binary::positive : labels::Binary::negative;
      r.stereotype =
          (cls & 2) ? labels::Binary::positive : labels::Binary::negative;
      out.push_back(std::move(r));
      ++id;
    }
  }
  return out;
}

corpus::DatasetSplit overfit_split(int per_class) {
  corpus::DatasetSplit split;
  split.train = synthetic_corpus(per_class);
  split.validation = split.train;  // overfitting on purpose
  split.test = split.train;
  return split;
}

ExperimentConfig base_config(labels::TaskMode m) {
  ExperimentConfig c;
  c.mode = spec_for(m);
  c.learning_rate = 5e-3;
  c.epochs = 3;
  c.batch_size = 4;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("published hyperparameter grids") {
  const auto& lrs = learning_rate_grid();
  CHECK(lrs == std::vector<double>{1e-3, 3e-3, 5e-3, 1e-4, 3e-4, 5e-4, 1e-5,
                                   3e-5, 5e-5});
  CHECK(encoder_epoch_grid() == std::vector<int>{2, 5, 8, 10});
  CHECK(decoder_epoch_grid() == std::vector<int>{5, 8, 10, 12, 15});
  CHECK(batch_size_grid() == std::vector<int>{4, 8, 16});
}

TEST_CASE("experiment config validation") {
  ExperimentConfig c = base_config(labels::TaskMode::stl_bias);
  CHECK_NOTHROW(c.validate());

  for (double lr : learning_rate_grid()) {
    c.learning_rate = lr;
    CHECK_NOTHROW(c.validate());
  }

  c.learning_rate = 2e-3;  // not a published value
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.allow_custom_lr = true;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = base_config(labels::TaskMode::stl_bias);
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = base_config(labels::TaskMode::stl_bias);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = base_config(labels::TaskMode::stl_bias);
  c.grad_accumulation = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = base_config(labels::TaskMode::shared_mtl);
  c.mode.auxiliary.reset();  // shared_mtl needs an auxiliary task
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("gold ids follow the task slots") {
  auto records = synthetic_corpus(1);
  CHECK(gold_for(records[0], "bias") == 0);
  CHECK(gold_for(records[0], "joint") == 0);
  CHECK(gold_for(records[3], "bias") == 1);
  CHECK(gold_for(records[3], "stereotype") == 1);
  CHECK(gold_for(records[3], "joint") == 3);
  CHECK(gold_for(records[2], "joint") == 2);

  corpus::SentenceRecord bare =
      corpus::make_record("x", "some text", corpus::Source::synthetic);
  CHECK_THROWS_AS(gold_for(bare, "bias"), DataError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto split = overfit_split(2);
  ExperimentConfig c = base_config(labels::TaskMode::shared_mtl);

  RunRecord r1 = train(c, split);
  RunRecord r2 = train(c, split);
  REQUIRE(r1.epochs.size() == 3);
  CHECK(r1.optimizer == "adam");
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].train_loss == r2.epochs[e].train_loss);
    CHECK(r1.epochs[e].val_loss == r2.epochs[e].val_loss);
    CHECK(r1.epochs[e].selection_score == r2.epochs[e].selection_score);
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.checkpoint.heads.head("bias").weight ==
        r2.checkpoint.heads.head("bias").weight);

  ExperimentConfig other = c;
  other.seed = 43;
  RunRecord r3 = train(other, split);
  CHECK(r3.epochs[0].train_loss != r1.epochs[0].train_loss);
}

TEST_CASE("training records epoch metrics and selects the best epoch") {
  auto split = overfit_split(2);
  ExperimentConfig c = base_config(labels::TaskMode::shared_mtl);
  c.epochs = 5;

  RunRecord rec = train(c, split);
  REQUIRE(rec.epochs.size() == 5);
  for (const EpochMetrics& em : rec.epochs) {
    CHECK(em.val_f1.count("bias") == 1);
    CHECK(em.val_f1.count("stereotype") == 1);
    double mean = (em.val_f1.at("bias") + em.val_f1.at("stereotype")) / 2.0;
    CHECK(em.selection_score == doctest::Approx(mean).epsilon(1e-15));
  }
  CHECK(rec.best_epoch == select_checkpoint(rec));
  CHECK(rec.best_score ==
        rec.epochs[static_cast<std::size_t>(rec.best_epoch - 1)].selection_score);
  CHECK(rec.checkpoint.metrics.at("best_epoch") == rec.best_epoch);
  CHECK_FALSE(rec.diverged);

  // the stored validation dump reflects the selected checkpoint
  CHECK(rec.validation_dump.split == "validation");
  CHECK(rec.validation_dump.rows.size() == split.validation.size());
  auto dump2 = predict_dump(rec.checkpoint, split.validation, "validation");
  for (std::size_t i = 0; i < dump2.rows.size(); ++i) {
    CHECK(dump2.rows[i].pred == rec.validation_dump.rows[i].pred);
  }
}

TEST_CASE("full-MTL validation scores include decomposed tasks") {
  auto split = overfit_split(2);
  ExperimentConfig c = base_config(labels::TaskMode::full_mtl);
  c.epochs = 2;

  RunRecord rec = train(c, split);
  for (const EpochMetrics& em : rec.epochs) {
    CHECK(em.val_f1.count("joint") == 1);
    CHECK(em.val_f1.count("bias") == 1);
    CHECK(em.val_f1.count("stereotype") == 1);
    double mean = (em.val_f1.at("bias") + em.val_f1.at("stereotype")) / 2.0;
    CHECK(em.selection_score == doctest::Approx(mean).epsilon(1e-15));
  }
}

TEST_CASE("zero epochs records initial weights only") {
  auto split = overfit_split(1);
  ExperimentConfig c = base_config(labels::TaskMode::stl_bias);
  c.epochs = 0;

  RunRecord rec = train(c, split);
  CHECK(rec.epochs.empty());
  CHECK(rec.best_epoch == 0);
  modeling::HeadSet init = modeling::make_heads(c.mode, 32, c.seed);
  CHECK(rec.checkpoint.heads.head("bias").weight == init.head("bias").weight);
  CHECK(rec.checkpoint.heads.head("bias").bias.isZero(0.0));
  CHECK(rec.validation_dump.rows.size() == split.validation.size());
  CHECK_THROWS_AS(select_checkpoint(rec), DataError);
}

TEST_CASE("a zero-weighted auxiliary head reduces shared-MTL to STL") {
  auto split = overfit_split(2);

  ExperimentConfig stl = base_config(labels::TaskMode::stl_bias);
  ExperimentConfig gated = base_config(labels::TaskMode::shared_mtl);
  gated.task_weights = {{"stereotype", 0.0}};

  RunRecord a = train(stl, split);
  RunRecord b = train(gated, split);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
    CHECK(a.epochs[e].val_f1.at("bias") == b.epochs[e].val_f1.at("bias"));
  }
  CHECK(a.checkpoint.heads.head("bias").weight ==
        b.checkpoint.heads.head("bias").weight);
  // the gated head never moved
  modeling::HeadSet init = modeling::make_heads(gated.mode, 32, gated.seed);
  CHECK(b.checkpoint.heads.head("stereotype").weight ==
        init.head("stereotype").weight);

  ExperimentConfig all_off = gated;
  all_off.task_weights = {{"bias", 0.0}, {"stereotype", 0.0}};
  CHECK_THROWS_AS(train(all_off, split), ConfigError);
}

TEST_CASE("shared-MTL overfits a small separable corpus on both tasks") {
  auto split = overfit_split(4);  // 16 sentences
  ExperimentConfig c = base_config(labels::TaskMode::shared_mtl);
  c.epochs = 60;

  RunRecord rec = train(c, split);
  CHECK(rec.best_score == 1.0);
  const EpochMetrics& best =
      rec.epochs[static_cast<std::size_t>(rec.best_epoch - 1)];
  CHECK(best.val_f1.at("bias") == 1.0);
  CHECK(best.val_f1.at("stereotype") == 1.0);
}

TEST_CASE("non-finite loss raises a divergence error naming the epoch") {
  auto split = overfit_split(1);
  ExperimentConfig c = base_config(labels::TaskMode::stl_bias);
  c.learning_rate = 1e308;
  c.allow_custom_lr = true;
  c.epochs = 2;
  CHECK_THROWS_WITH_AS(train(c, split), doctest::Contains("epoch 1"),
                       DivergenceError);
}

TEST_CASE("train validates inputs") {
  auto split = overfit_split(1);
  ExperimentConfig c = base_config(labels::TaskMode::stl_bias);

  corpus::DatasetSplit no_train = split;
  no_train.train.clear();
  CHECK_THROWS_AS(train(c, no_train), DataError);

  corpus::DatasetSplit no_val = split;
  no_val.validation.clear();
  CHECK_THROWS_AS(train(c, no_val), DataError);

  ExperimentConfig cls = c;
  cls.pooling = modeling::Pooling::cls;  // stub has no classification token
  CHECK_THROWS_AS(train(cls, split), ConfigError);
}

TEST_CASE("predict_dump carries gold labels and the fingerprint") {
  auto records = synthetic_corpus(1);
  ExperimentConfig c = base_config(labels::TaskMode::shared_mtl);
  c.epochs = 1;
  auto split = overfit_split(1);
  RunRecord rec = train(c, split);

  eval::PredictionDump d =
      predict_dump(rec.checkpoint, records, "test", "deadbeef");
  CHECK(d.split == "test");
  CHECK(d.fingerprint == "deadbeef");
  CHECK(d.tasks == std::vector<std::string>{"bias", "stereotype"});
  REQUIRE(d.rows.size() == records.size());
  CHECK(d.rows[0].example_id == "syn-1");
  CHECK(d.rows[3].gold.at("bias") == 1);
  CHECK(d.rows[3].gold.at("stereotype") == 1);
  CHECK_NOTHROW(d.validate());

  CHECK_THROWS_AS(predict_dump(rec.checkpoint, {}, "test"), DataError);
}

TEST_CASE("checkpoint selection takes the earliest best epoch") {
  RunRecord rec;
  double scores[] = {0.5, 0.8, 0.8, 0.7};
  for (double s : scores) {
    EpochMetrics em;
    em.selection_score = s;
    rec.epochs.push_back(em);
  }
  CHECK(select_checkpoint(rec) == 2);

  RunRecord empty;
  CHECK_THROWS_AS(select_checkpoint(empty), DataError);
}

TEST_CASE("grid plans sweep the cartesian product with offset seeds") {
  ExperimentConfig base = base_config(labels::TaskMode::stl_bias);
  base.learning_rate = 3e-4;

  GridAxes full;
  full.learning_rates = learning_rate_grid();
  full.epochs = encoder_epoch_grid();
  full.batch_sizes = batch_size_grid();
  auto plan = grid_plan(base, full);
  CHECK(plan.size() == 9 * 4 * 3);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    CHECK(plan[i].seed == base.seed + i);
  }
  // lr-major, epochs, then batch size innermost
  CHECK(plan[0].learning_rate == 1e-3);
  CHECK(plan[0].epochs == 2);
  CHECK(plan[0].batch_size == 4);
  CHECK(plan[1].batch_size == 8);
  CHECK(plan[3].epochs == 5);
  CHECK(plan[12].learning_rate == 3e-3);

  GridAxes empty;
  CHECK_THROWS_AS(grid_plan(base, empty), ConfigError);
}

TEST_CASE("grid search surfaces the best run and tolerates divergence") {
  auto split = overfit_split(2);
  ExperimentConfig base = base_config(labels::TaskMode::stl_bias);

  GridAxes axes;
  axes.learning_rates = {3e-3, 5e-3};
  axes.epochs = {2, 4};
  axes.batch_sizes = {4};

  GridResult res = grid_search(base, axes, split);
  REQUIRE(res.runs.size() == 4);
  for (const RunRecord& r : res.runs) CHECK_FALSE(r.diverged);

  // replay the documented rule: best score, then fewer epochs, then lower lr
  std::size_t want = 0;
  for (std::size_t i = 1; i < res.runs.size(); ++i) {
    const RunRecord& r = res.runs[i];
    const RunRecord& b = res.runs[want];
    if (r.best_score > b.best_score ||
        (r.best_score == b.best_score &&
         (r.config.epochs < b.config.epochs ||
          (r.config.epochs == b.config.epochs &&
           r.config.learning_rate < b.config.learning_rate)))) {
      want = i;
    }
  }
  CHECK(res.best_index == want);

  GridResult threaded = grid_search(base, axes, split, 3);
  REQUIRE(threaded.runs.size() == 4);
  CHECK(threaded.best_index == res.best_index);
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    CHECK(threaded.runs[i].best_score == res.runs[i].best_score);
    CHECK(threaded.runs[i].epochs.size() == res.runs[i].epochs.size());
  }
}

TEST_CASE("diverged grid runs are recorded but never win") {
  auto split = overfit_split(1);
  ExperimentConfig base = base_config(labels::TaskMode::stl_bias);
  base.allow_custom_lr = true;

  GridAxes axes;
  axes.learning_rates = {1e308, 5e-3};
  axes.epochs = {1};
  axes.batch_sizes = {4};

  GridResult res = grid_search(base, axes, split);
  REQUIRE(res.runs.size() == 2);
  CHECK(res.runs[0].diverged);
  CHECK(res.runs[0].divergence_note.find("non-finite") != std::string::npos);
  CHECK_FALSE(res.runs[1].diverged);
  CHECK(res.best_index == 1);

  GridAxes doomed;
  doomed.learning_rates = {1e308};
  doomed.epochs = {1};
  doomed.batch_sizes = {4};
  CHECK_THROWS_WITH_AS(grid_search(base, doomed, split),
                       doctest::Contains("every run diverged"), DataError);
}

}  // TEST_SUITE
