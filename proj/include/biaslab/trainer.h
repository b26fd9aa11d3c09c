#pragma once

// Training loops over experiment configs, hyperparameter grid sweeps, and
// best-epoch checkpoint selection.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "biaslab/corpus.h"
#include "biaslab/evaluation.h"
#include "biaslab/labelspace.h"
#include "biaslab/modeling.h"

namespace biaslab::trainer {

// Published sweep values; configs outside the learning-rate set must opt in
// via allow_custom_lr.
const std::vector<double>& learning_rate_grid();
const std::vector<int>& encoder_epoch_grid();
const std::vector<int>& decoder_epoch_grid();
const std::vector<int>& batch_size_grid();

struct ExperimentConfig {
  labels::TaskModeSpec mode;
  std::string backend_id = "stub";
  modeling::Pooling pooling = modeling::Pooling::mean;
  double learning_rate = 3e-4;
  bool allow_custom_lr = false;
  int epochs = 10;  // 0 allowed: record initial weights only
  int batch_size = 8;
  int grad_accumulation = 1;
  modeling::AdaptationConfig adaptation;
  std::uint64_t seed = 42;
  std::map<std::string, double> task_weights;  // per-head loss weights

  void validate() const;  // throws ConfigError
};

struct EpochMetrics {
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::map<std::string, double> val_f1;
  double selection_score = 0.0;
};

struct RunRecord {
  ExperimentConfig config;
  std::string optimizer = "adam";
  std::vector<EpochMetrics> epochs;  // length = completed epochs
  int best_epoch = 0;                // 1-based; 0 = initial weights
  double best_score = 0.0;
  modeling::Checkpoint checkpoint;   // parameters at best_epoch
  eval::PredictionDump validation_dump;
  double wall_time_seconds = 0.0;
  std::size_t truncation_count = 0;
  bool diverged = false;
  std::string divergence_note;
};

// Gold class id for one record under a head task ("bias", "stereotype",
// "sentiment" — stored in the auxiliary slot — or "joint").
int gold_for(const corpus::SentenceRecord& record, const std::string& task);

// Deterministic for a fixed seed on the stub backend. Evaluates validation
// Macro-F1 after each epoch and keeps the best epoch's parameters.
RunRecord train(const ExperimentConfig& config,
                const corpus::DatasetSplit& split);

// Inference with a saved checkpoint over records; gold taken from labels.
eval::PredictionDump predict_dump(const modeling::Checkpoint& checkpoint,
                                  const std::vector<corpus::SentenceRecord>& records,
                                  const std::string& split_name,
                                  const std::string& fingerprint = "");

// 1-based epoch maximizing the selection score, earliest on ties.
int select_checkpoint(const RunRecord& record);

struct GridAxes {
  std::vector<double> learning_rates;
  std::vector<int> epochs;
  std::vector<int> batch_sizes;
};

// Cartesian product of the axes over the base config; run i uses
// seed = base.seed + i.
std::vector<ExperimentConfig> grid_plan(const ExperimentConfig& base,
                                        const GridAxes& axes);

struct GridResult {
  std::vector<RunRecord> runs;
  std::size_t best_index = 0;  // into runs; diverged runs never win
};

GridResult grid_search(const ExperimentConfig& base, const GridAxes& axes,
                       const corpus::DatasetSplit& split, int workers = 1);

}  // namespace biaslab::trainer
