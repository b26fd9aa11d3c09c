#pragma once

// Workflow orchestration: declarative JSON configs, workspace layout,
// run directories, and the command implementations behind the CLI verbs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biaslab/corpus.h"
#include "biaslab/trainer.h"

namespace biaslab::workspace {

struct Workspace {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path runs_dir() const { return root / "runs"; }
  std::filesystem::path reports_dir() const { return root / "reports"; }
  void ensure_layout() const;
};

// --workspace flag > BIASLAB_WORKSPACE env > ./workspace
Workspace resolve_workspace(const std::string& flag_value);

// Parses JSON with // and /* */ comments allowed.
nlohmann::json load_config(const std::filesystem::path& path);

// Hash over the parsed document (key order and formatting-insensitive).
std::string config_hash(const nlohmann::json& config);

// "<name>-<timestamp>-<hash8>", made unique within runs_dir.
std::string make_run_id(const Workspace& ws, const std::string& name,
                        const nlohmann::json& config);

trainer::ExperimentConfig experiment_from_json(const nlohmann::json& j);

corpus::DatasetSplit load_split(const Workspace& ws,
                                const std::string& dataset_name);

// Label-distribution bar chart (joint classes + categories) as a static SVG.
std::string distribution_svg(const corpus::DatasetStats& stats);

// CLI flags that override config keys (seed everywhere; backend maps to
// "backend" for training and "lm_backend" for prompting). The original file
// is still snapshotted verbatim; hashes cover the effective config.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
};

// Command implementations. All throw on failure; the CLI maps exception
// types to exit codes.
void cmd_build_dataset(const std::filesystem::path& config_path,
                       const Workspace& ws, const CliOverrides& over = {});
// Returns the run directory. With resume=true and a completed run for the
// same config hash already present, prints a notice and returns that run.
std::filesystem::path cmd_train(const std::filesystem::path& config_path,
                                const Workspace& ws, bool resume = false,
                                const CliOverrides& over = {});
std::filesystem::path cmd_grid(const std::filesystem::path& config_path,
                               const Workspace& ws, int workers = 1,
                               const CliOverrides& over = {});
void cmd_evaluate(const std::vector<std::string>& run_ids,
                  const std::vector<std::string>& baseline_ids,
                  const std::string& split, const Workspace& ws);
std::filesystem::path cmd_prompt(const std::filesystem::path& config_path,
                                 const Workspace& ws,
                                 const CliOverrides& over = {});
void cmd_report(const Workspace& ws);

}  // namespace biaslab::workspace
