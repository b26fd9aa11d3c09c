#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biaslab/common.h"
#include "biaslab/workspace.h"

namespace ws = biaslab::workspace;

int main(int argc, char** argv) {
  CLI::App app{"bias and stereotype classification experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string workspace_flag;
  std::string split = "test";
  int workers = 1;
  bool resume = false;
  std::vector<std::string> run_ids;
  std::vector<std::string> baseline_ids;
  ws::CliOverrides over;

  auto add_workspace = [&](CLI::App* sub) {
    sub->add_option("--workspace", workspace_flag,
                    "workspace root (default: $BIASLAB_WORKSPACE or "
                    "./workspace)");
  };
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file (comments allowed)")
        ->required();
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", over.seed, "override the config seed");
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", over.backend, "override the config backend");
  };

  CLI::App* build =
      app.add_subcommand("build-dataset", "assemble, label, and split the corpus");
  add_config(build);
  add_workspace(build);
  add_seed(build);

  CLI::App* train = app.add_subcommand("train", "train one configuration");
  add_config(train);
  add_workspace(train);
  add_seed(train);
  add_backend(train);
  train->add_flag("--resume", resume,
                  "reuse a completed run with the same config hash");

  CLI::App* grid = app.add_subcommand("grid", "hyperparameter sweep");
  add_config(grid);
  add_workspace(grid);
  add_seed(grid);
  add_backend(grid);
  grid->add_option("--workers", workers, "parallel training runs");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score prediction dumps and compare runs");
  evaluate->add_option("--run", run_ids, "run id or path (repeatable)")
      ->required();
  evaluate->add_option("--baseline", baseline_ids,
                       "baseline run id (repeatable)");
  evaluate->add_option("--split", split, "which predictions to score");
  add_workspace(evaluate);

  CLI::App* prompt =
      app.add_subcommand("prompt", "perplexity-ranked prompt evaluation");
  add_config(prompt);
  add_workspace(prompt);
  add_seed(prompt);
  add_backend(prompt);

  CLI::App* report = app.add_subcommand("report", "summarize workspace runs");
  add_workspace(report);

  CLI11_PARSE(app, argc, argv);

  try {
    ws::Workspace workspace = ws::resolve_workspace(workspace_flag);
    if (build->parsed()) {
      ws::cmd_build_dataset(config, workspace, over);
    } else if (train->parsed()) {
      ws::cmd_train(config, workspace, resume, over);
    } else if (grid->parsed()) {
      ws::cmd_grid(config, workspace, workers, over);
    } else if (evaluate->parsed()) {
      ws::cmd_evaluate(run_ids, baseline_ids, split, workspace);
    } else if (prompt->parsed()) {
      ws::cmd_prompt(config, workspace, over);
    } else if (report->parsed()) {
      ws::cmd_report(workspace);
    }
  } catch (const biaslab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const biaslab::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const biaslab::AlignmentError& e) {
    std::cerr << "alignment error: " << e.what() << "\n";
    return 5;
  } catch (const biaslab::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
