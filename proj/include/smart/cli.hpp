#pragma once

// Command-line driver: generate, train, evaluate, ablate and report, each
// driven by a run config. The experiment runner used by `ablate` is exposed
// so other harnesses can reproduce a sweep in-process.

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "smart/config.hpp"
#include "smart/metrics.hpp"
#include "smart/training.hpp"

namespace smart {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

/// Maps an exception onto the documented exit codes.
int exit_code_for(const std::exception& e);

/// Entry point of the `smart` executable.
int run_cli(int argc, const char* const* argv);

struct ExperimentResult {
  std::string label;
  ModelConfig model;
  TrainResult training;
  std::vector<ReportRow> rows;  // every scope in both class blocks
  double seconds = 0;

  const MetricSet& metrics(Scope scope, ClassScope classes) const;
};

/// Trains a fresh model on the split's train ids (validating on val ids) and
/// evaluates it on overall / Setting I / Setting II for all and abnormal actions.
ExperimentResult run_experiment(const Dataset& dataset, const SplitSpec& split, const RunConfig& config,
                                const std::string& label, const EpochCallback& on_epoch = {});

struct AblationRow {
  std::string label;  // also the output subdirectory
  Composition composition = Composition::full;
  RunConfig config;
};

/// Expands scene_info x fusion x composition into runs, dropping rows whose
/// effective model is the same as an earlier one.
std::vector<AblationRow> ablation_rows(const RunConfig& base);

/// Markdown and CSV summary, rows sorted by overall macro-F1 (descending).
/// Failed rows are listed after the others with their error message.
struct AblationOutcome {
  std::string label;
  bool ok = false;
  std::string error;
  ExperimentResult result;
};
std::string ablation_summary_markdown(std::vector<AblationOutcome> outcomes);
std::string ablation_summary_csv(std::vector<AblationOutcome> outcomes);

}  // namespace smart
