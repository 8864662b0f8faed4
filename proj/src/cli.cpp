#include "smart/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "smart/error.hpp"
#include "smart/model.hpp"
#include "smart/text.hpp"

namespace smart {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitFailure;
}

const MetricSet& ExperimentResult::metrics(Scope scope, ClassScope classes) const {
  for (const auto& r : rows)
    if (r.scope == scope && r.classes == classes) return r.eval.metrics;
  throw ProtocolError("experiment " + label + " has no " + scope_name(scope) + "/" + class_scope_name(classes) +
                      " result");
}

namespace {

constexpr Scope kAllScopes[] = {Scope::overall, Scope::setting1, Scope::setting2};
constexpr ClassScope kAllClasses[] = {ClassScope::all, ClassScope::abnormal};

void write_text(const fs::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << content;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string epoch_line(const std::string& label, const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "[%s] epoch %d train_loss=%.4f val_loss=%.4f val_f1=%.4f lr=%g", label.c_str(),
                r.epoch, r.train_loss, r.val_loss, r.val_macro_f1, r.lr);
  return buf;
}

TrainResult train_model(SmartModel& model, const Dataset& dataset, const SplitSpec& split, const RunConfig& config,
                        const EpochCallback& on_epoch) {
  const auto train_set = prepare_samples(dataset, split.train_ids, config.model);
  const auto val_set = prepare_samples(dataset, split.val_ids, config.model);
  return train(model, train_set, val_set, config.train, config_echo(config), on_epoch);
}

std::string effective_label(const ModelConfig& m) {
  if (!m.uses_scene()) return "skeleton_only";
  return scene_info_name(m.scene_info) + "_" + fusion_name(m.fusion);
}

SplitSpec load_split(const fs::path& data_dir) { return read_splits(data_dir / "splits.txt"); }

std::string metrics_csv(std::span<const ReportRow> rows, Scope scope) {
  std::string out = metrics_csv_header();
  for (const auto& r : rows)
    if (r.scope == scope) out += metrics_csv_row(class_scope_name(r.classes), r.eval.metrics);
  return out;
}

void write_confusions(const fs::path& dir, std::span<const ReportRow> rows) {
  for (const auto& r : rows)
    write_text(dir / ("confusion_" + scope_name(r.scope) + "_" + class_scope_name(r.classes) + ".csv"),
               confusion_csv(r.eval.cm));
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = metrics_csv_header();
  for (const auto& r : rows)
    out += metrics_csv_row(scope_name(r.scope) + "_" + class_scope_name(r.classes), r.eval.metrics);
  return out;
}

SmartModel model_from_checkpoint(const Checkpoint& ckpt) {
  const RunConfig trained = parse_config(ckpt.config_echo);
  SmartModel model = SmartModel::create(trained.model, trained.train.seed);
  restore(model, ckpt);
  return model;
}

// ---- commands ------------------------------------------------------------------------

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const Options& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.generator.seed = *o.seed;
  if (o.out) c.data_dir = *o.out;
  const Dataset ds = generate_dataset(c.generator);
  const SplitSpec split = make_splits(ds, c.split);
  write_dataset(ds, c.data_dir);
  write_splits(split, fs::path(c.data_dir) / "splits.txt");
  write_text(fs::path(c.data_dir) / "config.txt", config_echo(c));
  std::cout << "generated " << ds.samples.size() << " sequences in " << c.data_dir << " (train "
            << split.train_ids.size() << ", val " << split.val_ids.size() << ", internal test "
            << split.internal_test_ids.size() << ", setting1 " << split.setting1_ids.size() << ", setting2 "
            << split.setting2_ids.size() << ")\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  const Dataset ds = read_dataset(c.data_dir);
  const SplitSpec split = load_split(c.data_dir);
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  write_text(out / "config.txt", config_echo(c));
  SmartModel model = SmartModel::create(c.model, c.train.seed);
  const auto result = train_model(model, ds, split, c, [](const EpochRecord& r) {
    std::cerr << epoch_line("train", r) << '\n';
  });
  save_checkpoint(result.best, out / "checkpoint.bin");
  write_text(out / "history.csv", history_csv(result.history));
  std::cout << "trained " << result.history.size() << " epochs, best val macro-F1 "
            << text::format_double(result.best.best_metric) << " at epoch " << result.best.epoch << "; wrote "
            << (out / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

struct Evaluated {
  RunConfig config;
  SmartModel model;
  Dataset dataset;
  SplitSpec split;
};

Evaluated load_for_evaluation(const Options& o) {
  RunConfig c = load_config(o.config);
  if (o.out) c.out_dir = *o.out;
  const fs::path ckpt_file = c.checkpoint.empty() ? fs::path(c.out_dir) / "checkpoint.bin" : fs::path(c.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_file);
  SmartModel model = model_from_checkpoint(ckpt);
  Dataset ds = read_dataset(c.data_dir);
  SplitSpec split = load_split(c.data_dir);
  fs::create_directories(c.out_dir);
  return {std::move(c), std::move(model), std::move(ds), std::move(split)};
}

int cmd_evaluate(const Options& o) {
  const Evaluated e = load_for_evaluation(o);
  const fs::path out(e.config.out_dir);
  const auto rows = evaluate_scopes(e.model, e.dataset, e.split, e.config.scopes, e.config.classes);
  for (Scope s : e.config.scopes) write_text(out / ("metrics_" + scope_name(s) + ".csv"), metrics_csv(rows, s));
  write_confusions(out, rows);
  write_text(out / "evaluation.md", markdown_report("Evaluation", rows));
  write_text(out / "evaluate_config.txt", config_echo(e.config));
  for (const auto& r : rows)
    std::cout << scope_name(r.scope) << '/' << class_scope_name(r.classes) << ": acc " << pct(r.eval.metrics.acc)
              << " F_m " << pct(r.eval.metrics.macro_f1) << '\n';
  return kExitOk;
}

int cmd_report(const Options& o) {
  const Evaluated e = load_for_evaluation(o);
  const fs::path out(e.config.out_dir);
  const auto rows = evaluate_scopes(e.model, e.dataset, e.split, kAllScopes, kAllClasses);
  const std::string md = markdown_report("Recognition results", rows);
  write_text(out / "report.md", md);
  write_text(out / "report.csv", report_csv(rows));
  write_confusions(out, rows);
  write_text(out / "embeddings.csv", export_embeddings(e.model, e.dataset, scope_ids(e.split, Scope::overall)));
  write_text(out / "report_config.txt", config_echo(e.config));
  std::cout << md;
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  write_text(out / "config.txt", config_echo(c));
  const Dataset ds = read_dataset(c.data_dir);
  const SplitSpec split = load_split(c.data_dir);

  std::vector<AblationOutcome> outcomes;
  int status = kExitOk;
  for (auto row : ablation_rows(c)) {
    const fs::path dir = out / row.label;
    row.config.out_dir = dir.string();
    AblationOutcome outcome;
    outcome.label = row.label;
    try {
      fs::create_directories(dir);
      write_text(dir / "config.txt", config_echo(row.config));
      outcome.result = run_experiment(ds, split, row.config, row.label, [&](const EpochRecord& r) {
        std::cerr << epoch_line(row.label, r) << '\n';
      });
      save_checkpoint(outcome.result.training.best, dir / "checkpoint.bin");
      write_text(dir / "history.csv", history_csv(outcome.result.training.history));
      write_text(dir / "report.md", markdown_report(row.label, outcome.result.rows));
      write_text(dir / "report.csv", report_csv(outcome.result.rows));
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
      if (status == kExitOk) status = exit_code_for(e);
      std::cerr << "[" << row.label << "] failed: " << e.what() << '\n';
    }
    outcomes.push_back(std::move(outcome));
  }
  const std::string md = ablation_summary_markdown(outcomes);
  write_text(out / "summary.md", md);
  write_text(out / "summary.csv", ablation_summary_csv(outcomes));
  std::cout << md;
  return status;
}

std::vector<const AblationOutcome*> sorted(const std::vector<AblationOutcome>& outcomes) {
  std::vector<const AblationOutcome*> order;
  for (const auto& o : outcomes) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const AblationOutcome* a, const AblationOutcome* b) {
    if (a->ok != b->ok) return a->ok;
    if (!a->ok) return false;
    return a->result.metrics(Scope::overall, ClassScope::all).macro_f1 >
           b->result.metrics(Scope::overall, ClassScope::all).macro_f1;
  });
  return order;
}

}  // namespace

// ---- experiments ---------------------------------------------------------------------

ExperimentResult run_experiment(const Dataset& dataset, const SplitSpec& split, const RunConfig& config,
                                const std::string& label, const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.label = label;
  r.model = config.model;
  SmartModel model = SmartModel::create(config.model, config.train.seed);
  r.training = train_model(model, dataset, split, config, on_epoch);
  r.rows = evaluate_scopes(model, dataset, split, kAllScopes, kAllClasses);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<AblationRow> ablation_rows(const RunConfig& base) {
  std::vector<AblationRow> rows;
  std::set<std::string> seen;
  for (Composition comp : base.ablate.composition)
    for (SceneInfo info : base.ablate.scene_info)
      for (FusionKind fusion : base.ablate.fusion) {
        RunConfig c = base;
        c.model.scene_info = info;
        c.model.fusion = fusion;
        c.model = apply_composition(c.model, comp);
        std::string label = effective_label(c.model);
        if (!seen.insert(label).second) continue;
        rows.push_back({std::move(label), comp, std::move(c)});
      }
  return rows;
}

std::string ablation_summary_markdown(std::vector<AblationOutcome> outcomes) {
  std::ostringstream os;
  os << "# Ablation summary\n\n"
     << "| Row | Acc | F_m | Setting I F_m | Setting II F_m | Setting II abnormal F_m | Epochs | Seconds |\n"
     << "|---|---|---|---|---|---|---|---|\n";
  for (const auto* o : sorted(outcomes)) {
    if (!o->ok) {
      os << "| " << o->label << " | failed: " << o->error << " | | | | | | |\n";
      continue;
    }
    const auto& r = o->result;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.0f", r.seconds);
    os << "| " << o->label << " | " << pct(r.metrics(Scope::overall, ClassScope::all).acc) << " | "
       << pct(r.metrics(Scope::overall, ClassScope::all).macro_f1) << " | "
       << pct(r.metrics(Scope::setting1, ClassScope::all).macro_f1) << " | "
       << pct(r.metrics(Scope::setting2, ClassScope::all).macro_f1) << " | "
       << pct(r.metrics(Scope::setting2, ClassScope::abnormal).macro_f1) << " | " << r.training.history.size()
       << " | " << secs << " |\n";
  }
  return os.str();
}

std::string ablation_summary_csv(std::vector<AblationOutcome> outcomes) {
  std::ostringstream os;
  os << "row,status,overall_acc,overall_f1,setting1_f1,setting2_f1,setting2_abnormal_f1,epochs,seconds,error\n";
  for (const auto* o : sorted(outcomes)) {
    if (!o->ok) {
      std::string err = o->error;
      std::replace(err.begin(), err.end(), ',', ';');
      os << o->label << ",failed,,,,,,,," << err << '\n';
      continue;
    }
    const auto& r = o->result;
    os << o->label << ",ok," << text::format_double(r.metrics(Scope::overall, ClassScope::all).acc) << ','
       << text::format_double(r.metrics(Scope::overall, ClassScope::all).macro_f1) << ','
       << text::format_double(r.metrics(Scope::setting1, ClassScope::all).macro_f1) << ','
       << text::format_double(r.metrics(Scope::setting2, ClassScope::all).macro_f1) << ','
       << text::format_double(r.metrics(Scope::setting2, ClassScope::abnormal).macro_f1) << ','
       << r.training.history.size() << ',' << text::format_double(r.seconds) << ",\n";
  }
  return os.str();
}

// ---- entry point -----------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Scene- and motion-aware action recognition: data generation, training, evaluation"};
  app.require_subcommand(1);
  Options opts;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"generate", "Synthesise the dataset and its splits", cmd_generate},
      {"train", "Train one model and write its checkpoint and history", cmd_train},
      {"evaluate", "Evaluate a checkpoint on the configured scopes", cmd_evaluate},
      {"ablate", "Train and evaluate every row of the ablation grid", cmd_ablate},
      {"report", "Write the results tables, confusion matrices and embeddings", cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", opts.config, "Run config (key=value lines)")->required();
    sub->add_option("--out", opts.out, "Output directory (dataset directory for generate)");
    sub->add_option("--seed", opts.seed, "Seed override: generator.seed for generate, train.seed otherwise");
    subs.emplace_back(sub, &cmd);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitFailure;
}

}  // namespace smart
