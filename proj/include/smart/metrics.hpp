#pragma once

// Confusion matrices, accuracy / macro precision / recall / F1, the
// evaluation protocol over the held-out settings, and report emission.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smart/synthgen.hpp"

namespace smart {

class SmartModel;

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<long> counts;

  long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  long total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws DataError on length mismatch or ids outside [0, classes).
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int classes = kNumClasses);

/// One-vs-rest tallies of class i over every sample in the matrix.
struct ClassCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};
ClassCounts class_counts(const ConfusionMatrix& cm, int cls);

/// Top-1: trace / total. Throws DataError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
/// Sum_i (TP_i + TN_i) / Sum_i (TP_i + TN_i + FP_i + FN_i), one-vs-rest.
double accuracy_one_vs_rest(const ConfusionMatrix& cm);

/// macro_pr: harmonic mean of macro precision and macro recall.
/// per_class: mean of the per-class F1 values.
enum class F1Mode { macro_pr, per_class };

struct MetricSet {
  std::vector<int> class_ids;  // classes the macro averages run over
  double acc = 0, acc_one_vs_rest = 0;
  double macro_p = 0, macro_r = 0;
  double macro_f1 = 0;            // 2 P_m R_m / (P_m + R_m)
  double macro_f1_per_class = 0;  // mean of per-class F1
  bool f1_undefined = false;      // P_m + R_m == 0
  std::vector<double> per_class_p, per_class_r, per_class_f1;
  std::vector<int> undefined_classes;  // zero precision or recall denominator
};

/// Metrics over `class_ids` (all classes when empty). Undefined per-class
/// precision or recall counts as 0 and the class is listed in undefined_classes.
MetricSet compute_metrics(const ConfusionMatrix& cm, std::span<const int> class_ids = {});

double macro_precision(const ConfusionMatrix& cm);
double macro_recall(const ConfusionMatrix& cm);
struct F1Value {
  double value = 0;
  bool undefined = false;
};
F1Value macro_f1(const ConfusionMatrix& cm, F1Mode mode = F1Mode::macro_pr);

// ---- evaluation protocol ---------------------------------------------------------

enum class Scope { overall, setting1, setting2 };
enum class ClassScope { all, abnormal };

std::string scope_name(Scope s);
std::string class_scope_name(ClassScope c);
/// Throws ConfigError for unknown names.
Scope parse_scope(const std::string& name);
ClassScope parse_class_scope(const std::string& name);

/// overall = setting1 followed by setting2. Throws ProtocolError when empty.
std::vector<int> scope_ids(const SplitSpec& split, Scope scope);

struct Evaluation {
  ConfusionMatrix cm;  // restricted to the evaluated samples
  MetricSet metrics;
};

/// For the abnormal scope only samples whose true class is abnormal are
/// kept, and the metrics run over the four abnormal classes.
Evaluation evaluate_predictions(std::span<const int> preds, std::span<const int> labels, ClassScope classes);
Evaluation evaluate(const SmartModel& model, const Dataset& dataset, const SplitSpec& split, Scope scope,
                    ClassScope classes);

/// CSV "sequence_id,label,z_0..z_{d-1}". Throws DataError for unknown ids.
std::string export_embeddings(const SmartModel& model, const Dataset& dataset, std::span<const int> ids);

// ---- reports ------------------------------------------------------------------------

struct ReportRow {
  Scope scope;
  ClassScope classes;
  Evaluation eval;
};

/// Every (scope, classes) combination, in that nesting order. Setting I and
/// Setting II are each predicted once; overall reuses their predictions.
std::vector<ReportRow> evaluate_scopes(const SmartModel& model, const Dataset& dataset, const SplitSpec& split,
                                       std::span<const Scope> scopes, std::span<const ClassScope> classes);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricSet& m);
std::string confusion_csv(const ConfusionMatrix& cm);
/// Markdown: Overall / Setting I / Setting II by Acc, P_m, R_m, F_m, in an
/// all-actions block and an abnormal-actions block.
std::string markdown_report(const std::string& title, std::span<const ReportRow> rows);

}  // namespace smart
