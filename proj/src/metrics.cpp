#include "smart/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "smart/error.hpp"
#include "smart/model.hpp"
#include "smart/text.hpp"

namespace smart {

long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int classes) {
  if (preds.size() != labels.size()) throw DataError("confusion: predictions and labels differ in length");
  if (classes < 1) throw DataError("confusion: need at least one class");
  ConfusionMatrix cm{classes, std::vector<long>(static_cast<std::size_t>(classes) * classes, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= classes || labels[i] < 0 || labels[i] >= classes)
      throw DataError("confusion: class id out of range at index " + std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(labels[i]) * classes + preds[i]];
  }
  return cm;
}

ClassCounts class_counts(const ConfusionMatrix& cm, int cls) {
  ClassCounts c;
  long row = 0, col = 0;
  for (int j = 0; j < cm.classes; ++j) {
    row += cm.at(cls, j);
    col += cm.at(j, cls);
  }
  c.tp = cm.at(cls, cls);
  c.fn = row - c.tp;
  c.fp = col - c.tp;
  c.tn = cm.total() - c.tp - c.fn - c.fp;
  return c;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw DataError("metrics over an empty confusion matrix");
}

std::vector<int> all_classes(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  long trace = 0;
  for (int i = 0; i < cm.classes; ++i) trace += cm.at(i, i);
  return static_cast<double>(trace) / static_cast<double>(cm.total());
}

double accuracy_one_vs_rest(const ConfusionMatrix& cm) { return compute_metrics(cm).acc_one_vs_rest; }

MetricSet compute_metrics(const ConfusionMatrix& cm, std::span<const int> class_ids) {
  require_nonempty(cm);
  MetricSet m;
  m.class_ids = class_ids.empty() ? all_classes(cm.classes) : std::vector<int>(class_ids.begin(), class_ids.end());
  const double k = static_cast<double>(m.class_ids.size());
  long correct = 0, num = 0, den = 0;
  for (int cls : m.class_ids) {
    if (cls < 0 || cls >= cm.classes) throw DataError("metric class id out of range");
    const ClassCounts c = class_counts(cm, cls);
    correct += c.tp;
    num += c.tp + c.tn;
    den += c.tp + c.tn + c.fp + c.fn;
    const bool p_undef = c.tp + c.fp == 0;
    const bool r_undef = c.tp + c.fn == 0;
    const double p = p_undef ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = r_undef ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (p_undef || r_undef) m.undefined_classes.push_back(cls);
    m.per_class_p.push_back(p);
    m.per_class_r.push_back(r);
    m.per_class_f1.push_back(harmonic(p, r));
    m.macro_p += p / k;
    m.macro_r += r / k;
    m.macro_f1_per_class += m.per_class_f1.back() / k;
  }
  m.acc = static_cast<double>(correct) / static_cast<double>(cm.total());
  m.acc_one_vs_rest = static_cast<double>(num) / static_cast<double>(den);
  m.f1_undefined = m.macro_p + m.macro_r == 0;
  m.macro_f1 = harmonic(m.macro_p, m.macro_r);
  return m;
}

double macro_precision(const ConfusionMatrix& cm) { return compute_metrics(cm).macro_p; }
double macro_recall(const ConfusionMatrix& cm) { return compute_metrics(cm).macro_r; }

F1Value macro_f1(const ConfusionMatrix& cm, F1Mode mode) {
  const MetricSet m = compute_metrics(cm);
  const double v = mode == F1Mode::macro_pr ? m.macro_f1 : m.macro_f1_per_class;
  return {v, m.f1_undefined || v == 0.0};
}

// ---- protocol ---------------------------------------------------------------------

std::string scope_name(Scope s) {
  switch (s) {
    case Scope::overall: return "overall";
    case Scope::setting1: return "setting1";
    case Scope::setting2: return "setting2";
  }
  return "?";
}

std::string class_scope_name(ClassScope c) { return c == ClassScope::all ? "all" : "abnormal"; }

Scope parse_scope(const std::string& name) {
  if (name == "overall") return Scope::overall;
  if (name == "setting1") return Scope::setting1;
  if (name == "setting2") return Scope::setting2;
  throw ConfigError("unknown scope '" + name + "'");
}

ClassScope parse_class_scope(const std::string& name) {
  if (name == "all") return ClassScope::all;
  if (name == "abnormal") return ClassScope::abnormal;
  throw ConfigError("unknown class scope '" + name + "'");
}

std::vector<int> scope_ids(const SplitSpec& split, Scope scope) {
  std::vector<int> ids;
  if (scope != Scope::setting2) ids = split.setting1_ids;
  if (scope != Scope::setting1) ids.insert(ids.end(), split.setting2_ids.begin(), split.setting2_ids.end());
  if (ids.empty()) throw ProtocolError("split has no sequences for scope " + scope_name(scope));
  return ids;
}

Evaluation evaluate_predictions(std::span<const int> preds, std::span<const int> labels, ClassScope classes) {
  if (preds.size() != labels.size()) throw DataError("evaluate: predictions and labels differ in length");
  Evaluation e;
  if (classes == ClassScope::all) {
    e.cm = confusion(preds, labels);
    e.metrics = compute_metrics(e.cm);
    return e;
  }
  std::vector<int> p, l;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (is_abnormal(labels[i])) {
      p.push_back(preds[i]);
      l.push_back(labels[i]);
    }
  if (l.empty()) throw ProtocolError("evaluate: no abnormal samples in scope");
  e.cm = confusion(p, l);
  const auto abnormal = abnormal_classes();
  e.metrics = compute_metrics(e.cm, abnormal);
  return e;
}

Evaluation evaluate(const SmartModel& model, const Dataset& dataset, const SplitSpec& split, Scope scope,
                    ClassScope classes) {
  const auto ids = scope_ids(split, scope);
  const auto samples = prepare_samples(dataset, ids, model.config());
  const auto preds = predict_all(model, samples);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return evaluate_predictions(preds, labels, classes);
}

std::vector<ReportRow> evaluate_scopes(const SmartModel& model, const Dataset& dataset, const SplitSpec& split,
                                       std::span<const Scope> scopes, std::span<const ClassScope> classes) {
  struct Predicted {
    bool done = false;
    std::vector<int> preds, labels;
  };
  Predicted setting[2];
  auto predicted = [&](int which) -> const Predicted& {
    auto& p = setting[which];
    if (!p.done) {
      const auto& ids = which == 0 ? split.setting1_ids : split.setting2_ids;
      const auto samples = prepare_samples(dataset, ids, model.config());
      p.preds = predict_all(model, samples);
      for (const auto& s : samples) p.labels.push_back(s.label);
      p.done = true;
    }
    return p;
  };
  std::vector<ReportRow> rows;
  for (Scope scope : scopes) {
    scope_ids(split, scope);  // rejects empty scopes
    std::vector<int> preds, labels;
    for (int which = 0; which < 2; ++which) {
      if ((which == 0 && scope == Scope::setting2) || (which == 1 && scope == Scope::setting1)) continue;
      const auto& p = predicted(which);
      preds.insert(preds.end(), p.preds.begin(), p.preds.end());
      labels.insert(labels.end(), p.labels.begin(), p.labels.end());
    }
    for (ClassScope cs : classes) rows.push_back({scope, cs, evaluate_predictions(preds, labels, cs)});
  }
  return rows;
}

std::string export_embeddings(const SmartModel& model, const Dataset& dataset, std::span<const int> ids) {
  const auto samples = prepare_samples(dataset, ids, model.config());
  std::vector<std::vector<double>> feats(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) feats[i] = model.forward(samples[i]).z_f;
  std::ostringstream os;
  os << "sequence_id,label";
  for (int j = 0; j < model.feature_dim(); ++j) os << ",z_" << j;
  os << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    os << samples[i].sequence_id << ',' << samples[i].label;
    for (double v : feats[i]) os << ',' << text::format_double(v);
    os << '\n';
  }
  return os.str();
}

// ---- reports --------------------------------------------------------------------

std::string metrics_csv_header() {
  return "row,acc,acc_one_vs_rest,macro_p,macro_r,macro_f1,macro_f1_per_class,f1_undefined,undefined_classes\n";
}

std::string metrics_csv_row(const std::string& label, const MetricSet& m) {
  std::ostringstream os;
  os << label << ',' << text::format_double(m.acc) << ',' << text::format_double(m.acc_one_vs_rest) << ','
     << text::format_double(m.macro_p) << ',' << text::format_double(m.macro_r) << ','
     << text::format_double(m.macro_f1) << ',' << text::format_double(m.macro_f1_per_class) << ','
     << (m.f1_undefined ? 1 : 0) << ',' << text::join_ints(m.undefined_classes, ' ') << '\n';
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\pred";
  for (int j = 0; j < cm.classes; ++j) os << ',' << action_classes()[static_cast<std::size_t>(j)].name;
  os << '\n';
  for (int i = 0; i < cm.classes; ++i) {
    os << action_classes()[static_cast<std::size_t>(i)].name;
    for (int j = 0; j < cm.classes; ++j) os << ',' << cm.at(i, j);
    os << '\n';
  }
  return os.str();
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

std::string markdown_report(const std::string& title, std::span<const ReportRow> rows) {
  std::ostringstream os;
  os << "# " << title << "\n\n";
  for (ClassScope cs : {ClassScope::all, ClassScope::abnormal}) {
    os << "## " << (cs == ClassScope::all ? "All actions" : "Abnormal actions") << "\n\n";
    os << "| Evaluation | Acc | P_m | R_m | F_m |\n|---|---|---|---|---|\n";
    for (Scope s : {Scope::overall, Scope::setting1, Scope::setting2}) {
      for (const auto& r : rows) {
        if (r.scope != s || r.classes != cs) continue;
        const auto& m = r.eval.metrics;
        const char* name = s == Scope::overall ? "Overall" : s == Scope::setting1 ? "Setting I" : "Setting II";
        os << "| " << name << " | " << pct(m.acc) << " | " << pct(m.macro_p) << " | " << pct(m.macro_r) << " | "
           << pct(m.macro_f1) << " |\n";
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace smart
