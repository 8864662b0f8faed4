// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--strict] [criteria...]
//
// With no criteria every check runs. The reproduction checks (7a-7d) are
// reported but only change the exit status under --strict; every other
// failure does.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "smart/cli.hpp"
#include "smart/config.hpp"
#include "smart/fusion.hpp"
#include "smart/metrics.hpp"
#include "smart/model.hpp"
#include "smart/motion_perception.hpp"
#include "smart/scene_perception.hpp"
#include "smart/training.hpp"
#include "support.hpp"

using namespace smart;
using smart::testing::random_vector;

namespace {

struct Outcome {
  std::string id;
  bool pass = false;
  bool reproduction = false;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(const std::string& id, bool pass, const std::string& detail, bool reproduction = false) {
  outcomes.push_back({id, pass, reproduction, detail});
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1: gradients ---------------------------------------------------------------------

struct OpCheck {
  std::string op;
  double max_rel = 0;
  std::string worst;
};

void fold(OpCheck& c, const testing::GradCheck& r, const std::string& what = "") {
  if (r.max_rel > c.max_rel) {
    c.max_rel = r.max_rel;
    c.worst = what.empty() ? r.worst : what + ":" + r.worst;
  }
}

OpCheck check_skeleton_encoder() {
  OpCheck c{"skeleton encoder"};
  nn::ParamStore store;
  std::mt19937_64 rng(17);
  const SkeletonEncoderConfig cfg{5, 6, 3};
  const int joints = 4, T = 6;
  const auto enc = SkeletonEncoder::create(store, "skel", cfg, rng, joints);
  const auto skel = random_vector(T * joints * 2, rng, 0.2, 0.8);
  const auto w = random_vector(cfg.out_dim, rng);
  auto loss = [&] {
    std::vector<double> z(cfg.out_dim);
    SkeletonEncoder::Cache cache;
    enc.forward(store, skel, T, z, cache);
    return testing::weighted_sum(w, z);
  };
  std::vector<double> z(cfg.out_dim);
  SkeletonEncoder::Cache cache;
  enc.forward(store, skel, T, z, cache);
  nn::Grads g(store);
  enc.backward(store, cache, w, g);
  fold(c, testing::check_gradients(store, g, loss));
  return c;
}

OpCheck check_siamese() {
  OpCheck c{"siamese encoders + difference extractors"};
  for (SceneInfo info : {SceneInfo::both, SceneInfo::depth, SceneInfo::mask}) {
    nn::ParamStore store;
    std::mt19937_64 rng(31);
    SiameseConfig cfg;
    cfg.roi = 8;
    cfg.channels1 = 2;
    cfg.channels2 = 3;
    cfg.embed = 3;
    const auto net = SiameseInteraction::create(store, "inter", cfg, info, rng);
    SceneInputs in;
    in.roi = cfg.roi;
    const std::size_t n = static_cast<std::size_t>(cfg.roi) * cfg.roi;
    in.human_depth = random_vector(n, rng, 0, 1);
    in.human_mask = random_vector(n, rng, 0, 1);
    for (int s = 0; s < 4; ++s) {
      in.element_depth[s] = random_vector(n, rng, 0, 1);
      in.element_mask[s] = random_vector(n, rng, 0, 1);
    }
    in.raw_depth = random_vector(n, rng, 0, 1);
    const auto w = random_vector(static_cast<std::size_t>(net.output_dim()), rng);
    auto loss = [&] {
      std::vector<double> z(net.output_dim());
      SiameseInteraction::Cache cache;
      net.forward(store, in, z, cache);
      return testing::weighted_sum(w, z);
    };
    std::vector<double> z(net.output_dim());
    SiameseInteraction::Cache cache;
    net.forward(store, in, z, cache);
    nn::Grads g(store);
    net.backward(store, in, cache, w, g);
    fold(c, testing::check_gradients(store, g, loss), scene_info_name(info));
  }
  return c;
}

OpCheck check_trajectory_attention() {
  OpCheck c{"trajectory attention (with relative table)"};
  nn::ParamStore store;
  std::mt19937_64 rng(21);
  const AttentionConfig cfg{4, 2, 5};
  const auto att = TrajectoryAttention::create(store, "traj", cfg, rng);
  const int T = 6;
  const auto traj = random_vector(T * 3, rng, 0, 1);
  const auto w = random_vector(cfg.out_dim, rng);
  auto loss = [&] {
    std::vector<double> z(cfg.out_dim);
    TrajectoryAttention::Cache cache;
    att.forward(store, traj, T, z, cache);
    return testing::weighted_sum(w, z);
  };
  std::vector<double> z(cfg.out_dim);
  TrajectoryAttention::Cache cache;
  att.forward(store, traj, T, z, cache);
  nn::Grads g(store);
  att.backward(store, traj, cache, w, g);
  fold(c, testing::check_gradients(store, g, loss));
  return c;
}

// Both channel fusions and the scene-weight net, inside the smart head, with
// a loss that also reads the scene-weight logit.
OpCheck check_fusion_head() {
  OpCheck c{"channel fusions + scene-weight net"};
  nn::ParamStore store;
  std::mt19937_64 rng(12);
  const int dk = 5, dj = 4, ds = 6, dim = 8;
  const auto head = FusionHead::create(store, "head", FusionKind::smart, dk, dj, ds, dim, 4, rng);
  auto zk = random_vector(dk, rng), zj = random_vector(dj, rng), zs = random_vector(ds, rng);
  const auto w = random_vector(static_cast<std::size_t>(head.output_dim()), rng);
  const double w_a = 0.37;
  auto loss = [&] {
    std::vector<double> zf(head.output_dim());
    FusionHead::Cache cache;
    head.forward(store, zk, zj, zs, zf, cache);
    return testing::weighted_sum(w, zf) + w_a * cache.a_logit;
  };
  std::vector<double> zf(head.output_dim()), dzk(dk), dzj(dj), dzs(ds);
  FusionHead::Cache cache;
  head.forward(store, zk, zj, zs, zf, cache);
  nn::Grads g(store);
  head.backward(store, zk, zj, zs, cache, w, w_a, g, dzk, dzj, dzs);
  fold(c, testing::check_gradients(store, g, loss));
  fold(c, testing::check_input_gradient(zk, dzk, loss, "z_k"));
  fold(c, testing::check_input_gradient(zj, dzj, loss, "z_j"));
  fold(c, testing::check_input_gradient(zs, dzs, loss, "z_s"));
  return c;
}

OpCheck check_classifier() {
  OpCheck c{"classifier (with cross-entropy)"};
  nn::ParamStore store;
  std::mt19937_64 rng(3);
  const int d = 7;
  const auto cls = BaselineClassifier::create(store, "cls", d, rng);
  auto z = random_vector(d, rng);
  const int label = 4;
  auto loss = [&] {
    std::vector<double> logits(kNumClasses);
    cls.classify(store, z, logits);
    return baseline_loss(logits, label);
  };
  std::vector<double> logits(kNumClasses), dlogits(kNumClasses), dz(d);
  cls.classify(store, z, logits);
  nn::cross_entropy(logits, label, dlogits);
  nn::Grads g(store);
  cls.linear.backward(store, z, dlogits, g, dz);
  fold(c, testing::check_gradients(store, g, loss));
  fold(c, testing::check_input_gradient(z, dz, loss, "z"));
  return c;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<OpCheck> checks = {check_skeleton_encoder(), check_siamese(), check_trajectory_attention(),
                                 check_fusion_head(), check_classifier()};
  const double secs = elapsed(t0);
  bool all = secs < 120;
  for (const auto& c : checks) {
    const bool ok = c.max_rel < 1e-4;
    all = all && ok;
    std::printf("  %-44s max rel %.2e%s%s\n", c.op.c_str(), c.max_rel, c.worst.empty() ? "" : " at ",
                c.worst.c_str());
  }
  report("1 gradient correctness", all, fmt("all ops max rel < 1e-4 at step 1e-5, %.1fs (limit 120s)", secs));
}

// ---- 2: loss values --------------------------------------------------------------------

void criterion2() {
  const std::vector<double> uniform(kNumClasses, 0.0);
  const double ce = baseline_loss(uniform, 3);
  const double bce0 = nn::binary_cross_entropy(0.5, 0), bce1 = nn::binary_cross_entropy(0.5, 1);
  const double combined = smart_loss(uniform, 3, 0.5, 1);
  const bool ok = std::abs(ce - std::log(10.0)) <= 1e-6 && std::abs(bce0 - std::log(2.0)) <= 1e-6 &&
                  std::abs(bce1 - std::log(2.0)) <= 1e-6 &&
                  std::abs(combined - std::log(10.0) - std::log(2.0)) <= 1e-4;
  report("2 analytic loss values", ok,
         fmt("CE %.9f (ln10), BCE %.9f/%.9f (ln2), combined %.6f (ln10+ln2)", ce, bce0, bce1, combined));
}

// ---- 3: metric oracle --------------------------------------------------------------------

struct OracleMetrics {
  std::vector<long> tp, fp, fn, tn;
  double acc = 0, acc_ovr = 0, p = 0, r = 0, f1 = 0;
};

OracleMetrics count_per_sample(const std::vector<int>& preds, const std::vector<int>& labels, int classes) {
  OracleMetrics o;
  long correct = 0, num = 0, den = 0;
  for (int c = 0; c < classes; ++c) {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool t = labels[i] == c, p = preds[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      tn += !t && !p;
    }
    o.tp.push_back(tp);
    o.fp.push_back(fp);
    o.fn.push_back(fn);
    o.tn.push_back(tn);
    correct += tp;
    num += tp + tn;
    den += tp + tn + fp + fn;
    o.p += (tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0) / classes;
    o.r += (tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0) / classes;
  }
  o.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
  o.acc_ovr = static_cast<double>(num) / static_cast<double>(den);
  o.f1 = o.p + o.r > 0 ? 2 * o.p * o.r / (o.p + o.r) : 0.0;
  return o;
}

void criterion3() {
  std::mt19937_64 rng(2024);
  int bad = 0;
  double worst = 0;
  for (int run = 0; run < 100; ++run) {
    const int n = 1 + static_cast<int>(rng() % 300);
    std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = cls(rng);
      preds[i] = rng() % 3 == 0 ? labels[i] : cls(rng);
    }
    const auto cm = confusion(preds, labels);
    const auto o = count_per_sample(preds, labels, kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
      const auto k = class_counts(cm, c);
      bad += k.tp != o.tp[c] || k.fp != o.fp[c] || k.fn != o.fn[c] || k.tn != o.tn[c];
    }
    const auto m = compute_metrics(cm);
    for (auto [a, b] : {std::pair{m.acc, o.acc}, std::pair{m.acc_one_vs_rest, o.acc_ovr}, std::pair{m.macro_p, o.p},
                        std::pair{m.macro_r, o.r}, std::pair{m.macro_f1, o.f1}})
      worst = std::max(worst, std::abs(a - b));
  }
  const ConfusionMatrix cm{2, {1, 1, 0, 2}};
  const auto m = compute_metrics(cm);
  const bool worked = std::abs(m.acc - 0.75) < 1e-4 && std::abs(m.macro_p - 0.8333) < 1e-4 &&
                      std::abs(m.macro_r - 0.75) < 1e-4 && std::abs(m.macro_f1 - 0.7895) < 1e-4;
  report("3 metric oracle equivalence", bad == 0 && worst <= 1e-12 && worked,
         fmt("100 runs: %d count mismatches, max ratio error %.1e; worked example acc %.4f P %.4f R %.4f F %.4f", bad,
             worst, m.acc, m.macro_p, m.macro_r, m.macro_f1));
}

// ---- 4: attention ------------------------------------------------------------------------

void criterion4() {
  std::mt19937_64 rng(4);
  double row_err = 0;
  for (int T : {1, 2, 7, 16}) {
    const int D = 4, clip = 3;
    const auto q = random_vector(T * D, rng, -3, 3), k = random_vector(T * D, rng, -3, 3),
               v = random_vector(T * D, rng);
    const auto rel = random_vector((2 * clip + 1) * D, rng);
    const auto r = attention_core(T, D, q, k, v, rel, clip);
    for (int i = 0; i < T; ++i)
      row_err = std::max(row_err, std::abs(std::accumulate(r.attn.begin() + i * T, r.attn.begin() + (i + 1) * T, 0.0) - 1));
  }
  const int T = 5, D = 3, clip = 2;
  const std::vector<double> zero_q(T * D, 0.0);
  const auto k = random_vector(T * D, rng), v = random_vector(T * D, rng);
  const auto rz = attention_core(T, D, zero_q, k, v, random_vector((2 * clip + 1) * D, rng), clip);
  double uniform_err = 0;
  for (double a : rz.attn) uniform_err = std::max(uniform_err, std::abs(a - 1.0 / T));
  const auto hand = attention_core(2, 1, std::vector<double>{1, 0}, std::vector<double>{0, 1},
                                   std::vector<double>{2, 4}, std::vector<double>(3, 0.0), 1);
  report("4 trajectory attention", row_err <= 1e-6 && uniform_err <= 1e-12 && std::abs(hand.out[0] - 3.4621) <= 1e-3,
         fmt("row-sum error %.1e, zero-query deviation from uniform %.1e, T=2 output %.4f (3.4621)", row_err,
             uniform_err, hand.out[0]));
}

// ---- 5: siamese --------------------------------------------------------------------------

void criterion5() {
  nn::ParamStore store;
  std::mt19937_64 rng(5);
  SiameseConfig cfg;
  cfg.roi = 16;
  cfg.channels1 = 4;
  cfg.channels2 = 4;
  cfg.embed = 4;
  const auto enc = SceneEncoder::create(store, "enc", cfg, rng);
  const auto proj = nn::Linear::create(store, "proj", static_cast<int>(enc.feature_size()), cfg.embed, false, rng);
  int nonzero = 0, asymmetric = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_vector(256, rng, 0, 1), b = random_vector(256, rng, 0, 1);
    for (double v : difference_block(store, enc, proj, a, a)) nonzero += v != 0.0;
    asymmetric += difference_block(store, enc, proj, a, b) != difference_block(store, enc, proj, b, a);
  }
  report("5 siamese properties", nonzero == 0 && asymmetric == 0,
         fmt("20 trials: %d nonzero entries in identical-input blocks, %d asymmetric pairs", nonzero, asymmetric));
}

// ---- 6: decoupling -----------------------------------------------------------------------

void criterion6(const Dataset& ds) {
  long mismatches = 0, labeled = 0;
  for (const auto& s : ds.samples) {
    const auto sd = decouple(s);
    for (std::size_t i = 0; i < s.depth.size(); ++i) {
      if (s.mask[i] == 0) continue;
      float sum = 0.0f;
      for (int e = 0; e < kNumElementIds; ++e) sum += sd.channels[e][i];
      ++labeled;
      mismatches += sum != s.depth[i];
    }
  }
  report("6 decoupling partition", mismatches == 0,
         fmt("%zu sequences, %ld labeled pixels, %ld mismatches", ds.samples.size(), labeled, mismatches));
}

// ---- 7: reproduction ---------------------------------------------------------------------

RunConfig default_config() { return load_config(std::filesystem::path(SMART_SOURCE_DIR) / "configs/default.conf"); }

void criterion7(const RunConfig& base, const Dataset& ds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = make_splits(ds, base.split);
  auto run = [&](const std::string& label, const std::function<void(ModelConfig&)>& edit) {
    RunConfig c = base;
    edit(c.model);
    const auto r = run_experiment(ds, split, c, label);
    std::printf("  %-10s overall F_m %.3f | Setting I %.3f | Setting II %.3f | Setting II abnormal %.3f | %zu epochs, %.0fs\n",
                label.c_str(), r.metrics(Scope::overall, ClassScope::all).macro_f1,
                r.metrics(Scope::setting1, ClassScope::all).macro_f1,
                r.metrics(Scope::setting2, ClassScope::all).macro_f1,
                r.metrics(Scope::setting2, ClassScope::abnormal).macro_f1, r.training.history.size(), r.seconds);
    std::fflush(stdout);
    return r;
  };
  const auto smart = run("smart", [](ModelConfig&) {});
  const auto no_scene = run("no_scene", [](ModelConfig& m) { m = apply_composition(m, Composition::no_scene); });
  const auto concat = run("concat", [](ModelConfig& m) { m = apply_composition(m, Composition::no_fusion); });
  const auto depth = run("depth", [](ModelConfig& m) { m.scene_info = SceneInfo::depth; });
  const auto none = run("none", [](ModelConfig& m) { m.scene_info = SceneInfo::none; });
  const double secs = elapsed(t0);

  auto f = [](const ExperimentResult& r, Scope s, ClassScope c = ClassScope::all) { return r.metrics(s, c).macro_f1; };
  const double gap_a = f(smart, Scope::setting2, ClassScope::abnormal) - f(no_scene, Scope::setting2, ClassScope::abnormal);
  report("7a Setting II abnormal gain over no-scene", gap_a >= 0.15,
         fmt("smart %.3f vs no_scene %.3f, gain %.1f points (need >= 15)", f(smart, Scope::setting2, ClassScope::abnormal),
             f(no_scene, Scope::setting2, ClassScope::abnormal), 100 * gap_a),
         true);
  const double so = f(smart, Scope::overall), no = f(no_scene, Scope::overall), co = f(concat, Scope::overall);
  report("7b composition ordering smart > no_scene >= concat", so > no && no >= co,
         fmt("overall F_m smart %.3f, no_scene %.3f, concat %.3f", so, no, co), true);
  const double gap_c = f(smart, Scope::setting2) - f(concat, Scope::setting2);
  report("7c fusion ordering smart - concat >= 10 points", gap_c >= 0.10,
         fmt("Setting II F_m smart %.3f, concat %.3f, gap %.1f points", f(smart, Scope::setting2),
             f(concat, Scope::setting2), 100 * gap_c),
         true);
  const double sb = f(smart, Scope::setting2), sd = f(depth, Scope::setting2), sn = f(none, Scope::setting2);
  report("7d scene-info ordering both > depth > none", sb > sd && sd > sn,
         fmt("Setting II F_m both %.3f, depth %.3f, none %.3f", sb, sd, sn), true);
  report("7 runtime", secs < 1800, fmt("five training runs in %.0fs (limit 1800s)", secs));
}

// ---- 8: determinism ----------------------------------------------------------------------

void criterion8(const RunConfig& base) {
  RunConfig c = base;
  c.train.max_epochs = 1;
  auto epoch_one = [&] {
    const Dataset ds = generate_dataset(c.generator);
    const auto split = make_splits(ds, c.split);
    SmartModel model = SmartModel::create(c.model, c.train.seed);
    const auto train_set = prepare_samples(ds, split.train_ids, c.model);
    const auto val_set = prepare_samples(ds, split.val_ids, c.model);
    return train(model, train_set, val_set, c.train).history.at(0).train_loss;
  };
  const double l1 = epoch_one(), l2 = epoch_one();

  const Dataset ds = generate_dataset(c.generator);
  const auto split = make_splits(ds, c.split);
  const SmartModel model = SmartModel::create(c.model, 11);
  const auto file = std::filesystem::temp_directory_path() / "smart_acceptance_checkpoint.bin";
  save_checkpoint(snapshot(model, make_adam(model.params()), config_echo(c)), file);
  SmartModel loaded = SmartModel::create(c.model, 99);
  restore(loaded, load_checkpoint(file));
  std::filesystem::remove(file);
  const auto samples = prepare_samples(ds, split.setting2_ids, c.model);
  double worst = 0;
  for (const auto& s : samples) {
    const auto a = model.forward(s), b = loaded.forward(s);
    for (std::size_t i = 0; i < a.logits.size(); ++i) worst = std::max(worst, std::abs(a.logits[i] - b.logits[i]));
  }
  report("8 determinism", std::abs(l1 - l2) <= 1e-6 && worst <= 1e-6,
         fmt("epoch-1 loss %.9f vs %.9f; checkpoint round trip max logit change %.1e over %zu samples", l1, l2, worst,
             samples.size()));
}

// ---- 9: skeleton-only baseline -----------------------------------------------------------

void criterion9(const RunConfig& base) {
  RunConfig c = base;
  c.generator.classes = {kWalk, kRun, kStand};
  c.model = apply_composition(c.model, Composition::no_scene);
  c.train.max_epochs = 30;
  const Dataset ds = generate_dataset(c.generator);
  const auto split = make_splits(ds, c.split);
  SmartModel model = SmartModel::create(c.model, c.train.seed);
  const auto result = train(model, prepare_samples(ds, split.train_ids, c.model),
                            prepare_samples(ds, split.val_ids, c.model), c.train);
  const auto test = prepare_samples(ds, split.internal_test_ids, c.model);
  const auto preds = predict_all(model, test);
  std::vector<int> labels;
  for (const auto& s : test) labels.push_back(s.label);
  const double acc = accuracy(confusion(preds, labels));
  report("9 skeleton-only baseline", acc >= 0.95,
         fmt("walk/run/stand internal-test accuracy %.3f on %zu clips after %zu epochs (need >= 0.95)", acc,
             test.size(), result.history.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SMART acceptance checks"};
  bool strict = false;
  std::vector<std::string> selected;
  app.add_flag("--strict", strict, "fail on reproduction criteria too");
  app.add_option("criteria", selected, "criteria to run (1-9); all when omitted");
  CLI11_PARSE(app, argc, argv);
  const std::set<std::string> want(selected.begin(), selected.end());
  auto on = [&](const char* id) { return want.empty() || want.count(id); };

  try {
    if (on("1")) criterion1();
    if (on("2")) criterion2();
    if (on("3")) criterion3();
    if (on("4")) criterion4();
    if (on("5")) criterion5();
    const RunConfig config = default_config();
    if (on("6") || on("7")) {
      const Dataset ds = generate_dataset(config.generator);
      if (on("6")) criterion6(ds);
      if (on("7")) criterion7(config, ds);
    }
    if (on("8")) criterion8(config);
    if (on("9")) criterion9(config);
  } catch (const std::exception& e) {
    std::printf("FAIL error: %s\n", e.what());
    return 1;
  }

  int failed = 0, failed_reproduction = 0;
  for (const auto& o : outcomes)
    if (!o.pass) ++(o.reproduction ? failed_reproduction : failed);
  std::printf("%zu checks: %zu passed, %d failed (%d of them reproduction checks)\n", outcomes.size(),
              outcomes.size() - failed - failed_reproduction, failed + failed_reproduction, failed_reproduction);
  return failed > 0 || (strict && failed_reproduction > 0) ? 1 : 0;
}
