#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "smart/error.hpp"
#include "smart/training.hpp"
#include "support.hpp"

using namespace smart;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(FusionKind fusion = FusionKind::smart) {
  ModelConfig m;
  m.skeleton = {6, 8, 3};
  m.attention = {4, 2, 5};
  m.siamese = {16, 2, 3, 3};
  m.fuse_dim = 8;
  m.weight_hidden = 4;
  m.fusion = fusion;
  return m;
}

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    GeneratorConfig g;
    g.seed = 5;
    g.clips_per_class = 1;
    g.frames = 8;
    g.height = 32;
    g.width = 32;
    return generate_dataset(g);
  }();
  return ds;
}

// Every `stride`-th sample starting at `offset`.
std::vector<SampleInputs> inputs(const ModelConfig& m, int offset, int stride) {
  std::vector<int> ids;
  for (std::size_t i = static_cast<std::size_t>(offset); i < tiny_dataset().samples.size(); i += stride)
    ids.push_back(tiny_dataset().samples[i].sequence_id);
  return prepare_samples(tiny_dataset(), ids, m);
}

TrainConfig quick_train(int epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 8;
  t.seed = 3;
  return t;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("smart_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("train config validation") {
  CHECK_NOTHROW(validate(TrainConfig{}));
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.lr = -1e-3; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.lr = std::nan(""); })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.batch_size = 0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.patience = 0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.plateau_factor = 1.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](TrainConfig& c) { c.weight_decay = -1; })), ConfigError);
  CHECK_NOTHROW(validate(bad([](TrainConfig& c) { c.lr = 0; })));
}

// ---- schedule ----------------------------------------------------------------------------

TEST_CASE("plateau schedule: five flat epochs cut the rate tenfold") {
  TrainConfig c;
  ScheduleState s;
  s.lr = 1e-3;
  CHECK(lr_schedule_step(s, 0.5, c) == 1e-3);
  for (int i = 0; i < 4; ++i) CHECK(lr_schedule_step(s, 0.5, c) == 1e-3);
  CHECK(lr_schedule_step(s, 0.4, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.reductions_since_best == 1);
  CHECK(s.bad_epochs == 0);
}

TEST_CASE("plateau schedule: improving every epoch keeps the rate") {
  TrainConfig c;
  ScheduleState s;
  s.lr = 1e-3;
  for (int i = 0; i < 20; ++i) CHECK(lr_schedule_step(s, 0.01 * i, c) == 1e-3);
  CHECK(s.reductions_since_best == 0);
}

TEST_CASE("plateau schedule: improvement resets the counter") {
  TrainConfig c;
  ScheduleState s;
  s.lr = 1e-3;
  lr_schedule_step(s, 0.5, c);
  for (int i = 0; i < 4; ++i) lr_schedule_step(s, 0.5, c);
  lr_schedule_step(s, 0.6, c);
  CHECK(s.bad_epochs == 0);
  for (int i = 0; i < 4; ++i) CHECK(lr_schedule_step(s, 0.6, c) == 1e-3);
}

TEST_CASE("plateau schedule: the rate stays at its floor") {
  TrainConfig c;
  ScheduleState s;
  s.lr = 1e-6;
  lr_schedule_step(s, 0.5, c);
  for (int i = 0; i < 30; ++i) CHECK(lr_schedule_step(s, 0.1, c) == 1e-6);
  s.lr = 3e-6;
  for (int i = 0; i < 5; ++i) lr_schedule_step(s, 0.1, c);
  CHECK(s.lr == 1e-6);
}

// ---- optimiser -----------------------------------------------------------------------------

TEST_CASE("adam step matches a scalar reference with decoupled weight decay") {
  nn::ParamStore store;
  std::mt19937_64 rng(1);
  const int id = store.add("p", {5}, 1.0, rng);
  TrainConfig c;
  c.weight_decay = 0.01;
  AdamState s = make_adam(store);
  std::vector<double> p = store[id].value, m(5, 0.0), v(5, 0.0);
  for (int step = 1; step <= 4; ++step) {
    nn::Grads g(store);
    const auto grad = testing::random_vector(5, rng);
    std::copy(grad.begin(), grad.end(), g[id].begin());
    adam_step(store, g, s, c, 0.05);
    for (int k = 0; k < 5; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * grad[k];
      v[k] = 0.999 * v[k] + 0.001 * grad[k] * grad[k];
      const double mh = m[k] / (1 - std::pow(0.9, step)), vh = v[k] / (1 - std::pow(0.999, step));
      p[k] -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * p[k]);
      CHECK(store[id].value[k] == doctest::Approx(p[k]).epsilon(1e-12));
    }
  }
  CHECK(s.step == 4);
}

TEST_CASE("parallel and serial batch gradients are identical") {
  const auto m = tiny_model();
  const auto model = SmartModel::create(m, 2);
  const auto set = inputs(m, 0, 5);
  std::vector<const SampleInputs*> batch;
  for (const auto& s : set) batch.push_back(&s);
  nn::Grads a(model.params()), b(model.params());
  CHECK(batch_loss_and_grad(model, batch, a) == batch_loss_and_grad_serial(model, batch, b));
  for (std::size_t t = 0; t < model.params().size(); ++t) {
    const auto ga = a[static_cast<int>(t)], gb = b[static_cast<int>(t)];
    REQUIRE(std::equal(ga.begin(), ga.end(), gb.begin()));
  }
}

TEST_CASE("one small step lowers a single sample's loss") {
  const auto m = tiny_model();
  const auto set = inputs(m, 1, 3);
  REQUIRE(set.size() >= 20u);
  TrainConfig c;
  int failures = 0;
  for (int i = 0; i < 20; ++i) {
    auto model = SmartModel::create(m, 100 + i);
    const auto& s = set[static_cast<std::size_t>(i)];
    nn::Grads g(model.params());
    const double before = model.loss_and_grad(s, g);
    AdamState adam = make_adam(model.params());
    adam_step(model.params(), g, adam, c, 1e-5);
    failures += !(model.loss(s) < before);
  }
  CHECK(failures <= 2);
}

// ---- training loop ---------------------------------------------------------------------------

TEST_CASE("training is deterministic for a fixed seed") {
  const auto m = tiny_model();
  const auto train_set = inputs(m, 0, 2), val_set = inputs(m, 1, 4);
  auto run = [&] {
    auto model = SmartModel::create(m, 9);
    return train(model, train_set, val_set, quick_train(2));
  };
  const auto a = run(), b = run();
  REQUIRE(a.history.size() == b.history.size());
  CHECK(a.history[0].train_loss == b.history[0].train_loss);
  CHECK(a.history[1].val_loss == b.history[1].val_loss);
  for (std::size_t i = 0; i < a.best.params.size(); ++i) CHECK(a.best.params[i].value == b.best.params[i].value);
}

TEST_CASE("lr = 0 leaves every parameter unchanged") {
  const auto m = tiny_model();
  const auto train_set = inputs(m, 0, 3), val_set = inputs(m, 1, 6);
  auto model = SmartModel::create(m, 4);
  const auto before = model.params().params();
  auto cfg = quick_train(1);
  cfg.lr = 0;
  train(model, train_set, val_set, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params().params()[i].value == before[i].value);
}

TEST_CASE("history is append-only, ordered and the model ends on the best epoch") {
  const auto m = tiny_model(FusionKind::concat);
  const auto train_set = inputs(m, 0, 2), val_set = inputs(m, 1, 4);
  auto model = SmartModel::create(m, 6);
  std::vector<EpochRecord> seen;
  const auto r = train(model, train_set, val_set, quick_train(4), "echo", [&](const EpochRecord& e) {
    seen.push_back(e);
  });
  REQUIRE(r.history.size() == seen.size());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    CHECK(r.history[i].epoch == static_cast<int>(i) + 1);
    CHECK(r.history[i].train_loss == seen[i].train_loss);
    CHECK(std::isfinite(r.history[i].val_loss));
    CHECK((r.history[i].val_macro_f1 >= 0.0 && r.history[i].val_macro_f1 <= 1.0));
  }
  double best = -1;
  for (const auto& e : r.history) best = std::max(best, e.val_macro_f1);
  CHECK(r.best.best_metric == best);
  CHECK(r.best.config_echo == "echo");
  CHECK(r.history[static_cast<std::size_t>(r.best.epoch) - 1].val_macro_f1 == best);
  for (std::size_t i = 0; i < r.best.params.size(); ++i)
    CHECK(model.params().params()[i].value == r.best.params[i].value);
  CHECK(macro_f1_of(model, val_set) == best);

  const auto csv = history_csv(r.history);
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_macro_f1,lr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.history.size()) + 1);
}

TEST_CASE("training stops early once the rate has been cut without improvement") {
  const auto m = tiny_model(FusionKind::concat);
  const auto train_set = inputs(m, 0, 3), val_set = inputs(m, 1, 6);
  auto model = SmartModel::create(m, 8);
  auto cfg = quick_train(20);
  cfg.lr = 0;
  cfg.patience = 1;
  cfg.max_reductions = 2;
  const auto r = train(model, train_set, val_set, cfg);
  CHECK(r.early_stopped);
  CHECK(r.history.size() == 3u);
}

TEST_CASE("a non-finite loss aborts with the epoch and batch") {
  const auto m = tiny_model();
  const auto train_set = inputs(m, 0, 3), val_set = inputs(m, 1, 6);
  auto model = SmartModel::create(m, 8);
  model.params()[model.params().find("classifier.bias")].value[0] = std::nan("");
  try {
    train(model, train_set, val_set, quick_train(2));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
  }
}

TEST_CASE("empty splits are rejected") {
  const auto m = tiny_model();
  const auto set = inputs(m, 0, 10);
  auto model = SmartModel::create(m, 1);
  CHECK_THROWS_AS(train(model, {}, set, quick_train(1)), ProtocolError);
  CHECK_THROWS_AS(train(model, set, {}, quick_train(1)), ProtocolError);
}

// ---- checkpoints ----------------------------------------------------------------------------

TEST_CASE("checkpoint round trip reproduces the forward pass") {
  const auto dir = scratch_dir("roundtrip");
  const auto m = tiny_model();
  const auto train_set = inputs(m, 0, 3), val_set = inputs(m, 1, 6);
  auto model = SmartModel::create(m, 12);
  const auto r = train(model, train_set, val_set, quick_train(2), "model.fusion=smart\n");
  save_checkpoint(r.best, dir / "ckpt.bin");
  const auto loaded = load_checkpoint(dir / "ckpt.bin");
  CHECK(loaded.config_echo == r.best.config_echo);
  CHECK(loaded.epoch == r.best.epoch);
  CHECK(loaded.best_metric == r.best.best_metric);
  CHECK(loaded.adam.step == r.best.adam.step);
  CHECK(loaded.adam.m == r.best.adam.m);
  CHECK(loaded.adam.v == r.best.adam.v);

  auto fresh = SmartModel::create(m, 999);
  restore(fresh, loaded);
  for (const auto& s : val_set) {
    const auto a = model.forward(s), b = fresh.forward(s);
    for (std::size_t i = 0; i < a.logits.size(); ++i) CHECK(std::abs(a.logits[i] - b.logits[i]) <= 1e-6);
  }
}

TEST_CASE("corrupt or mismatched checkpoints are reported") {
  const auto dir = scratch_dir("corrupt");
  const auto m = tiny_model();
  auto model = SmartModel::create(m, 1);
  const auto ckpt = snapshot(model, make_adam(model.params()), "echo");
  save_checkpoint(ckpt, dir / "good.bin");

  std::ifstream in(dir / "good.bin", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  CHECK_THROWS_AS(load_checkpoint(write("truncated.bin", bytes.substr(0, bytes.size() / 2))), FormatError);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("magic.bin", wrong_magic)), FormatError);
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  CHECK_THROWS_AS(load_checkpoint(write("version.bin", wrong_version)), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), DataError);

  auto other = SmartModel::create(tiny_model(FusionKind::concat), 1);
  CHECK_THROWS_AS(restore(other, ckpt), FormatError);
}
