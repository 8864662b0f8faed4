#include "smart/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "smart/error.hpp"
#include "smart/metrics.hpp"
#include "smart/text.hpp"

namespace smart {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void validate(const TrainConfig& c) {
  if (!(c.lr >= 0) || !std::isfinite(c.lr)) throw ConfigError("train.lr must be a finite value >= 0");
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (c.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (c.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (!(c.plateau_factor > 0 && c.plateau_factor < 1)) throw ConfigError("train.plateau_factor must be in (0,1)");
  if (c.min_lr < 0 || c.weight_decay < 0) throw ConfigError("train.min_lr and train.weight_decay must be >= 0");
  if (c.max_reductions < 1) throw ConfigError("train.max_reductions must be >= 1");
  if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.eps > 0))
    throw ConfigError("train.beta1/beta2 must be in [0,1) and train.eps > 0");
}

AdamState make_adam(const nn::ParamStore& params) {
  AdamState s;
  for (const auto& p : params.params()) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(nn::ParamStore& params, const nn::Grads& g, AdamState& s, const TrainConfig& c, double lr) {
  ++s.step;
  const double bc1 = 1 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[static_cast<int>(i)].value;
    const auto grad = g[static_cast<int>(i)];
    auto& m = s.m[i];
    auto& v = s.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1 - c.beta1) * grad[k];
      v[k] = c.beta2 * v[k] + (1 - c.beta2) * grad[k] * grad[k];
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
      value[k] -= lr * (update + c.weight_decay * value[k]);
    }
  }
}

double lr_schedule_step(ScheduleState& s, double val_metric, const TrainConfig& c) {
  if (val_metric > s.best) {
    s.best = val_metric;
    s.bad_epochs = 0;
    s.reductions_since_best = 0;
    return s.lr;
  }
  if (++s.bad_epochs >= c.patience) {
    s.lr = std::max(c.min_lr, s.lr * c.plateau_factor);
    s.bad_epochs = 0;
    ++s.reductions_since_best;
  }
  return s.lr;
}

double macro_f1_of(const SmartModel& model, std::span<const SampleInputs> samples) {
  const auto preds = predict_all(model, samples);
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  return compute_metrics(confusion(preds, labels)).macro_f1;
}

TrainResult train(SmartModel& model, std::span<const SampleInputs> train_set, std::span<const SampleInputs> val_set,
                  const TrainConfig& config, const std::string& config_echo, const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.empty()) throw ProtocolError("training split is empty");
  if (val_set.empty()) throw ProtocolError("validation split is empty");
  TrainResult result;
  AdamState adam = make_adam(model.params());
  ScheduleState sched;
  sched.lr = config.lr;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  bool have_best = false;
  nn::Grads g;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = sched.lr;
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const SampleInputs*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const double loss = batch_loss_and_grad(model, batch, g);
      if (!std::isfinite(loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(model.params(), g, adam, config, lr);
      ++batch_index;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = mean_loss(model, val_set);
    rec.val_macro_f1 = macro_f1_of(model, val_set);
    rec.lr = lr;
    if (!std::isfinite(rec.val_loss))
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool better = !have_best || rec.val_macro_f1 > result.best.best_metric ||
                        (rec.val_macro_f1 == result.best.best_metric && rec.val_loss < result.best.best_val_loss);
    if (better) {
      result.best = snapshot(model, adam, config_echo);
      result.best.epoch = epoch;
      result.best.best_metric = rec.val_macro_f1;
      result.best.best_val_loss = rec.val_loss;
      have_best = true;
    }
    lr_schedule_step(sched, rec.val_macro_f1, config);
    if (sched.reductions_since_best >= config.max_reductions) {
      result.early_stopped = true;
      break;
    }
  }
  restore(model, result.best);
  return result;
}

// ---- persistence ------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'M', 'A', 'R', 'T', 'C', 'K', 'P'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::string& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("checkpoint truncated: " + file);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& file) {
  const auto n = get<std::uint64_t>(is, file);
  if (n > (1ull << 30)) throw FormatError("checkpoint string length implausible: " + file);
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated: " + file);
  return s;
}

void put_tensor(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                const std::vector<double>& data) {
  put_string(os, name);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  put<std::uint64_t>(os, data.size());
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
}

nn::Param get_tensor(std::istream& is, const std::string& file) {
  nn::Param p;
  p.name = get_string(is, file);
  const auto rank = get<std::uint32_t>(is, file);
  std::size_t expect = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    p.shape.push_back(static_cast<int>(get<std::uint32_t>(is, file)));
    expect *= static_cast<std::size_t>(p.shape.back());
  }
  const auto n = get<std::uint64_t>(is, file);
  if (n != expect) throw FormatError("checkpoint tensor '" + p.name + "' size disagrees with its shape");
  p.value.resize(n);
  if (!is.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw FormatError("checkpoint truncated: " + file);
  return p;
}

}  // namespace

Checkpoint snapshot(const SmartModel& model, const AdamState& adam, const std::string& config_echo) {
  Checkpoint c;
  c.config_echo = config_echo;
  c.params = model.params().params();
  c.adam = adam;
  return c;
}

void restore(SmartModel& model, const Checkpoint& ckpt) {
  auto& store = model.params();
  for (auto& p : store.params()) {
    const auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                                 [&](const nn::Param& q) { return q.name == p.name; });
    if (it == ckpt.params.end()) throw FormatError("checkpoint lacks tensor '" + p.name + "'");
    if (it->shape != p.shape) throw FormatError("checkpoint tensor '" + p.name + "' has a different shape");
    p.value = it->value;
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + file.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put_string(os, c.config_echo);
  put<std::int32_t>(os, c.epoch);
  put<double>(os, c.best_metric);
  put<double>(os, c.best_val_loss);
  put<std::int64_t>(os, c.adam.step);
  const bool has_moments = c.adam.m.size() == c.params.size();
  put<std::uint64_t>(os, c.params.size() * (has_moments ? 3 : 1));
  for (const auto& p : c.params) put_tensor(os, p.name, p.shape, p.value);
  if (has_moments)
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      put_tensor(os, "adam.m." + c.params[i].name, c.params[i].shape, c.adam.m[i]);
      put_tensor(os, "adam.v." + c.params[i].name, c.params[i].shape, c.adam.v[i]);
    }
  if (!os) throw DataError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  const std::string name = file.string();
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + name);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError("not a checkpoint file: " + name);
  const auto version = get<std::uint32_t>(is, name);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported");
  Checkpoint c;
  c.config_echo = get_string(is, name);
  c.epoch = get<std::int32_t>(is, name);
  c.best_metric = get<double>(is, name);
  c.best_val_loss = get<double>(is, name);
  c.adam.step = get<std::int64_t>(is, name);
  const auto count = get<std::uint64_t>(is, name);
  std::vector<nn::Param> tensors;
  for (std::uint64_t i = 0; i < count; ++i) tensors.push_back(get_tensor(is, name));
  for (auto& t : tensors) {
    if (t.name.starts_with("adam.m."))
      c.adam.m.push_back(std::move(t.value));
    else if (t.name.starts_with("adam.v."))
      c.adam.v.push_back(std::move(t.value));
    else
      c.params.push_back(std::move(t));
  }
  return c;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_macro_f1,lr\n";
  for (const auto& r : history)
    os << r.epoch << ',' << text::format_double(r.train_loss) << ',' << text::format_double(r.val_loss) << ','
       << text::format_double(r.val_macro_f1) << ',' << text::format_double(r.lr) << '\n';
  return os.str();
}

}  // namespace smart
