#include "smart/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smart/error.hpp"

namespace smart::nn {

namespace {

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

}  // namespace

int ParamStore::add(std::string name, std::vector<int> shape, double bound, std::mt19937_64& rng) {
  if (find(name) >= 0) throw std::logic_error("duplicate parameter " + name);
  Param p{std::move(name), std::move(shape), {}};
  p.value.resize(product(p.shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.value) v = dist(rng);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size() - 1);
}

int ParamStore::add_constant(std::string name, std::vector<int> shape, double value) {
  if (find(name) >= 0) throw std::logic_error("duplicate parameter " + name);
  Param p{std::move(name), std::move(shape), {}};
  p.value.assign(product(p.shape), value);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size() - 1);
}

int ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Grads::Grads(const ParamStore& store) {
  g_.reserve(store.size());
  for (const auto& p : store.params()) g_.emplace_back(p.value.size(), 0.0);
}

void Grads::zero() {
  for (auto& v : g_) std::fill(v.begin(), v.end(), 0.0);
}

void Grads::add(const Grads& other) {
  for (std::size_t t = 0; t < g_.size(); ++t) {
    auto& dst = g_[t];
    const auto& src = other.g_[t];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Grads::scale(double s) {
  for (auto& v : g_)
    for (auto& x : v) x *= s;
}

double fan_in_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in))); }

// ---- Linear -----------------------------------------------------------------

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, bool bias,
                      std::mt19937_64& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  const double bound = fan_in_bound(in);
  l.w = store.add(name + ".weight", {out, in}, bound, rng);
  if (bias) l.b = store.add(name + ".bias", {out}, bound, rng);
  return l;
}

void Linear::forward(const ParamStore& p, std::span<const double> x, std::span<double> y) const {
  kernels::serial::linear_forward(p.value(w), b >= 0 ? p.value(b) : std::span<const double>{}, x.first(in),
                                  y.first(out));
}

void Linear::backward(const ParamStore& p, std::span<const double> x, std::span<const double> dy, Grads& g,
                      std::span<double> dx) const {
  kernels::serial::linear_backward(p.value(w), x.first(in), dy.first(out), g[w],
                                   b >= 0 ? g[b] : std::span<double>{}, dx.empty() ? dx : dx.first(in));
}

void Linear::forward_rows(const ParamStore& p, int rows, std::span<const double> x, std::span<double> y) const {
  for (int r = 0; r < rows; ++r)
    forward(p, x.subspan(static_cast<std::size_t>(r) * in, in), y.subspan(static_cast<std::size_t>(r) * out, out));
}

void Linear::backward_rows(const ParamStore& p, int rows, std::span<const double> x, std::span<const double> dy,
                           Grads& g, std::span<double> dx) const {
  for (int r = 0; r < rows; ++r)
    backward(p, x.subspan(static_cast<std::size_t>(r) * in, in), dy.subspan(static_cast<std::size_t>(r) * out, out),
             g, dx.empty() ? dx : dx.subspan(static_cast<std::size_t>(r) * in, in));
}

// ---- Conv2d -----------------------------------------------------------------

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in_c, int in_h, int in_w, int out_c,
                      int kernel, int stride, int pad, std::mt19937_64& rng) {
  Conv2d c;
  c.shape = {in_c, in_h, in_w, out_c, kernel, stride, pad};
  const double bound = fan_in_bound(in_c * kernel * kernel);
  c.w = store.add(name + ".weight", {out_c, in_c, kernel, kernel}, bound, rng);
  c.b = store.add(name + ".bias", {out_c}, bound, rng);
  return c;
}

void Conv2d::forward(const ParamStore& p, std::span<const double> x, std::span<double> y) const {
  kernels::serial::conv2d_forward(shape, p.value(w), p.value(b), x, y);
}

void Conv2d::backward(const ParamStore& p, std::span<const double> x, std::span<const double> dy, Grads& g,
                      std::span<double> dx) const {
  kernels::serial::conv2d_backward(shape, p.value(w), x, dy, g[w], g[b], dx);
}

// ---- Conv1d -----------------------------------------------------------------

Conv1d Conv1d::create(ParamStore& store, const std::string& name, int in_c, int out_c, int kernel,
                      std::mt19937_64& rng) {
  Conv1d c;
  c.in_c = in_c;
  c.out_c = out_c;
  c.kernel = kernel;
  const double bound = fan_in_bound(in_c * kernel);
  c.w = store.add(name + ".weight", {out_c, in_c, kernel}, bound, rng);
  c.b = store.add(name + ".bias", {out_c}, bound, rng);
  return c;
}

void Conv1d::forward(const ParamStore& p, int frames, std::span<const double> x, std::span<double> y) const {
  kernels::serial::conv1d_forward(frames, in_c, out_c, kernel, p.value(w), p.value(b), x, y);
}

void Conv1d::backward(const ParamStore& p, int frames, std::span<const double> x, std::span<const double> dy,
                      Grads& g, std::span<double> dx) const {
  kernels::serial::conv1d_backward(frames, in_c, out_c, kernel, p.value(w), x, dy, g[w], g[b], dx);
}

// ---- elementwise --------------------------------------------------------------

void relu_inplace(std::span<double> x) {
  for (auto& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(std::span<const double> y, std::span<double> dy) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y[i] > 0.0)) dy[i] = 0.0;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ConfigError("class label " + std::to_string(label) + " out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_z = m + std::log(sum);
  if (!dlogits.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) dlogits[i] = std::exp(logits[i] - log_z);
    dlogits[label] -= 1.0;
  }
  return log_z - logits[label];
}

double binary_cross_entropy(double prob, int target) {
  if (target != 0 && target != 1) throw ConfigError("scene label must be 0 or 1");
  constexpr double eps = 1e-300;
  return target == 1 ? -std::log(std::max(prob, eps)) : -std::log(std::max(1.0 - prob, eps));
}

double binary_cross_entropy_logit(double logit, int target, double* dlogit) {
  if (target != 0 && target != 1) throw ConfigError("scene label must be 0 or 1");
  const double loss = std::max(logit, 0.0) - target * logit + std::log1p(std::exp(-std::abs(logit)));
  if (dlogit) *dlogit = sigmoid(logit) - target;
  return loss;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace smart::nn
