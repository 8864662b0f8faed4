#pragma once

// Minimal parameter container and layers with hand-written backward passes.
// Layers hold indices into a ParamStore; forward passes read parameters,
// backward passes accumulate into a Grads buffer of the same layout.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smart/kernels.hpp"

namespace smart::nn {

using Vec = std::vector<double>;

struct Param {
  std::string name;
  std::vector<int> shape;
  Vec value;
};

class ParamStore {
 public:
  /// Registers a tensor initialised U(-bound, bound). Names must be unique.
  int add(std::string name, std::vector<int> shape, double bound, std::mt19937_64& rng);
  int add_constant(std::string name, std::vector<int> shape, double value);

  Param& operator[](int id) { return params_[static_cast<std::size_t>(id)]; }
  const Param& operator[](int id) const { return params_[static_cast<std::size_t>(id)]; }
  std::span<const double> value(int id) const { return params_[static_cast<std::size_t>(id)].value; }

  /// -1 when absent.
  int find(std::string_view name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

 private:
  std::vector<Param> params_;
};

class Grads {
 public:
  Grads() = default;
  explicit Grads(const ParamStore& store);
  std::span<double> operator[](int id) { return g_[static_cast<std::size_t>(id)]; }
  std::span<const double> operator[](int id) const { return g_[static_cast<std::size_t>(id)]; }
  void zero();
  /// this += other, tensor by tensor in index order.
  void add(const Grads& other);
  void scale(double s);
  std::size_t size() const { return g_.size(); }

 private:
  std::vector<Vec> g_;
};

/// Uniform fan-in bound 1/sqrt(fan_in).
double fan_in_bound(int fan_in);

struct Linear {
  int w = -1, b = -1;
  int in = 0, out = 0;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, bool bias,
                       std::mt19937_64& rng);
  void forward(const ParamStore& p, std::span<const double> x, std::span<double> y) const;
  /// dx may be empty.
  void backward(const ParamStore& p, std::span<const double> x, std::span<const double> dy, Grads& g,
                std::span<double> dx) const;
  // Row-wise over a rows x in matrix.
  void forward_rows(const ParamStore& p, int rows, std::span<const double> x, std::span<double> y) const;
  void backward_rows(const ParamStore& p, int rows, std::span<const double> x, std::span<const double> dy,
                     Grads& g, std::span<double> dx) const;
};

struct Conv2d {
  int w = -1, b = -1;
  kernels::Conv2dShape shape{};

  static Conv2d create(ParamStore& store, const std::string& name, int in_c, int in_h, int in_w, int out_c,
                       int kernel, int stride, int pad, std::mt19937_64& rng);
  std::size_t out_size() const {
    return static_cast<std::size_t>(shape.out_c) * shape.out_h() * shape.out_w();
  }
  void forward(const ParamStore& p, std::span<const double> x, std::span<double> y) const;
  void backward(const ParamStore& p, std::span<const double> x, std::span<const double> dy, Grads& g,
                std::span<double> dx) const;
};

struct Conv1d {
  int w = -1, b = -1;
  int in_c = 0, out_c = 0, kernel = 3;

  static Conv1d create(ParamStore& store, const std::string& name, int in_c, int out_c, int kernel,
                       std::mt19937_64& rng);
  void forward(const ParamStore& p, int frames, std::span<const double> x, std::span<double> y) const;
  void backward(const ParamStore& p, int frames, std::span<const double> x, std::span<const double> dy, Grads& g,
                std::span<double> dx) const;
};

// ---- elementwise helpers ----------------------------------------------------

void relu_inplace(std::span<double> x);
/// dy *= (y > 0), using the post-activation values.
void relu_backward_inplace(std::span<const double> y, std::span<double> dy);
double sigmoid(double x);
/// Numerically stable softmax of a row.
void softmax(std::span<const double> logits, std::span<double> out);

/// -log softmax(logits)[label]; writes d loss / d logits into dlogits when non-empty.
double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits = {});
/// Binary cross-entropy of a probability against a {0,1} target.
double binary_cross_entropy(double prob, int target);
/// BCE expressed through the pre-sigmoid logit; returns the loss and writes d/dlogit.
double binary_cross_entropy_logit(double logit, int target, double* dlogit);

bool all_finite(std::span<const double> x);

}  // namespace smart::nn
