#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "smart/nn.hpp"

namespace smart::testing {

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// up to rounding from producing huge ratios.
inline double rel_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences (step h) of `loss` against `analytic` for every scalar
/// of every tensor whose name starts with `prefix`. `loss` must read the
/// current values from `store`.
inline GradCheck check_gradients(nn::ParamStore& store, const nn::Grads& analytic, const std::function<double()>& loss,
                                 const std::string& prefix = "", double h = 1e-5) {
  GradCheck r;
  for (std::size_t t = 0; t < store.size(); ++t) {
    auto& p = store[static_cast<int>(t)];
    if (p.name.rfind(prefix, 0) != 0) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double up = loss();
      p.value[k] = saved - h;
      const double down = loss();
      p.value[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double e = rel_error(analytic[static_cast<int>(t)][k], numeric);
      ++r.checked;
      if (e > r.max_rel) {
        r.max_rel = e;
        r.worst = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

/// Central differences with respect to an input vector.
inline GradCheck check_input_gradient(std::vector<double>& x, const std::vector<double>& analytic,
                                      const std::function<double()>& loss, const std::string& name, double h = 1e-5) {
  GradCheck r;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = loss();
    x[k] = saved - h;
    const double down = loss();
    x[k] = saved;
    const double e = rel_error(analytic[k], (up - down) / (2 * h));
    ++r.checked;
    if (e > r.max_rel) {
      r.max_rel = e;
      r.worst = name + "[" + std::to_string(k) + "]";
    }
  }
  return r;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Fixed random weights for a scalar loss sum_i w_i y_i over an output vector.
inline double weighted_sum(const std::vector<double>& w, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
  return s;
}

}  // namespace smart::testing
