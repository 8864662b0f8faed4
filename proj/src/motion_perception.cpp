#include "smart/motion_perception.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "smart/error.hpp"

namespace smart {

using nn::Vec;

std::vector<double> normalized_skeleton(const SequenceSample& s) {
  std::vector<double> out(s.skeleton.size());
  for (std::size_t i = 0; i < out.size(); i += 2) {
    out[i] = s.skeleton[i] / static_cast<double>(s.width);
    out[i + 1] = s.skeleton[i + 1] / static_cast<double>(s.height);
  }
  return out;
}

std::vector<double> encoder_input(std::span<const double> skeleton, int T, int keypoints) {
  const int n2 = 2 * keypoints;
  // mean vertical extent of the body, in image-height units
  double scale = 0.0;
  for (int t = 0; t < T; ++t) {
    double lo = 1e300, hi = -1e300;
    for (int k = 0; k < keypoints; ++k) {
      const double v = skeleton[static_cast<std::size_t>(t) * n2 + 2 * k + 1];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    scale += hi - lo;
  }
  scale = std::max(scale / T, 1e-3);
  std::vector<double> out(static_cast<std::size_t>(T) * 2 * n2, 0.0);
  for (int t = 0; t < T; ++t) {
    const double* cur = skeleton.data() + static_cast<std::size_t>(t) * n2;
    double cx = 0.0, cy = 0.0;
    for (int k = 0; k < keypoints; ++k) {
      cx += cur[2 * k];
      cy += cur[2 * k + 1];
    }
    cx /= keypoints;
    cy /= keypoints;
    double* row = out.data() + static_cast<std::size_t>(t) * 2 * n2;
    for (int k = 0; k < keypoints; ++k) {
      row[2 * k] = (cur[2 * k] - cx) / scale;
      row[2 * k + 1] = (cur[2 * k + 1] - cy) / scale;
    }
    for (int i = 0; i < n2; ++i) row[n2 + i] = t > 0 ? (cur[i] - cur[i - n2]) / scale : 0.0;
  }
  return out;
}

SkeletonEncoder SkeletonEncoder::create(nn::ParamStore& store, const std::string& name,
                                        const SkeletonEncoderConfig& config, std::mt19937_64& rng, int keypoints) {
  SkeletonEncoder e;
  e.config = config;
  e.frame = nn::Linear::create(store, name + ".frame", 4 * keypoints, config.hidden, true, rng);
  e.temporal1 = nn::Conv1d::create(store, name + ".temporal1", config.hidden, config.hidden, config.kernel, rng);
  e.temporal2 = nn::Conv1d::create(store, name + ".temporal2", config.hidden, config.hidden, config.kernel, rng);
  e.output = nn::Linear::create(store, name + ".output", config.hidden, config.out_dim, true, rng);
  return e;
}

void SkeletonEncoder::forward(const nn::ParamStore& p, std::span<const double> skeleton, int T, std::span<double> z_k,
                              Cache& c) const {
  const int n2 = 2 * keypoints();
  const std::size_t need = static_cast<std::size_t>(T) * n2;
  if (T < 1 || skeleton.size() < need) throw ShapeMismatchError("encode_skeleton: skeleton shorter than frames x N x 2");
  if (!nn::all_finite(skeleton.first(need))) throw NumericError("encode_skeleton: non-finite keypoint");
  const int H = config.hidden;
  c.frames = T;
  c.input = encoder_input(skeleton.first(need), T, keypoints());
  const std::size_t th = static_cast<std::size_t>(T) * H;
  c.h0.assign(th, 0.0);
  c.h1.assign(th, 0.0);
  c.h2.assign(th, 0.0);
  frame.forward_rows(p, T, c.input, c.h0);
  nn::relu_inplace(c.h0);
  temporal1.forward(p, T, c.h0, c.h1);
  nn::relu_inplace(c.h1);
  temporal2.forward(p, T, c.h1, c.h2);
  nn::relu_inplace(c.h2);
  c.pooled.assign(H, 0.0);
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h) c.pooled[h] += c.h2[static_cast<std::size_t>(t) * H + h];
  for (auto& v : c.pooled) v /= T;
  output.forward(p, c.pooled, z_k);
}

void SkeletonEncoder::backward(const nn::ParamStore& p, const Cache& c, std::span<const double> dz_k,
                               nn::Grads& g) const {
  const int T = c.frames, H = config.hidden;
  Vec dpooled(H);
  output.backward(p, c.pooled, dz_k, g, dpooled);
  const std::size_t th = static_cast<std::size_t>(T) * H;
  Vec d2(th), d1(th), d0(th);
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h) d2[static_cast<std::size_t>(t) * H + h] = dpooled[h] / T;
  nn::relu_backward_inplace(c.h2, d2);
  temporal2.backward(p, T, c.h1, d2, g, d1);
  nn::relu_backward_inplace(c.h1, d1);
  temporal1.backward(p, T, c.h0, d1, g, d0);
  nn::relu_backward_inplace(c.h0, d0);
  frame.backward_rows(p, T, c.input, d0, g, {});
}

// ---- frozen extractors ----------------------------------------------------------

namespace {

// Mean and standard deviation over time of every encoder_input channel.
std::vector<double> joint_stats(std::span<const double> skel, int T) {
  constexpr int width = 4 * kNumKeypoints;
  const auto rows = encoder_input(skel, T);
  std::vector<double> out(2 * width, 0.0);
  for (int i = 0; i < width; ++i) {
    double m = 0, m2 = 0;
    for (int t = 0; t < T; ++t) {
      const double x = rows[static_cast<std::size_t>(t) * width + i];
      m += x;
      m2 += x * x;
    }
    m /= T;
    m2 /= T;
    out[i] = m;
    out[width + i] = std::sqrt(std::max(0.0, m2 - m * m));
  }
  return out;
}

std::map<std::string, FrozenSkeletonEncoder>& registry() {
  static std::map<std::string, FrozenSkeletonEncoder> r = {
      {"joint_stats", {"joint_stats", 8 * kNumKeypoints, joint_stats}},
  };
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_skeleton_encoder(FrozenSkeletonEncoder encoder) {
  std::lock_guard lock(registry_mutex());
  auto name = encoder.name;
  registry()[name] = std::move(encoder);
}

const FrozenSkeletonEncoder& frozen_skeleton_encoder(const std::string& name) {
  std::lock_guard lock(registry_mutex());
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown skeleton_encoder '" + name + "'");
  return it->second;
}

// ---- baseline --------------------------------------------------------------------

BaselineClassifier BaselineClassifier::create(nn::ParamStore& store, const std::string& name, int in_dim,
                                              std::mt19937_64& rng) {
  return {nn::Linear::create(store, name, in_dim, kNumClasses, true, rng)};
}

void BaselineClassifier::classify(const nn::ParamStore& p, std::span<const double> z_k,
                                  std::span<double> logits) const {
  linear.forward(p, z_k, logits);
}

double baseline_loss(std::span<const double> logits, int label) { return nn::cross_entropy(logits, label); }

}  // namespace smart
