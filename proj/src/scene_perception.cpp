#include "smart/scene_perception.hpp"

#include <algorithm>
#include <cmath>

#include "smart/error.hpp"

namespace smart {

using nn::Vec;

// ---- semantic depth ---------------------------------------------------------

SemanticDepth decouple(std::span<const float> depth, std::span<const std::uint8_t> mask, int frames, int height,
                       int width) {
  const std::size_t n = static_cast<std::size_t>(frames) * height * width;
  if (depth.size() != n || mask.size() != n)
    throw ShapeMismatchError("decouple: depth/mask sizes do not match " + std::to_string(frames) + "x" +
                             std::to_string(height) + "x" + std::to_string(width));
  SemanticDepth out;
  out.frames = frames;
  out.height = height;
  out.width = width;
  for (auto& c : out.channels) c.assign(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t e = mask[i];
    if (e >= kNumElementIds)
      throw VocabularyError("decouple: mask id " + std::to_string(e) + " outside element vocabulary");
    out.channels[e][i] = depth[i];
  }
  return out;
}

SemanticDepth decouple(const SequenceSample& s) { return decouple(s.depth, s.mask, s.frames, s.height, s.width); }

// ---- trajectory --------------------------------------------------------------

Center statistical_center(std::span<const float> depth_frame, std::span<const std::uint8_t> mask_frame, int height,
                          int width) {
  double su = 0, sv = 0, sd = 0;
  std::size_t count = 0;
  const auto human = static_cast<std::uint8_t>(Element::human);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (mask_frame[i] != human) continue;
      su += x;
      sv += y;
      sd += depth_frame[i];
      ++count;
    }
  if (count == 0) throw EmptyRegionError("statistical_center: frame has no human pixels");
  const double n = static_cast<double>(count);
  return {su / n, sv / n, sd / n};
}

Trajectory Trajectory::normalized(int w, int h, double depth_max) const {
  Trajectory out = *this;
  for (int t = 0; t < frames; ++t) {
    out.rows[static_cast<std::size_t>(t) * 3] /= w;
    out.rows[static_cast<std::size_t>(t) * 3 + 1] /= h;
    out.rows[static_cast<std::size_t>(t) * 3 + 2] /= depth_max;
  }
  return out;
}

Trajectory extract_trajectory(const SequenceSample& s) {
  Trajectory j;
  j.frames = s.frames;
  j.rows.resize(static_cast<std::size_t>(s.frames) * 3);
  const std::size_t px = s.frame_pixels();
  for (int t = 0; t < s.frames; ++t) {
    Center c;
    try {
      c = statistical_center(std::span(s.depth).subspan(t * px, px), std::span(s.mask).subspan(t * px, px), s.height,
                             s.width);
    } catch (const EmptyRegionError&) {
      throw EmptyRegionError("sequence " + std::to_string(s.sequence_id) + ": empty human mask at frame " +
                                 std::to_string(t),
                             t);
    }
    j.rows[static_cast<std::size_t>(t) * 3] = c.u;
    j.rows[static_cast<std::size_t>(t) * 3 + 1] = c.v;
    j.rows[static_cast<std::size_t>(t) * 3 + 2] = c.d;
  }
  return j;
}

// ---- attention ------------------------------------------------------------------

AttentionCoreResult attention_core(int T, int D, std::span<const double> q, std::span<const double> k,
                                   std::span<const double> v, std::span<const double> rel, int clip) {
  AttentionCoreResult r;
  r.logits.assign(static_cast<std::size_t>(T) * T, 0.0);
  r.attn.assign(r.logits.size(), 0.0);
  r.out.assign(static_cast<std::size_t>(T) * D, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  for (int i = 0; i < T; ++i) {
    const double* qi = q.data() + static_cast<std::size_t>(i) * D;
    for (int j = 0; j < T; ++j) {
      const double* kj = k.data() + static_cast<std::size_t>(j) * D;
      const double* rij = rel.data() + static_cast<std::size_t>(std::clamp(j - i, -clip, clip) + clip) * D;
      double s = 0.0;
      for (int d = 0; d < D; ++d) s += qi[d] * (kj[d] + rij[d]);
      r.logits[static_cast<std::size_t>(i) * T + j] = s * scale;
    }
    nn::softmax(std::span(r.logits).subspan(static_cast<std::size_t>(i) * T, T),
                std::span(r.attn).subspan(static_cast<std::size_t>(i) * T, T));
    double* oi = r.out.data() + static_cast<std::size_t>(i) * D;
    for (int j = 0; j < T; ++j) {
      const double a = r.attn[static_cast<std::size_t>(i) * T + j];
      const double* vj = v.data() + static_cast<std::size_t>(j) * D;
      for (int d = 0; d < D; ++d) oi[d] += a * vj[d];
    }
  }
  return r;
}

TrajectoryAttention TrajectoryAttention::create(nn::ParamStore& store, const std::string& name,
                                                const AttentionConfig& config, std::mt19937_64& rng) {
  TrajectoryAttention a;
  a.config = config;
  const int D = config.hidden;
  a.input = nn::Linear::create(store, name + ".input", 3, D, true, rng);
  a.query = nn::Linear::create(store, name + ".query", D, D, false, rng);
  a.key = nn::Linear::create(store, name + ".key", D, D, false, rng);
  a.value = nn::Linear::create(store, name + ".value", D, D, false, rng);
  a.rel = store.add(name + ".relative", {2 * config.clip + 1, D}, nn::fan_in_bound(D), rng);
  a.output = nn::Linear::create(store, name + ".output", D, config.out_dim, true, rng);
  return a;
}

void TrajectoryAttention::forward(const nn::ParamStore& p, std::span<const double> traj, int T, std::span<double> z_j,
                                  Cache& c) const {
  if (T < 1) throw NumericError("trajectory_attention: empty trajectory");
  if (!nn::all_finite(traj.first(static_cast<std::size_t>(T) * 3)))
    throw NumericError("trajectory_attention: non-finite trajectory");
  const int D = config.hidden;
  const std::size_t td = static_cast<std::size_t>(T) * D;
  c.frames = T;
  c.h.assign(td, 0.0);
  c.q.assign(td, 0.0);
  c.k.assign(td, 0.0);
  c.v.assign(td, 0.0);
  input.forward_rows(p, T, traj, c.h);
  query.forward_rows(p, T, c.h, c.q);
  key.forward_rows(p, T, c.h, c.k);
  value.forward_rows(p, T, c.h, c.v);
  c.core = attention_core(T, D, c.q, c.k, c.v, p.value(rel), config.clip);
  c.pooled.assign(D, 0.0);
  for (int i = 0; i < T; ++i)
    for (int d = 0; d < D; ++d) c.pooled[d] += c.core.out[static_cast<std::size_t>(i) * D + d];
  for (auto& x : c.pooled) x /= T;
  output.forward(p, c.pooled, z_j);
}

void TrajectoryAttention::backward(const nn::ParamStore& p, std::span<const double> traj, const Cache& c,
                                   std::span<const double> dz_j, nn::Grads& g) const {
  const int T = c.frames, D = config.hidden, K = config.clip;
  const std::size_t td = static_cast<std::size_t>(T) * D;
  Vec dpooled(D);
  output.backward(p, c.pooled, dz_j, g, dpooled);

  Vec dq(td, 0.0), dk(td, 0.0), dv(td, 0.0);
  auto drel = g[rel];
  const auto relv = p.value(rel);
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  Vec dattn(T);
  for (int i = 0; i < T; ++i) {
    // every output row receives dpooled / T
    const double* attn_i = c.core.attn.data() + static_cast<std::size_t>(i) * T;
    double dot = 0.0;
    for (int j = 0; j < T; ++j) {
      const double* vj = c.v.data() + static_cast<std::size_t>(j) * D;
      double s = 0.0;
      for (int d = 0; d < D; ++d) {
        s += dpooled[d] * vj[d];
        dv[static_cast<std::size_t>(j) * D + d] += attn_i[j] * dpooled[d] / T;
      }
      dattn[j] = s / T;
      dot += attn_i[j] * dattn[j];
    }
    const double* qi = c.q.data() + static_cast<std::size_t>(i) * D;
    double* dqi = dq.data() + static_cast<std::size_t>(i) * D;
    for (int j = 0; j < T; ++j) {
      const double dlogit = attn_i[j] * (dattn[j] - dot) * scale;
      const std::size_t r = static_cast<std::size_t>(std::clamp(j - i, -K, K) + K) * D;
      const double* kj = c.k.data() + static_cast<std::size_t>(j) * D;
      double* dkj = dk.data() + static_cast<std::size_t>(j) * D;
      for (int d = 0; d < D; ++d) {
        dqi[d] += dlogit * (kj[d] + relv[r + d]);
        dkj[d] += dlogit * qi[d];
        drel[r + d] += dlogit * qi[d];
      }
    }
  }
  Vec dh(td, 0.0), tmp(td, 0.0);
  query.backward_rows(p, T, c.h, dq, g, tmp);
  for (std::size_t i = 0; i < td; ++i) dh[i] += tmp[i];
  key.backward_rows(p, T, c.h, dk, g, tmp);
  for (std::size_t i = 0; i < td; ++i) dh[i] += tmp[i];
  value.backward_rows(p, T, c.h, dv, g, tmp);
  for (std::size_t i = 0; i < td; ++i) dh[i] += tmp[i];
  input.backward_rows(p, T, traj, dh, g, {});
}

// ---- scene inputs ----------------------------------------------------------------

SceneInputs prepare_scene_inputs(const SequenceSample& s, const Trajectory& traj, int roi) {
  SceneInputs in;
  in.roi = roi;
  const std::size_t n = static_cast<std::size_t>(roi) * roi;
  in.human_depth.assign(n, 0.0);
  in.human_mask.assign(n, 0.0);
  in.raw_depth.assign(n, 0.0);
  for (std::size_t e = 0; e < 4; ++e) {
    in.element_depth[e].assign(n, 0.0);
    in.element_mask[e].assign(n, 0.0);
  }
  // element id -> slot in kSceneElements
  std::array<int, kNumElementIds> slot{};
  slot.fill(-1);
  for (std::size_t e = 0; e < kSceneElements.size(); ++e) slot[static_cast<std::size_t>(kSceneElements[e])] = static_cast<int>(e);

  const std::size_t px = s.frame_pixels();
  for (int t = 0; t < s.frames; ++t) {
    const float* depth = s.depth.data() + t * px;
    const std::uint8_t* mask = s.mask.data() + t * px;
    // crop side: kCropBodyHeights times the human's row extent in this frame
    int top = s.height, bottom = -1;
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        if (mask[static_cast<std::size_t>(y) * s.width + x] == static_cast<std::uint8_t>(Element::human)) {
          top = std::min(top, y);
          bottom = std::max(bottom, y);
        }
    if (bottom < 0) throw EmptyRegionError("frame " + std::to_string(t) + " has no human pixel", t);
    const double step = kCropBodyHeights * (bottom - top + 1) / roi;
    const double inv_d = 1.0 / traj.d(t);
    for (int i = 0; i < roi; ++i) {
      const int y = static_cast<int>(std::floor(traj.v(t) + (i + 0.5 - 0.5 * roi) * step));
      if (y < 0 || y >= s.height) continue;
      for (int j = 0; j < roi; ++j) {
        const int x = static_cast<int>(std::floor(traj.u(t) + (j + 0.5 - 0.5 * roi) * step));
        if (x < 0 || x >= s.width) continue;
        const std::size_t src = static_cast<std::size_t>(y) * s.width + x;
        const std::size_t dst = static_cast<std::size_t>(i) * roi + j;
        const double rel = depth[src] * inv_d;
        const std::uint8_t e = mask[src];
        if (e >= kNumElementIds) throw VocabularyError("mask id outside element vocabulary");
        in.raw_depth[dst] += rel;
        if (e == static_cast<std::uint8_t>(Element::human)) {
          in.human_depth[dst] += rel;
          in.human_mask[dst] += 1.0;
        } else if (slot[e] >= 0) {
          in.element_depth[slot[e]][dst] += rel;
          in.element_mask[slot[e]][dst] += 1.0;
        }
      }
    }
  }
  // temporal mean, then the average with the left-right mirror image
  const double inv_t = 1.0 / s.frames;
  auto scale = [&](std::vector<double>& v) {
    for (int i = 0; i < roi; ++i) {
      double* row = v.data() + static_cast<std::size_t>(i) * roi;
      for (int j = 0; j < roi / 2; ++j) {
        const double m = 0.5 * inv_t * (row[j] + row[roi - 1 - j]);
        row[j] = m;
        row[roi - 1 - j] = m;
      }
      if (roi % 2 == 1) row[roi / 2] *= inv_t;
    }
  };
  scale(in.human_depth);
  scale(in.human_mask);
  scale(in.raw_depth);
  for (std::size_t e = 0; e < 4; ++e) {
    scale(in.element_depth[e]);
    scale(in.element_mask[e]);
  }
  return in;
}

// ---- encoders --------------------------------------------------------------------

SceneEncoder SceneEncoder::create(nn::ParamStore& store, const std::string& name, const SiameseConfig& c,
                                  std::mt19937_64& rng) {
  SceneEncoder e;
  e.conv1 = nn::Conv2d::create(store, name + ".conv1", 1, c.roi, c.roi, c.channels1, 3, 2, 1, rng);
  const auto& s1 = e.conv1.shape;
  e.conv2 = nn::Conv2d::create(store, name + ".conv2", c.channels1, s1.out_h(), s1.out_w(), c.channels2, 3, 2, 1, rng);
  return e;
}

void SceneEncoder::forward(const nn::ParamStore& p, std::span<const double> image, Cache& c) const {
  c.a1.assign(conv1.out_size(), 0.0);
  c.a2.assign(conv2.out_size(), 0.0);
  conv1.forward(p, image, c.a1);
  nn::relu_inplace(c.a1);
  conv2.forward(p, c.a1, c.a2);
  nn::relu_inplace(c.a2);
}

void SceneEncoder::backward(const nn::ParamStore& p, std::span<const double> image, const Cache& c,
                            std::span<const double> dfeature, nn::Grads& g) const {
  Vec d2(dfeature.begin(), dfeature.end());
  nn::relu_backward_inplace(c.a2, d2);
  Vec d1(c.a1.size());
  conv2.backward(p, c.a1, d2, g, d1);
  nn::relu_backward_inplace(c.a1, d1);
  conv1.backward(p, image, d1, g, {});
}

SiameseInteraction SiameseInteraction::create(nn::ParamStore& store, const std::string& name,
                                              const SiameseConfig& config, SceneInfo info, std::mt19937_64& rng) {
  SiameseInteraction s;
  s.config = config;
  s.info = info;
  const bool use_depth = info == SceneInfo::depth || info == SceneInfo::both;
  const bool use_mask = info == SceneInfo::mask || info == SceneInfo::both;
  if (use_depth) s.depth_encoder = SceneEncoder::create(store, name + ".depth_encoder", config, rng);
  if (use_mask) s.mask_encoder = SceneEncoder::create(store, name + ".mask_encoder", config, rng);
  if (info == SceneInfo::both) {
    const int f = static_cast<int>(s.depth_encoder.feature_size());
    s.depth_diff = nn::Linear::create(store, name + ".depth_diff", f, config.embed, false, rng);
  }
  if (use_mask) {
    const int f = static_cast<int>(s.mask_encoder.feature_size());
    s.mask_diff = nn::Linear::create(store, name + ".mask_diff", f, config.embed, false, rng);
  }
  if (info == SceneInfo::depth) {
    const int f = static_cast<int>(s.depth_encoder.feature_size());
    s.raw_depth_proj = nn::Linear::create(store, name + ".raw_depth_proj", f, 4 * config.embed, false, rng);
  }
  return s;
}

int SiameseInteraction::output_dim() const {
  switch (info) {
    case SceneInfo::none: return 0;
    case SceneInfo::depth:
    case SceneInfo::mask: return 4 * config.embed;
    case SceneInfo::both: return 8 * config.embed;
  }
  return 0;
}

namespace {

void abs_diff(std::span<const double> a, std::span<const double> b, Vec& absdiff, Vec& sign) {
  absdiff.resize(a.size());
  sign.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    absdiff[i] = std::abs(d);
    sign[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  }
}

}  // namespace

void SiameseInteraction::forward(const nn::ParamStore& p, const SceneInputs& in, std::span<double> z_s,
                                 Cache& c) const {
  const int e = config.embed;
  if (in.roi != config.roi) throw ShapeMismatchError("siamese_interaction: roi size does not match encoder");
  switch (info) {
    case SceneInfo::none:
      return;
    case SceneInfo::depth:
      depth_encoder.forward(p, in.raw_depth, c.raw);
      raw_depth_proj.forward(p, c.raw.a2, z_s.first(4 * e));
      return;
    case SceneInfo::mask:
      mask_encoder.forward(p, in.human_mask, c.human_mask);
      for (std::size_t s = 0; s < 4; ++s) {
        mask_encoder.forward(p, in.element_mask[s], c.element_mask[s]);
        abs_diff(c.human_mask.a2, c.element_mask[s].a2, c.mask_absdiff[s], c.mask_sign[s]);
        mask_diff.forward(p, c.mask_absdiff[s], z_s.subspan(s * e, e));
      }
      return;
    case SceneInfo::both:
      depth_encoder.forward(p, in.human_depth, c.human_depth);
      mask_encoder.forward(p, in.human_mask, c.human_mask);
      for (std::size_t s = 0; s < 4; ++s) {
        depth_encoder.forward(p, in.element_depth[s], c.element_depth[s]);
        mask_encoder.forward(p, in.element_mask[s], c.element_mask[s]);
        abs_diff(c.human_depth.a2, c.element_depth[s].a2, c.depth_absdiff[s], c.depth_sign[s]);
        abs_diff(c.human_mask.a2, c.element_mask[s].a2, c.mask_absdiff[s], c.mask_sign[s]);
        depth_diff.forward(p, c.depth_absdiff[s], z_s.subspan(2 * s * e, e));
        mask_diff.forward(p, c.mask_absdiff[s], z_s.subspan((2 * s + 1) * e, e));
      }
      return;
  }
}

void SiameseInteraction::backward(const nn::ParamStore& p, const SceneInputs& in, const Cache& c,
                                  std::span<const double> dz_s, nn::Grads& g) const {
  const int e = config.embed;
  // Backprop one block: returns d|E(h)-E(s)| mapped onto dE(h) (+) and dE(s) (-).
  auto block = [&](const nn::Linear& proj, const Vec& absdiff, const Vec& sign, std::span<const double> dz,
                   Vec& dh, Vec& ds) {
    Vec da(absdiff.size());
    proj.backward(p, absdiff, dz, g, da);
    ds.assign(absdiff.size(), 0.0);
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double v = sign[i] * da[i];
      dh[i] += v;
      ds[i] = -v;
    }
  };
  switch (info) {
    case SceneInfo::none:
      return;
    case SceneInfo::depth: {
      Vec df(c.raw.a2.size());
      raw_depth_proj.backward(p, c.raw.a2, dz_s.first(4 * e), g, df);
      depth_encoder.backward(p, in.raw_depth, c.raw, df, g);
      return;
    }
    case SceneInfo::mask: {
      Vec dh(c.human_mask.a2.size(), 0.0), ds;
      for (std::size_t s = 0; s < 4; ++s) {
        block(mask_diff, c.mask_absdiff[s], c.mask_sign[s], dz_s.subspan(s * e, e), dh, ds);
        mask_encoder.backward(p, in.element_mask[s], c.element_mask[s], ds, g);
      }
      mask_encoder.backward(p, in.human_mask, c.human_mask, dh, g);
      return;
    }
    case SceneInfo::both: {
      Vec dhd(c.human_depth.a2.size(), 0.0), dhm(c.human_mask.a2.size(), 0.0), ds;
      for (std::size_t s = 0; s < 4; ++s) {
        block(depth_diff, c.depth_absdiff[s], c.depth_sign[s], dz_s.subspan(2 * s * e, e), dhd, ds);
        depth_encoder.backward(p, in.element_depth[s], c.element_depth[s], ds, g);
        block(mask_diff, c.mask_absdiff[s], c.mask_sign[s], dz_s.subspan((2 * s + 1) * e, e), dhm, ds);
        mask_encoder.backward(p, in.element_mask[s], c.element_mask[s], ds, g);
      }
      depth_encoder.backward(p, in.human_depth, c.human_depth, dhd, g);
      mask_encoder.backward(p, in.human_mask, c.human_mask, dhm, g);
      return;
    }
  }
}

std::vector<double> difference_block(const nn::ParamStore& p, const SceneEncoder& encoder, const nn::Linear& proj,
                                     std::span<const double> a, std::span<const double> b) {
  SceneEncoder::Cache ca, cb;
  encoder.forward(p, a, ca);
  encoder.forward(p, b, cb);
  Vec absdiff, sign;
  abs_diff(ca.a2, cb.a2, absdiff, sign);
  Vec out(proj.out);
  proj.forward(p, absdiff, out);
  return out;
}

}  // namespace smart
