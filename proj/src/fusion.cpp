#include "smart/fusion.hpp"

#include <cmath>

#include "smart/error.hpp"

namespace smart {

using nn::Vec;

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- channel fuse ------------------------------------------------------------

ChannelFuse ChannelFuse::create(nn::ParamStore& store, const std::string& name, int x_dim, int y_dim, int dim,
                                std::mt19937_64& rng) {
  ChannelFuse f;
  f.proj_x = nn::Linear::create(store, name + ".proj_x", x_dim, dim, true, rng);
  f.proj_y = nn::Linear::create(store, name + ".proj_y", y_dim, dim, true, rng);
  f.gate_hidden = nn::Linear::create(store, name + ".gate_hidden", 2, 4, true, rng);
  f.gate_out = nn::Linear::create(store, name + ".gate_out", 4, 2, true, rng);
  return f;
}

void ChannelFuse::forward(const nn::ParamStore& p, std::span<const double> x, std::span<const double> y,
                          std::span<double> out, Cache& c, const std::optional<GateOverride>& override_gate) const {
  if (proj_x.out != proj_y.out) throw ConfigError("channel_fuse: projected dimensions differ");
  const int d = proj_x.out;
  c.xp.assign(d, 0.0);
  c.yp.assign(d, 0.0);
  proj_x.forward(p, x, c.xp);
  proj_y.forward(p, y, c.yp);
  c.overridden = override_gate.has_value();
  if (c.overridden) {
    c.gate[0] = override_gate->wx;
    c.gate[1] = override_gate->wy;
  } else {
    c.desc[0] = mean(c.xp);
    c.desc[1] = mean(c.yp);
    c.hidden.assign(4, 0.0);
    gate_hidden.forward(p, c.desc, c.hidden);
    nn::relu_inplace(c.hidden);
    double logits[2];
    gate_out.forward(p, c.hidden, logits);
    c.gate[0] = nn::sigmoid(logits[0]);
    c.gate[1] = nn::sigmoid(logits[1]);
  }
  for (int i = 0; i < d; ++i) out[i] = c.gate[0] * c.xp[i] + c.gate[1] * c.yp[i];
}

void ChannelFuse::backward(const nn::ParamStore& p, std::span<const double> x, std::span<const double> y,
                           const Cache& c, std::span<const double> dout, nn::Grads& g, std::span<double> dx,
                           std::span<double> dy) const {
  const int d = proj_x.out;
  Vec dxp(d), dyp(d);
  double dgate[2] = {0, 0};
  for (int i = 0; i < d; ++i) {
    dxp[i] = c.gate[0] * dout[i];
    dyp[i] = c.gate[1] * dout[i];
    dgate[0] += dout[i] * c.xp[i];
    dgate[1] += dout[i] * c.yp[i];
  }
  if (!c.overridden) {
    const double dlogit[2] = {dgate[0] * c.gate[0] * (1 - c.gate[0]), dgate[1] * c.gate[1] * (1 - c.gate[1])};
    Vec dh(4);
    gate_out.backward(p, c.hidden, dlogit, g, dh);
    nn::relu_backward_inplace(c.hidden, dh);
    double ddesc[2];
    gate_hidden.backward(p, c.desc, dh, g, ddesc);
    for (int i = 0; i < d; ++i) {
      dxp[i] += ddesc[0] / d;
      dyp[i] += ddesc[1] / d;
    }
  }
  proj_x.backward(p, x, dxp, g, dx);
  proj_y.backward(p, y, dyp, g, dy);
}

// ---- scene weight ------------------------------------------------------------

SceneWeightNet SceneWeightNet::create(nn::ParamStore& store, const std::string& name, int dim, int hidden_dim,
                                      std::mt19937_64& rng) {
  SceneWeightNet w;
  w.hidden = nn::Linear::create(store, name + ".hidden", dim, hidden_dim, true, rng);
  w.out = nn::Linear::create(store, name + ".out", hidden_dim, 1, true, rng);
  return w;
}

double SceneWeightNet::logit(const nn::ParamStore& p, std::span<const double> z_m, Cache& c) const {
  c.h.assign(hidden.out, 0.0);
  hidden.forward(p, z_m, c.h);
  nn::relu_inplace(c.h);
  double g = 0.0;
  out.forward(p, c.h, std::span(&g, 1));
  return g;
}

void SceneWeightNet::backward(const nn::ParamStore& p, std::span<const double> z_m, const Cache& c, double dlogit,
                              nn::Grads& g, std::span<double> dz_m) const {
  Vec dh(hidden.out);
  out.backward(p, c.h, std::span(&dlogit, 1), g, dh);
  nn::relu_backward_inplace(c.h, dh);
  hidden.backward(p, z_m, dh, g, dz_m);
}

double scene_weight(double logit) { return nn::sigmoid(logit); }

std::vector<double> weight_interaction(double a, std::span<const double> z_s) {
  std::vector<double> out(z_s.size());
  for (std::size_t i = 0; i < z_s.size(); ++i) out[i] = a * z_s[i];
  return out;
}

double smart_loss(std::span<const double> logits, int label, double a, int scene_label) {
  return nn::cross_entropy(logits, label) + nn::binary_cross_entropy(a, scene_label);
}

// ---- self-attention head ---------------------------------------------------------

SelfAttentionFuse SelfAttentionFuse::create(nn::ParamStore& store, const std::string& name, int dk, int dj, int ds,
                                            int dim, std::mt19937_64& rng) {
  SelfAttentionFuse s;
  s.proj_k = nn::Linear::create(store, name + ".proj_k", dk, dim, true, rng);
  s.proj_j = nn::Linear::create(store, name + ".proj_j", dj, dim, true, rng);
  s.proj_s = nn::Linear::create(store, name + ".proj_s", ds, dim, true, rng);
  s.query = nn::Linear::create(store, name + ".query", dim, dim, false, rng);
  s.key = nn::Linear::create(store, name + ".key", dim, dim, false, rng);
  s.value = nn::Linear::create(store, name + ".value", dim, dim, false, rng);
  return s;
}

void SelfAttentionFuse::forward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                                std::span<const double> zs, std::span<double> zf, Cache& c) const {
  const int d = proj_k.out;
  const std::size_t n = 3 * static_cast<std::size_t>(d);
  c.tokens.assign(n, 0.0);
  proj_k.forward(p, zk, std::span(c.tokens).subspan(0, d));
  proj_j.forward(p, zj, std::span(c.tokens).subspan(d, d));
  proj_s.forward(p, zs, std::span(c.tokens).subspan(2 * d, d));
  c.q.assign(n, 0.0);
  c.k.assign(n, 0.0);
  c.v.assign(n, 0.0);
  query.forward_rows(p, 3, c.tokens, c.q);
  key.forward_rows(p, 3, c.tokens, c.k);
  value.forward_rows(p, 3, c.tokens, c.v);
  c.attn.assign(9, 0.0);
  c.out.assign(n, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < 3; ++i) {
    double logits[3];
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int e = 0; e < d; ++e) s += c.q[i * d + e] * c.k[j * d + e];
      logits[j] = s * scale;
    }
    nn::softmax(logits, std::span(c.attn).subspan(i * 3, 3));
    for (int j = 0; j < 3; ++j)
      for (int e = 0; e < d; ++e) c.out[i * d + e] += c.attn[i * 3 + j] * c.v[j * d + e];
  }
  for (int e = 0; e < d; ++e) zf[e] = (c.out[e] + c.out[d + e] + c.out[2 * d + e]) / 3.0;
}

void SelfAttentionFuse::backward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                                 std::span<const double> zs, const Cache& c, std::span<const double> dzf,
                                 nn::Grads& g, std::span<double> dzk, std::span<double> dzj,
                                 std::span<double> dzs) const {
  const int d = proj_k.out;
  const std::size_t n = 3 * static_cast<std::size_t>(d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Vec dq(n, 0.0), dk(n, 0.0), dv(n, 0.0);
  for (int i = 0; i < 3; ++i) {
    double dattn[3], dot = 0.0;
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int e = 0; e < d; ++e) {
        s += dzf[e] / 3.0 * c.v[j * d + e];
        dv[j * d + e] += c.attn[i * 3 + j] * dzf[e] / 3.0;
      }
      dattn[j] = s;
      dot += c.attn[i * 3 + j] * s;
    }
    for (int j = 0; j < 3; ++j) {
      const double dl = c.attn[i * 3 + j] * (dattn[j] - dot) * scale;
      for (int e = 0; e < d; ++e) {
        dq[i * d + e] += dl * c.k[j * d + e];
        dk[j * d + e] += dl * c.q[i * d + e];
      }
    }
  }
  Vec dtok(n, 0.0), tmp(n, 0.0);
  query.backward_rows(p, 3, c.tokens, dq, g, tmp);
  add_into(dtok, tmp);
  key.backward_rows(p, 3, c.tokens, dk, g, tmp);
  add_into(dtok, tmp);
  value.backward_rows(p, 3, c.tokens, dv, g, tmp);
  add_into(dtok, tmp);
  proj_k.backward(p, zk, std::span<const double>(dtok).subspan(0, d), g, dzk);
  proj_j.backward(p, zj, std::span<const double>(dtok).subspan(d, d), g, dzj);
  proj_s.backward(p, zs, std::span<const double>(dtok).subspan(2 * d, d), g, dzs);
}

// ---- channel-attention head -------------------------------------------------------

ChannelAttentionFuse ChannelAttentionFuse::create(nn::ParamStore& store, const std::string& name, int concat_dim,
                                                  int dim, std::mt19937_64& rng) {
  ChannelAttentionFuse c;
  const double bound = nn::fan_in_bound(kKernel);
  c.conv_w = store.add(name + ".gate_conv.weight", {kKernel}, bound, rng);
  c.conv_b = store.add(name + ".gate_conv.bias", {1}, bound, rng);
  c.proj = nn::Linear::create(store, name + ".proj", concat_dim, dim, true, rng);
  return c;
}

void ChannelAttentionFuse::forward(const nn::ParamStore& p, std::span<const double> concat, std::span<double> zf,
                                   Cache& c) const {
  const int n = static_cast<int>(concat.size());
  const auto w = p.value(conv_w);
  const double b = p.value(conv_b)[0];
  constexpr int pad = kKernel / 2;
  c.concat.assign(concat.begin(), concat.end());
  c.gate.assign(n, 0.0);
  c.weighted.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = b;
    for (int j = 0; j < kKernel; ++j) {
      const int src = i + j - pad;
      if (src >= 0 && src < n) s += w[j] * concat[src];
    }
    c.gate[i] = nn::sigmoid(s);
    c.weighted[i] = concat[i] * c.gate[i];
  }
  proj.forward(p, c.weighted, zf);
}

void ChannelAttentionFuse::backward(const nn::ParamStore& p, const Cache& c, std::span<const double> dzf,
                                    nn::Grads& g, std::span<double> dconcat) const {
  const int n = static_cast<int>(c.concat.size());
  constexpr int pad = kKernel / 2;
  Vec dweighted(n);
  proj.backward(p, c.weighted, dzf, g, dweighted);
  const auto w = p.value(conv_w);
  auto dw = g[conv_w];
  auto db = g[conv_b];
  for (int i = 0; i < n; ++i) dconcat[i] = dweighted[i] * c.gate[i];
  for (int i = 0; i < n; ++i) {
    const double ds = dweighted[i] * c.concat[i] * c.gate[i] * (1 - c.gate[i]);
    db[0] += ds;
    for (int j = 0; j < kKernel; ++j) {
      const int src = i + j - pad;
      if (src < 0 || src >= n) continue;
      dw[j] += ds * c.concat[src];
      dconcat[src] += ds * w[j];
    }
  }
}

// ---- head dispatch ------------------------------------------------------------------

FusionKind parse_fusion(const std::string& name) {
  if (name == "concat") return FusionKind::concat;
  if (name == "self_attention") return FusionKind::self_attention;
  if (name == "channel_attention") return FusionKind::channel_attention;
  if (name == "smart") return FusionKind::smart;
  throw ConfigError("unknown fusion variant '" + name + "'");
}

std::string fusion_name(FusionKind kind) {
  switch (kind) {
    case FusionKind::concat: return "concat";
    case FusionKind::self_attention: return "self_attention";
    case FusionKind::channel_attention: return "channel_attention";
    case FusionKind::smart: return "smart";
  }
  return "?";
}

FusionHead FusionHead::create(nn::ParamStore& store, const std::string& name, FusionKind kind, int dk, int dj, int ds,
                              int dim, int weight_hidden, std::mt19937_64& rng) {
  FusionHead h;
  h.kind = kind;
  h.dk = dk;
  h.dj = dj;
  h.ds = ds;
  h.dim = dim;
  switch (kind) {
    case FusionKind::smart:
      h.stage1 = ChannelFuse::create(store, name + ".stage1", dk, dj, dim, rng);
      h.weight = SceneWeightNet::create(store, name + ".scene_weight", dim, weight_hidden, rng);
      h.stage2 = ChannelFuse::create(store, name + ".stage2", dim, ds, dim, rng);
      break;
    case FusionKind::self_attention:
      h.self_attention = SelfAttentionFuse::create(store, name + ".self_attention", dk, dj, ds, dim, rng);
      break;
    case FusionKind::channel_attention:
      h.channel_attention = ChannelAttentionFuse::create(store, name + ".channel_attention", dk + dj + ds, dim, rng);
      break;
    case FusionKind::concat:
      break;
  }
  return h;
}

int FusionHead::output_dim() const { return kind == FusionKind::concat ? dk + dj + ds : dim; }

void FusionHead::forward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                         std::span<const double> zs, std::span<double> zf, Cache& c,
                         const FusionOptions& options) const {
  switch (kind) {
    case FusionKind::concat:
      std::copy(zk.begin(), zk.begin() + dk, zf.begin());
      std::copy(zj.begin(), zj.begin() + dj, zf.begin() + dk);
      std::copy(zs.begin(), zs.begin() + ds, zf.begin() + dk + dj);
      return;
    case FusionKind::self_attention:
      self_attention.forward(p, zk, zj, zs, zf, c.sa);
      return;
    case FusionKind::channel_attention: {
      Vec cat(static_cast<std::size_t>(dk + dj + ds));
      std::copy(zk.begin(), zk.begin() + dk, cat.begin());
      std::copy(zj.begin(), zj.begin() + dj, cat.begin() + dk);
      std::copy(zs.begin(), zs.begin() + ds, cat.begin() + dk + dj);
      channel_attention.forward(p, cat, zf, c.ca);
      return;
    }
    case FusionKind::smart: {
      c.z_m.assign(dim, 0.0);
      stage1.forward(p, zk, zj, c.z_m, c.s1, options.stage1_gate);
      c.a_logit = weight.logit(p, c.z_m, c.w);
      c.a = scene_weight(c.a_logit);
      c.dropped = options.drop_interaction;
      if (c.dropped) {
        // only the Z_M channel reaches Z_F
        stage2.proj_x.forward(p, c.z_m, zf);
        return;
      }
      c.z_sw = weight_interaction(c.a, zs.first(ds));
      stage2.forward(p, c.z_m, c.z_sw, zf, c.s2, options.stage2_gate);
      return;
    }
  }
}

void FusionHead::backward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                          std::span<const double> zs, const Cache& c, std::span<const double> dzf, double da_logit,
                          nn::Grads& g, std::span<double> dzk, std::span<double> dzj, std::span<double> dzs) const {
  switch (kind) {
    case FusionKind::concat:
      std::copy(dzf.begin(), dzf.begin() + dk, dzk.begin());
      std::copy(dzf.begin() + dk, dzf.begin() + dk + dj, dzj.begin());
      std::copy(dzf.begin() + dk + dj, dzf.begin() + dk + dj + ds, dzs.begin());
      return;
    case FusionKind::self_attention:
      self_attention.backward(p, zk, zj, zs, c.sa, dzf, g, dzk, dzj, dzs);
      return;
    case FusionKind::channel_attention: {
      Vec dcat(static_cast<std::size_t>(dk + dj + ds));
      channel_attention.backward(p, c.ca, dzf, g, dcat);
      std::copy(dcat.begin(), dcat.begin() + dk, dzk.begin());
      std::copy(dcat.begin() + dk, dcat.begin() + dk + dj, dzj.begin());
      std::copy(dcat.begin() + dk + dj, dcat.end(), dzs.begin());
      return;
    }
    case FusionKind::smart: {
      Vec dzm(dim, 0.0);
      double dlogit = da_logit;
      if (c.dropped) {
        stage2.proj_x.backward(p, c.z_m, dzf, g, dzm);
        std::fill(dzs.begin(), dzs.begin() + ds, 0.0);
      } else {
        Vec dzsw(ds, 0.0);
        stage2.backward(p, c.z_m, c.z_sw, c.s2, dzf, g, dzm, dzsw);
        double da = 0.0;
        for (int i = 0; i < ds; ++i) {
          da += dzsw[i] * zs[i];
          dzs[i] = c.a * dzsw[i];
        }
        dlogit += da * c.a * (1 - c.a);
      }
      Vec dzm_w(dim, 0.0);
      weight.backward(p, c.z_m, c.w, dlogit, g, dzm_w);
      add_into(dzm, dzm_w);
      stage1.backward(p, zk, zj, c.s1, dzm, g, dzk, dzj);
      return;
    }
  }
}

}  // namespace smart
