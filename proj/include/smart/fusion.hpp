#pragma once

// Multi-stage fusion: channel-attention fusion of skeleton and trajectory
// features, the supervised scene-weight gate on the interaction feature, the
// second fusion stage, and the alternative fusion heads used for ablations.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smart/nn.hpp"

namespace smart {

/// Fixed (w_x, w_y) that replaces the learned gate.
struct GateOverride {
  double wx = 1.0;
  double wy = 0.0;
};

/// out = w_x x' + w_y y' with x' = P_x x, y' = P_y y and (w_x, w_y) a sigmoid
/// gate computed from the channel descriptors (mean(x'), mean(y')).
struct ChannelFuse {
  nn::Linear proj_x, proj_y;
  nn::Linear gate_hidden, gate_out;  // 2 -> 4 -> 2

  struct Cache {
    std::vector<double> xp, yp, hidden;
    double desc[2] = {0, 0};
    double gate[2] = {0, 0};
    bool overridden = false;
  };

  static ChannelFuse create(nn::ParamStore& store, const std::string& name, int x_dim, int y_dim, int dim,
                            std::mt19937_64& rng);
  int dim() const { return proj_x.out; }
  void forward(const nn::ParamStore& p, std::span<const double> x, std::span<const double> y, std::span<double> out,
               Cache& cache, const std::optional<GateOverride>& override_gate = std::nullopt) const;
  /// dx/dy may be empty.
  void backward(const nn::ParamStore& p, std::span<const double> x, std::span<const double> y, const Cache& cache,
                std::span<const double> dout, nn::Grads& g, std::span<double> dx, std::span<double> dy) const;
};

/// Pre-sigmoid scene-association score g(Z_M): two-layer perceptron.
struct SceneWeightNet {
  nn::Linear hidden, out;

  struct Cache {
    std::vector<double> h;
  };
  static SceneWeightNet create(nn::ParamStore& store, const std::string& name, int dim, int hidden_dim,
                               std::mt19937_64& rng);
  double logit(const nn::ParamStore& p, std::span<const double> z_m, Cache& cache) const;
  void backward(const nn::ParamStore& p, std::span<const double> z_m, const Cache& cache, double dlogit,
                nn::Grads& g, std::span<double> dz_m) const;
};

/// A = sigmoid(logit), strictly inside (0, 1) for finite logits.
double scene_weight(double logit);
/// Z_S^w = A * Z_S.
std::vector<double> weight_interaction(double a, std::span<const double> z_s);

/// CE(logits, label) + BCE(a, scene_label).
double smart_loss(std::span<const double> logits, int label, double a, int scene_label);

/// Self-attention over the three projected feature tokens, mean-pooled.
struct SelfAttentionFuse {
  nn::Linear proj_k, proj_j, proj_s;
  nn::Linear query, key, value;

  struct Cache {
    std::vector<double> tokens, q, k, v, attn, out;  // 3 x d (attn 3 x 3)
  };
  static SelfAttentionFuse create(nn::ParamStore& store, const std::string& name, int dk, int dj, int ds, int dim,
                                  std::mt19937_64& rng);
  void forward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
               std::span<const double> zs, std::span<double> zf, Cache& cache) const;
  void backward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                std::span<const double> zs, const Cache& cache, std::span<const double> dzf, nn::Grads& g,
                std::span<double> dzk, std::span<double> dzj, std::span<double> dzs) const;
};

/// ECA-style gate: a local 1-D convolution over the concatenated vector
/// produces a per-channel sigmoid weight; the reweighted vector is projected
/// to the fusion width.
struct ChannelAttentionFuse {
  static constexpr int kKernel = 5;
  int conv_w = -1, conv_b = -1;
  nn::Linear proj;

  struct Cache {
    std::vector<double> concat, gate, weighted;
  };
  static ChannelAttentionFuse create(nn::ParamStore& store, const std::string& name, int concat_dim, int dim,
                                     std::mt19937_64& rng);
  void forward(const nn::ParamStore& p, std::span<const double> concat, std::span<double> zf, Cache& cache) const;
  void backward(const nn::ParamStore& p, const Cache& cache, std::span<const double> dzf, nn::Grads& g,
                std::span<double> dconcat) const;
};

enum class FusionKind { concat, self_attention, channel_attention, smart };

/// Throws ConfigError for names outside {concat, self_attention, channel_attention, smart}.
FusionKind parse_fusion(const std::string& name);
std::string fusion_name(FusionKind kind);

struct FusionOptions {
  std::optional<GateOverride> stage1_gate;
  std::optional<GateOverride> stage2_gate;
  bool drop_interaction = false;  // smart only: Z_F = P_x(Z_M), Z_S unused
};

/// Every fusion variant behind one interface: (Z_K, Z_J, Z_S) -> Z_F, plus the
/// scene-weight logit for the smart head.
struct FusionHead {
  FusionKind kind = FusionKind::smart;
  int dk = 0, dj = 0, ds = 0, dim = 0;
  ChannelFuse stage1, stage2;
  SceneWeightNet weight;
  SelfAttentionFuse self_attention;
  ChannelAttentionFuse channel_attention;

  struct Cache {
    std::vector<double> z_m, z_sw;
    double a_logit = 0, a = 0;
    ChannelFuse::Cache s1, s2;
    SceneWeightNet::Cache w;
    SelfAttentionFuse::Cache sa;
    ChannelAttentionFuse::Cache ca;
    bool dropped = false;
  };

  static FusionHead create(nn::ParamStore& store, const std::string& name, FusionKind kind, int dk, int dj, int ds,
                           int dim, int weight_hidden, std::mt19937_64& rng);
  int output_dim() const;
  bool has_scene_weight() const { return kind == FusionKind::smart; }
  void forward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
               std::span<const double> zs, std::span<double> zf, Cache& cache,
               const FusionOptions& options = {}) const;
  /// da_logit is the external gradient on the scene-weight logit (from BCE).
  void backward(const nn::ParamStore& p, std::span<const double> zk, std::span<const double> zj,
                std::span<const double> zs, const Cache& cache, std::span<const double> dzf, double da_logit,
                nn::Grads& g, std::span<double> dzk, std::span<double> dzj, std::span<double> dzs) const;
};

}  // namespace smart
