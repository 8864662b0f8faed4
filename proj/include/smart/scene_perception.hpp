#pragma once

// Scene perception: semantic-depth decoupling, the statistical-centre motion
// trajectory with its relative-position self-attention encoder, and the
// dual-siamese human/scene-element interaction encoder.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "smart/nn.hpp"
#include "smart/synthgen.hpp"

namespace smart {

// ---- semantic depth ---------------------------------------------------------

/// Per-element depth channels: D_e = depth where mask == e, else 0.
struct SemanticDepth {
  int frames = 0, height = 0, width = 0;
  std::array<std::vector<float>, kNumElementIds> channels;

  std::span<const float> channel(Element e) const { return channels[static_cast<std::size_t>(e)]; }
};

/// Throws VocabularyError for mask ids outside the element vocabulary and
/// ShapeMismatchError when the arrays disagree.
SemanticDepth decouple(std::span<const float> depth, std::span<const std::uint8_t> mask, int frames, int height,
                       int width);
SemanticDepth decouple(const SequenceSample& sample);

// ---- trajectory --------------------------------------------------------------

struct Center {
  double u = 0, v = 0, d = 0;
};

/// Mean column, row and depth over the human pixels of one frame. Throws
/// EmptyRegionError when the frame has no human pixel.
Center statistical_center(std::span<const float> depth_frame, std::span<const std::uint8_t> mask_frame, int height,
                          int width);

struct Trajectory {
  int frames = 0;
  std::vector<double> rows;  // frames x 3: (u px, v px, d m)

  double u(int t) const { return rows[static_cast<std::size_t>(t) * 3]; }
  double v(int t) const { return rows[static_cast<std::size_t>(t) * 3 + 1]; }
  double d(int t) const { return rows[static_cast<std::size_t>(t) * 3 + 2]; }
  /// (u / width, v / height, d / depth_max).
  Trajectory normalized(int width, int height, double depth_max) const;
};

/// Empty human masks are reported with the offending frame index; they are
/// never patched over.
Trajectory extract_trajectory(const SequenceSample& sample);

// ---- trajectory self-attention ---------------------------------------------

struct AttentionConfig {
  int hidden = 16;   // D_h
  int clip = 8;      // relative distance clip k
  int out_dim = 64;  // d_J
};

/// Scaled dot-product attention with Shaw-style relative position logits
/// S_rel[i][j] = q_i . r_{clip(j - i)}. `rel` is (2*clip + 1) x D.
struct AttentionCoreResult {
  std::vector<double> logits;  // T x T, already scaled by 1/sqrt(D)
  std::vector<double> attn;    // T x T, rows sum to one
  std::vector<double> out;     // T x D
};
AttentionCoreResult attention_core(int frames, int dim, std::span<const double> q, std::span<const double> k,
                                   std::span<const double> v, std::span<const double> rel, int clip);

struct TrajectoryAttention {
  AttentionConfig config;
  nn::Linear input;             // 3 -> D_h, lifts each trajectory row
  nn::Linear query, key, value; // D_h -> D_h, no bias
  int rel = -1;                 // (2*clip + 1) x D_h
  nn::Linear output;            // D_h -> d_J after temporal mean

  struct Cache {
    int frames = 0;
    std::vector<double> h, q, k, v;
    AttentionCoreResult core;
    std::vector<double> pooled;
  };

  static TrajectoryAttention create(nn::ParamStore& store, const std::string& name, const AttentionConfig& config,
                                    std::mt19937_64& rng);
  /// traj is frames x 3 (normalised). Throws NumericError on non-finite input.
  void forward(const nn::ParamStore& p, std::span<const double> traj, int frames, std::span<double> z_j,
               Cache& cache) const;
  void backward(const nn::ParamStore& p, std::span<const double> traj, const Cache& cache,
                std::span<const double> dz_j, nn::Grads& g) const;
};

// ---- dual-siamese interaction ---------------------------------------------------

enum class SceneInfo { none, depth, mask, both };

/// Temporally pooled, human-centred crops of the perception streams. Each
/// image is roi x roi. A frame's crop spans kCropBodyHeights times the
/// person's pixel height and is resampled (nearest neighbour), so the crop
/// covers the same physical neighbourhood at any distance. Depth crops are
/// divided by the frame's human centre depth. The pooled crops are made
/// left-right symmetric (averaged with their mirror image).
inline constexpr double kCropBodyHeights = 1.25;

struct SceneInputs {
  int roi = 0;
  std::vector<double> human_depth;                         // D_h
  std::vector<double> human_mask;                          // M_h
  std::array<std::vector<double>, 4> element_depth;        // D_s per kSceneElements
  std::array<std::vector<double>, 4> element_mask;         // M_s per kSceneElements
  std::vector<double> raw_depth;                           // undecoupled depth, depth-only ablation
};

SceneInputs prepare_scene_inputs(const SequenceSample& sample, const Trajectory& trajectory, int roi);

struct SiameseConfig {
  int roi = 32;
  int channels1 = 4;
  int channels2 = 8;
  int embed = 16;  // d_e, width of one difference block
};

/// Shared-weight image encoder: two strided 3x3 conv + ReLU stages.
struct SceneEncoder {
  nn::Conv2d conv1, conv2;

  struct Cache {
    std::vector<double> a1, a2;  // post-ReLU activations
  };
  static SceneEncoder create(nn::ParamStore& store, const std::string& name, const SiameseConfig& c,
                             std::mt19937_64& rng);
  std::size_t feature_size() const { return conv2.out_size(); }
  void forward(const nn::ParamStore& p, std::span<const double> image, Cache& cache) const;
  /// Accumulates parameter gradients; the input gradient is not needed.
  void backward(const nn::ParamStore& p, std::span<const double> image, const Cache& cache,
                std::span<const double> dfeature, nn::Grads& g) const;
};

struct SiameseInteraction {
  SiameseConfig config;
  SceneInfo info = SceneInfo::both;
  SceneEncoder depth_encoder, mask_encoder;  // E_D, E_M
  nn::Linear depth_diff, mask_diff;          // P_D, P_M: bias-free
  nn::Linear raw_depth_proj;                 // depth-only ablation, bias-free

  struct Cache {
    SceneEncoder::Cache human_depth, human_mask, raw;
    std::array<SceneEncoder::Cache, 4> element_depth, element_mask;
    std::array<std::vector<double>, 4> depth_absdiff, mask_absdiff;  // |E(h) - E(s)|
    std::array<std::vector<double>, 4> depth_sign, mask_sign;
  };

  static SiameseInteraction create(nn::ParamStore& store, const std::string& name, const SiameseConfig& config,
                                   SceneInfo info, std::mt19937_64& rng);
  /// Width of Z_S for the configured scene information.
  int output_dim() const;
  void forward(const nn::ParamStore& p, const SceneInputs& in, std::span<double> z_s, Cache& cache) const;
  void backward(const nn::ParamStore& p, const SceneInputs& in, const Cache& cache, std::span<const double> dz_s,
                nn::Grads& g) const;
};

/// One difference block P(|E(a) - E(b)|), exposed for property tests.
std::vector<double> difference_block(const nn::ParamStore& p, const SceneEncoder& encoder, const nn::Linear& proj,
                                     std::span<const double> a, std::span<const double> b);

}  // namespace smart
