#pragma once

// Skeleton motion features. The learned stand-in encoder takes the place of a
// frozen pose-based extractor; any frozen extractor with the same shape
// contract can be registered and selected by name instead.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smart/nn.hpp"
#include "smart/synthgen.hpp"

namespace smart {

/// Keypoints scaled to [0,1] by the image size: frames x 17 x 2.
std::vector<double> normalized_skeleton(const SequenceSample& sample);

/// Per-frame encoder input, frames x 4N: keypoints relative to the frame's
/// keypoint centroid, then the displacement from the previous frame (zero at
/// t = 0), both divided by the clip's mean body height. The result does not
/// depend on where the person stands or how large they appear.
std::vector<double> encoder_input(std::span<const double> skeleton, int frames, int keypoints = kNumKeypoints);

struct SkeletonEncoderConfig {
  int hidden = 32;
  int out_dim = 128;  // d_K
  int kernel = 3;
};

/// encoder_input rows -> shared linear map -> two temporal convolutions ->
/// temporal mean -> linear to d_K.
struct SkeletonEncoder {
  SkeletonEncoderConfig config;
  nn::Linear frame;
  nn::Conv1d temporal1, temporal2;
  nn::Linear output;

  struct Cache {
    int frames = 0;
    std::vector<double> input;  // frames x 4N
    std::vector<double> h0, h1, h2;
    std::vector<double> pooled;
  };

  static SkeletonEncoder create(nn::ParamStore& store, const std::string& name, const SkeletonEncoderConfig& config,
                                std::mt19937_64& rng, int keypoints = kNumKeypoints);
  int keypoints() const { return frame.in / 4; }
  /// skeleton: frames x N x 2 normalised coordinates. Throws NumericError on NaN.
  void forward(const nn::ParamStore& p, std::span<const double> skeleton, int frames, std::span<double> z_k,
               Cache& cache) const;
  void backward(const nn::ParamStore& p, const Cache& cache, std::span<const double> dz_k, nn::Grads& g) const;
};

/// A frozen extractor: (frames x 17 x 2 normalised skeleton, frames) -> feature.
struct FrozenSkeletonEncoder {
  std::string name;
  int out_dim = 0;
  std::function<std::vector<double>(std::span<const double>, int)> encode;
};

/// Registers an extractor under its name (replacing any previous one).
void register_skeleton_encoder(FrozenSkeletonEncoder encoder);
/// Throws ConfigError for unknown names. "standin" is the learned encoder and
/// is not in this registry; "joint_stats" is built in.
const FrozenSkeletonEncoder& frozen_skeleton_encoder(const std::string& name);

struct BaselineClassifier {
  nn::Linear linear;  // d_K -> C

  static BaselineClassifier create(nn::ParamStore& store, const std::string& name, int in_dim,
                                   std::mt19937_64& rng);
  void classify(const nn::ParamStore& p, std::span<const double> z_k, std::span<double> logits) const;
};

/// Softmax cross-entropy; throws ConfigError for labels outside 0..C-1.
double baseline_loss(std::span<const double> logits, int label);

}  // namespace smart
