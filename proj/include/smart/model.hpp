#pragma once

// The full recognizer: skeleton encoder, optional scene branch (trajectory
// attention + siamese interaction), a fusion head and the linear classifier.
// Preprocessing turns a raw sequence into the fixed inputs the network reads.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smart/fusion.hpp"
#include "smart/motion_perception.hpp"
#include "smart/nn.hpp"
#include "smart/scene_perception.hpp"

namespace smart {

struct ModelConfig {
  std::string skeleton_encoder = "standin";  // or a registered frozen extractor
  SkeletonEncoderConfig skeleton;
  AttentionConfig attention;
  SiameseConfig siamese;
  int fuse_dim = 128;
  int weight_hidden = 16;
  double depth_max = 8.0;  // trajectory depth normaliser, metres
  SceneInfo scene_info = SceneInfo::both;
  FusionKind fusion = FusionKind::smart;
  bool use_scene_module = true;

  bool uses_scene() const { return use_scene_module && scene_info != SceneInfo::none; }
  bool learned_skeleton() const { return skeleton_encoder == "standin"; }
};

std::string scene_info_name(SceneInfo info);
/// Throws ConfigError for names outside {none, depth, mask, both}.
SceneInfo parse_scene_info(const std::string& name);

/// Network-ready view of one sequence.
struct SampleInputs {
  int sequence_id = 0;
  int label = 0;
  int scene_label = 0;
  int frames = 0;
  std::vector<double> skeleton;    // frames x 17 x 2, in [0,1]
  std::vector<double> frozen_zk;   // frozen-extractor features (empty for the learned encoder)
  std::vector<double> trajectory;  // frames x 3, normalised
  SceneInputs scene;               // empty unless the scene branch is used
};

SampleInputs prepare_sample(const SequenceSample& sample, const ModelConfig& config);
/// Prepares the listed sequences in parallel; output order follows `ids`.
std::vector<SampleInputs> prepare_samples(const Dataset& dataset, std::span<const int> ids, const ModelConfig& config);
std::vector<SampleInputs> prepare_samples_serial(const Dataset& dataset, std::span<const int> ids,
                                                 const ModelConfig& config);

struct ModelOutput {
  std::vector<double> logits;
  std::vector<double> z_f;
  std::optional<double> scene_weight;  // smart head only
};

class SmartModel {
 public:
  static SmartModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  int zk_dim() const { return dk_; }
  int zs_dim() const { return ds_; }
  int feature_dim() const { return df_; }

  ModelOutput forward(const SampleInputs& in, const FusionOptions& options = {}) const;
  int predict(const SampleInputs& in) const;
  /// Per-sample objective: CE, plus BCE on the scene weight for the smart head.
  double loss(const SampleInputs& in, const FusionOptions& options = {}) const;
  /// Same value as loss(); adds d loss / d params into `g`.
  double loss_and_grad(const SampleInputs& in, nn::Grads& g, const FusionOptions& options = {}) const;

 private:
  struct Cache;
  void run(const SampleInputs& in, const FusionOptions& options, Cache& c, ModelOutput& out) const;

  ModelConfig config_;
  nn::ParamStore params_;
  int dk_ = 0, dj_ = 0, ds_ = 0, df_ = 0;
  SkeletonEncoder skeleton_;
  TrajectoryAttention trajectory_;
  SiameseInteraction siamese_;
  FusionHead fusion_;
  nn::Linear classifier_;
};

/// Mean loss over the batch; writes the mean gradient into `g` (zeroed first).
/// Per-sample gradients are reduced in batch order, so the parallel and serial
/// versions give identical results.
double batch_loss_and_grad(const SmartModel& model, std::span<const SampleInputs* const> batch, nn::Grads& g);
double batch_loss_and_grad_serial(const SmartModel& model, std::span<const SampleInputs* const> batch, nn::Grads& g);

/// Mean loss without gradients.
double mean_loss(const SmartModel& model, std::span<const SampleInputs> samples);
std::vector<int> predict_all(const SmartModel& model, std::span<const SampleInputs> samples);

}  // namespace smart
