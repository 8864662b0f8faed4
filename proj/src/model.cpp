#include "smart/model.hpp"

#include <algorithm>
#include <random>

#include "smart/error.hpp"
#include "smart/parallel.hpp"

namespace smart {

using nn::Vec;

std::string scene_info_name(SceneInfo info) {
  switch (info) {
    case SceneInfo::none: return "none";
    case SceneInfo::depth: return "depth";
    case SceneInfo::mask: return "mask";
    case SceneInfo::both: return "both";
  }
  return "?";
}

SceneInfo parse_scene_info(const std::string& name) {
  if (name == "none") return SceneInfo::none;
  if (name == "depth") return SceneInfo::depth;
  if (name == "mask") return SceneInfo::mask;
  if (name == "both") return SceneInfo::both;
  throw ConfigError("unknown scene_info '" + name + "'");
}

// ---- preprocessing ------------------------------------------------------------

SampleInputs prepare_sample(const SequenceSample& s, const ModelConfig& config) {
  SampleInputs in;
  in.sequence_id = s.sequence_id;
  in.label = s.action;
  in.scene_label = s.scene_label;
  in.frames = s.frames;
  in.skeleton = normalized_skeleton(s);
  if (!config.learned_skeleton())
    in.frozen_zk = frozen_skeleton_encoder(config.skeleton_encoder).encode(in.skeleton, s.frames);
  if (config.uses_scene()) {
    const Trajectory traj = extract_trajectory(s);
    in.trajectory = traj.normalized(s.width, s.height, config.depth_max).rows;
    in.scene = prepare_scene_inputs(s, traj, config.siamese.roi);
  }
  return in;
}

std::vector<SampleInputs> prepare_samples(const Dataset& dataset, std::span<const int> ids, const ModelConfig& config) {
  std::vector<SampleInputs> out(ids.size());
  parallel_for(static_cast<std::ptrdiff_t>(ids.size()),
               [&](std::ptrdiff_t i) { out[i] = prepare_sample(dataset.by_id(ids[i]), config); });
  return out;
}

std::vector<SampleInputs> prepare_samples_serial(const Dataset& dataset, std::span<const int> ids,
                                                 const ModelConfig& config) {
  std::vector<SampleInputs> out(ids.size());
  serial_for(static_cast<std::ptrdiff_t>(ids.size()),
             [&](std::ptrdiff_t i) { out[i] = prepare_sample(dataset.by_id(ids[i]), config); });
  return out;
}

// ---- model ------------------------------------------------------------------------

struct SmartModel::Cache {
  Vec zk, zj, zs;
  SkeletonEncoder::Cache skeleton;
  TrajectoryAttention::Cache trajectory;
  SiameseInteraction::Cache siamese;
  FusionHead::Cache fusion;
};

SmartModel SmartModel::create(const ModelConfig& config, std::uint64_t seed) {
  if (config.fuse_dim < 1 || config.weight_hidden < 1) throw ConfigError("model dims must be positive");
  SmartModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  if (config.learned_skeleton()) {
    m.skeleton_ = SkeletonEncoder::create(m.params_, "skeleton", config.skeleton, rng);
    m.dk_ = config.skeleton.out_dim;
  } else {
    m.dk_ = frozen_skeleton_encoder(config.skeleton_encoder).out_dim;
  }
  if (config.uses_scene()) {
    m.trajectory_ = TrajectoryAttention::create(m.params_, "trajectory", config.attention, rng);
    m.siamese_ = SiameseInteraction::create(m.params_, "interaction", config.siamese, config.scene_info, rng);
    m.dj_ = config.attention.out_dim;
    m.ds_ = m.siamese_.output_dim();
    m.fusion_ = FusionHead::create(m.params_, "fusion", config.fusion, m.dk_, m.dj_, m.ds_, config.fuse_dim,
                                   config.weight_hidden, rng);
    m.df_ = m.fusion_.output_dim();
  } else {
    m.df_ = m.dk_;
  }
  m.classifier_ = nn::Linear::create(m.params_, "classifier", m.df_, kNumClasses, true, rng);
  return m;
}

void SmartModel::run(const SampleInputs& in, const FusionOptions& options, Cache& c, ModelOutput& out) const {
  c.zk.assign(dk_, 0.0);
  if (config_.learned_skeleton()) {
    skeleton_.forward(params_, in.skeleton, in.frames, c.zk, c.skeleton);
  } else {
    if (static_cast<int>(in.frozen_zk.size()) != dk_)
      throw ShapeMismatchError("frozen skeleton feature has the wrong width");
    std::copy(in.frozen_zk.begin(), in.frozen_zk.end(), c.zk.begin());
  }
  out.z_f.assign(df_, 0.0);
  out.scene_weight.reset();
  if (config_.uses_scene()) {
    if (in.trajectory.empty()) throw DataError("sample was prepared without the scene branch");
    c.zj.assign(dj_, 0.0);
    c.zs.assign(ds_, 0.0);
    trajectory_.forward(params_, in.trajectory, in.frames, c.zj, c.trajectory);
    siamese_.forward(params_, in.scene, c.zs, c.siamese);
    fusion_.forward(params_, c.zk, c.zj, c.zs, out.z_f, c.fusion, options);
    if (fusion_.has_scene_weight()) out.scene_weight = c.fusion.a;
  } else {
    out.z_f = c.zk;
  }
  out.logits.assign(kNumClasses, 0.0);
  classifier_.forward(params_, out.z_f, out.logits);
}

ModelOutput SmartModel::forward(const SampleInputs& in, const FusionOptions& options) const {
  Cache c;
  ModelOutput out;
  run(in, options, c, out);
  return out;
}

int SmartModel::predict(const SampleInputs& in) const {
  const auto out = forward(in);
  return static_cast<int>(std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
}

double SmartModel::loss(const SampleInputs& in, const FusionOptions& options) const {
  Cache c;
  ModelOutput out;
  run(in, options, c, out);
  double l = nn::cross_entropy(out.logits, in.label);
  if (out.scene_weight) l += nn::binary_cross_entropy_logit(c.fusion.a_logit, in.scene_label, nullptr);
  return l;
}

double SmartModel::loss_and_grad(const SampleInputs& in, nn::Grads& g, const FusionOptions& options) const {
  Cache c;
  ModelOutput out;
  run(in, options, c, out);
  Vec dlogits(kNumClasses);
  double l = nn::cross_entropy(out.logits, in.label, dlogits);
  double da_logit = 0.0;
  if (out.scene_weight) l += nn::binary_cross_entropy_logit(c.fusion.a_logit, in.scene_label, &da_logit);

  Vec dzf(df_, 0.0);
  classifier_.backward(params_, out.z_f, dlogits, g, dzf);
  Vec dzk(dk_, 0.0);
  if (config_.uses_scene()) {
    Vec dzj(dj_, 0.0), dzs(ds_, 0.0);
    fusion_.backward(params_, c.zk, c.zj, c.zs, c.fusion, dzf, da_logit, g, dzk, dzj, dzs);
    trajectory_.backward(params_, in.trajectory, c.trajectory, dzj, g);
    siamese_.backward(params_, in.scene, c.siamese, dzs, g);
  } else {
    dzk = dzf;
  }
  if (config_.learned_skeleton()) skeleton_.backward(params_, c.skeleton, dzk, g);
  return l;
}

// ---- batches ------------------------------------------------------------------------

namespace {

template <class For>
double batch_impl(const SmartModel& model, std::span<const SampleInputs* const> batch, nn::Grads& g, For&& loop) {
  if (batch.empty()) throw DataError("empty batch");
  const std::size_t n = batch.size();
  std::vector<nn::Grads> per(n);
  std::vector<double> losses(n, 0.0);
  loop(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
    per[i] = nn::Grads(model.params());
    losses[i] = model.loss_and_grad(*batch[i], per[i]);
  });
  g = nn::Grads(model.params());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g.add(per[i]);
    total += losses[i];
  }
  g.scale(1.0 / static_cast<double>(n));
  return total / static_cast<double>(n);
}

}  // namespace

double batch_loss_and_grad(const SmartModel& model, std::span<const SampleInputs* const> batch, nn::Grads& g) {
  return batch_impl(model, batch, g, [](std::ptrdiff_t n, auto&& fn) { parallel_for(n, fn); });
}

double batch_loss_and_grad_serial(const SmartModel& model, std::span<const SampleInputs* const> batch, nn::Grads& g) {
  return batch_impl(model, batch, g, [](std::ptrdiff_t n, auto&& fn) { serial_for(n, fn); });
}

double mean_loss(const SmartModel& model, std::span<const SampleInputs> samples) {
  if (samples.empty()) throw DataError("mean_loss over no samples");
  std::vector<double> losses(samples.size());
  parallel_for(static_cast<std::ptrdiff_t>(samples.size()),
               [&](std::ptrdiff_t i) { losses[i] = model.loss(samples[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(samples.size());
}

std::vector<int> predict_all(const SmartModel& model, std::span<const SampleInputs> samples) {
  std::vector<int> out(samples.size());
  parallel_for(static_cast<std::ptrdiff_t>(samples.size()),
               [&](std::ptrdiff_t i) { out[i] = model.predict(samples[i]); });
  return out;
}

}  // namespace smart
