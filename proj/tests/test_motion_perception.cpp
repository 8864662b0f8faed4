#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "smart/error.hpp"
#include "smart/motion_perception.hpp"
#include "support.hpp"

using namespace smart;
using smart::testing::random_vector;

namespace {

std::vector<double> encode(const SkeletonEncoder& enc, const nn::ParamStore& store, std::span<const double> skel,
                           int T) {
  std::vector<double> z(enc.config.out_dim);
  SkeletonEncoder::Cache c;
  enc.forward(store, skel, T, z, c);
  return z;
}

std::vector<double> clip_from_sample(int frames) {
  GeneratorConfig gc;
  gc.frames = frames;
  const auto s = generate_sequence(gc, make_subject(gc, 1), make_scene(gc, 0), {1, 0, kWalk, 0, 5});
  return normalized_skeleton(s);
}

}  // namespace

TEST_CASE("normalised keypoints lie in [0,1]") {
  GeneratorConfig gc;
  gc.clips_per_class = 1;
  gc.frames = 12;
  const Dataset ds = generate_dataset(gc);
  for (const auto& s : ds.samples) {
    const auto k = normalized_skeleton(s);
    REQUIRE(k.size() == s.skeleton.size());
    for (double v : k) REQUIRE((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("encoder input is invariant to translation and image scale of the person") {
  const int T = 10;
  const auto skel = clip_from_sample(T);
  auto shifted = skel;
  for (std::size_t i = 0; i < shifted.size(); i += 2) {
    shifted[i] += 0.07;
    shifted[i + 1] -= 0.03;
  }
  auto scaled = skel;
  for (auto& v : scaled) v = 0.5 * v + 0.1;
  const auto a = encoder_input(skel, T), b = encoder_input(shifted, T), c = encoder_input(scaled, T);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1));
    CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1));
  }
}

TEST_CASE("encoder input: centred pose and velocity channels divided by mean body height") {
  const int T = 5;
  const auto skel = clip_from_sample(T);
  const auto rows = encoder_input(skel, T);
  const int n2 = 2 * kNumKeypoints;
  double height = 0;
  for (int t = 0; t < T; ++t) {
    double lo = 1, hi = 0;
    for (int k = 0; k < kNumKeypoints; ++k) {
      lo = std::min(lo, skel[t * n2 + 2 * k + 1]);
      hi = std::max(hi, skel[t * n2 + 2 * k + 1]);
    }
    height += (hi - lo) / T;
  }
  for (int t = 0; t < T; ++t) {
    double cx = 0, cy = 0;
    for (int k = 0; k < kNumKeypoints; ++k) {
      cx += skel[t * n2 + 2 * k] / kNumKeypoints;
      cy += skel[t * n2 + 2 * k + 1] / kNumKeypoints;
    }
    for (int k = 0; k < kNumKeypoints; ++k) {
      CHECK(rows[t * 2 * n2 + 2 * k] == doctest::Approx((skel[t * n2 + 2 * k] - cx) / height).epsilon(1e-9));
      CHECK(rows[t * 2 * n2 + 2 * k + 1] == doctest::Approx((skel[t * n2 + 2 * k + 1] - cy) / height).epsilon(1e-9));
    }
    for (int i = 0; i < n2; ++i) {
      const double v = t == 0 ? 0.0 : (skel[t * n2 + i] - skel[(t - 1) * n2 + i]) / height;
      CHECK(rows[t * 2 * n2 + n2 + i] == doctest::Approx(v).epsilon(1e-9));
    }
  }
}

TEST_CASE("translation probe: a constant keypoint offset leaves Z_K unchanged") {
  nn::ParamStore store;
  std::mt19937_64 rng(4);
  const auto enc = SkeletonEncoder::create(store, "skel", {}, rng);
  const int T = 12;
  const auto skel = clip_from_sample(T);
  auto moved = skel;
  for (std::size_t i = 0; i < moved.size(); i += 2) moved[i] += 0.2;
  const auto a = encode(enc, store, skel, T), b = encode(enc, store, moved, T);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1));
}

TEST_CASE("zero-motion clip and its time reversal give identical Z_K") {
  nn::ParamStore store;
  std::mt19937_64 rng(5);
  const auto enc = SkeletonEncoder::create(store, "skel", {}, rng);
  const int T = 8;
  const auto one = clip_from_sample(1);
  std::vector<double> clip;
  for (int t = 0; t < T; ++t) clip.insert(clip.end(), one.begin(), one.end());
  std::vector<double> reversed;
  for (int t = T - 1; t >= 0; --t) reversed.insert(reversed.end(), clip.begin() + t * one.size(),
                                                   clip.begin() + (t + 1) * one.size());
  CHECK(encode(enc, store, clip, T) == encode(enc, store, reversed, T));
}

TEST_CASE("encoder shape, determinism and error handling") {
  nn::ParamStore store;
  std::mt19937_64 rng(6);
  const auto enc = SkeletonEncoder::create(store, "skel", {}, rng);
  const auto skel = clip_from_sample(48);
  const auto z = encode(enc, store, skel, 48);
  CHECK(z.size() == 128u);
  CHECK(nn::all_finite(z));
  CHECK(encode(enc, store, skel, 48) == z);

  auto bad = skel;
  bad[17] = std::nan("");
  CHECK_THROWS_AS(encode(enc, store, bad, 48), NumericError);
  CHECK_THROWS_AS(encode(enc, store, std::span<const double>(skel).first(10), 48), ShapeMismatchError);
}

TEST_CASE("skeleton encoder gradients match finite differences on a reduced instance") {
  nn::ParamStore store;
  std::mt19937_64 rng(17);
  const SkeletonEncoderConfig cfg{5, 6, 3};
  const int N = 4, T = 6;
  const auto enc = SkeletonEncoder::create(store, "skel", cfg, rng, N);
  const auto skel = random_vector(T * N * 2, rng, 0.2, 0.8);
  const auto w = random_vector(cfg.out_dim, rng);
  auto loss = [&] { return testing::weighted_sum(w, encode(enc, store, skel, T)); };
  std::vector<double> z(cfg.out_dim);
  SkeletonEncoder::Cache c;
  enc.forward(store, skel, T, z, c);
  nn::Grads g(store);
  enc.backward(store, c, w, g);
  const auto r = testing::check_gradients(store, g, loss);
  INFO("worst ", r.worst);
  CHECK(r.checked == store.scalar_count());
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("baseline loss values") {
  std::vector<double> logits(kNumClasses, 0.0);
  CHECK(baseline_loss(logits, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  logits[4] = 100.0;
  CHECK(baseline_loss(logits, 4) < 1e-6);
  std::fill(logits.begin(), logits.end(), 0.0);
  logits[0] = 1.0;
  CHECK(baseline_loss(logits, 0) == doctest::Approx(1.4602).epsilon(1e-3));
  CHECK_THROWS_AS(baseline_loss(logits, 10), ConfigError);
  CHECK_THROWS_AS(baseline_loss(logits, -1), ConfigError);
}

TEST_CASE("cross-entropy is non-negative and its gradient is softmax minus one-hot") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = random_vector(kNumClasses, rng, -4, 4);
    const int label = trial % kNumClasses;
    std::vector<double> d(kNumClasses), p(kNumClasses);
    CHECK(nn::cross_entropy(logits, label, d) >= 0.0);
    nn::softmax(logits, p);
    for (int k = 0; k < kNumClasses; ++k)
      CHECK(d[k] == doctest::Approx(p[k] - (k == label ? 1.0 : 0.0)).epsilon(1e-12));
    std::vector<double> analytic = d;
    const auto r = testing::check_input_gradient(
        logits, analytic, [&] { return nn::cross_entropy(logits, label); }, "logits");
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("baseline classifier produces ten finite logits") {
  nn::ParamStore store;
  std::mt19937_64 rng(9);
  const auto clf = BaselineClassifier::create(store, "clf", 16, rng);
  const auto z = random_vector(16, rng);
  std::vector<double> logits(kNumClasses);
  clf.classify(store, z, logits);
  CHECK(nn::all_finite(logits));
}

TEST_CASE("frozen extractor registry") {
  const auto& stats = frozen_skeleton_encoder("joint_stats");
  CHECK(stats.out_dim == 8 * kNumKeypoints);
  const auto skel = clip_from_sample(6);
  const auto f = stats.encode(skel, 6);
  CHECK(f.size() == static_cast<std::size_t>(stats.out_dim));
  CHECK(nn::all_finite(f));

  register_skeleton_encoder({"first_frame", 2 * kNumKeypoints, [](std::span<const double> s, int) {
                               return std::vector<double>(s.begin(), s.begin() + 2 * kNumKeypoints);
                             }});
  const auto& custom = frozen_skeleton_encoder("first_frame");
  CHECK(custom.encode(skel, 6) == std::vector<double>(skel.begin(), skel.begin() + 2 * kNumKeypoints));
  CHECK_THROWS_AS(frozen_skeleton_encoder("posec3d"), ConfigError);
}
