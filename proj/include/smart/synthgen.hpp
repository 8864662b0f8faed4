#pragma once

// Procedural stand-in for the recorded clips: every sequence carries a 2D
// skeleton stream plus the depth map and semantic mask that the frozen
// perception models would have produced for it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smart {

inline constexpr int kNumClasses = 10;
inline constexpr int kNumKeypoints = 17;

// Per-pixel element-class ids carried in masks.
enum class Element : std::uint8_t {
  background = 0,
  human = 1,
  wall = 2,
  window = 3,
  floor = 4,
  furniture = 5,
};
inline constexpr int kNumElementIds = 6;
inline constexpr std::array<Element, 4> kSceneElements = {Element::wall, Element::window, Element::floor,
                                                          Element::furniture};

std::string_view element_name(Element e);

struct ActionClass {
  int id;
  std::string_view name;
  bool scene_association;
};

enum Action : int {
  kCrouch = 0,
  kStand = 1,
  kSit = 2,
  kHandWave = 3,
  kWalk = 4,
  kRun = 5,
  kClimbWall = 6,
  kHitWindow = 7,
  kClimb = 8,
  kHit = 9,
};

const std::array<ActionClass, kNumClasses>& action_classes();
/// Throws ConfigError for names outside the vocabulary.
int action_id(std::string_view name);
bool is_abnormal(int action);
std::vector<int> abnormal_classes();

struct SubjectProfile {
  std::string id;
  double limb_scale = 1.0;  // unitless body-size multiplier
  double tempo = 1.0;       // motion frequency multiplier
  double jitter_std = 0.5;  // pixels
  bool operator==(const SubjectProfile&) const = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Rect&) const = default;
};

struct FurnitureItem {
  Rect rect;
  double depth = 0.0;  // m
  bool operator==(const FurnitureItem&) const = default;
};

struct SceneLayout {
  std::string id;
  double wall_depth = 4.0;  // m
  std::vector<Rect> windows;
  int floor_row = 0;  // first row that belongs to the floor
  std::vector<FurnitureItem> furniture;
  bool operator==(const SceneLayout&) const = default;
};

struct SequenceSample {
  int sequence_id = 0;
  std::string subject;
  std::string scene;
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> skeleton;    // frames x 17 x 2, (u, v) pixels
  std::vector<float> depth;       // frames x H x W, metres
  std::vector<std::uint8_t> mask; // frames x H x W, Element ids
  int action = 0;
  int scene_label = 0;

  std::size_t frame_pixels() const { return static_cast<std::size_t>(height) * width; }
  float u(int t, int k) const { return skeleton[(static_cast<std::size_t>(t) * kNumKeypoints + k) * 2]; }
  float v(int t, int k) const { return skeleton[(static_cast<std::size_t>(t) * kNumKeypoints + k) * 2 + 1]; }
  bool operator==(const SequenceSample&) const = default;
};

enum class PairProtocol { held_out, all };

struct GeneratorConfig {
  std::uint64_t seed = 7;
  int subjects = 5;
  int scenes = 3;
  int clips_per_class = 30;
  int frames = 48;
  int height = 64;
  int width = 64;
  PairProtocol pairs = PairProtocol::held_out;
  std::vector<int> classes;  // empty = all ten
  bool operator==(const GeneratorConfig&) const = default;
};

struct Dataset {
  GeneratorConfig config;
  std::vector<SubjectProfile> subjects;
  std::vector<SceneLayout> scenes;
  std::vector<SequenceSample> samples;

  const SequenceSample& by_id(int sequence_id) const;
  const SceneLayout& scene(const std::string& id) const;
  bool operator==(const Dataset&) const = default;
};

std::string subject_name(int index);  // A, B, ..., Z, S26, ...
std::string scene_name(int index);    // I, II, III, IV, ...

/// Subject/scene combinations the generator emits, in emission order.
std::vector<std::pair<int, int>> subject_scene_pairs(const GeneratorConfig& config);

/// Throws ConfigError for invalid dimensions, counts or class ids.
void validate(const GeneratorConfig& config);

/// Validates the config (ConfigError) and synthesises every sequence.
/// Sequences are generated in parallel; each has its own seeded RNG, so the
/// output does not depend on the thread count.
Dataset generate_dataset(const GeneratorConfig& config);
Dataset generate_dataset_serial(const GeneratorConfig& config);

SubjectProfile make_subject(const GeneratorConfig& config, int index);
SceneLayout make_scene(const GeneratorConfig& config, int index);

struct Placement {
  int subject = 0;
  int scene = 0;
  int action = 0;
  int clip = 0;
  int sequence_id = 0;
};
SequenceSample generate_sequence(const GeneratorConfig& config, const SubjectProfile& subject,
                                 const SceneLayout& scene, const Placement& placement);

// ---- splits ---------------------------------------------------------------

struct SplitSpec {
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  std::vector<int> internal_test_ids;
  std::vector<int> setting1_ids;
  std::vector<int> setting2_ids;
  bool operator==(const SplitSpec&) const = default;
};

struct SplitProtocol {
  enum class Kind { held_out, random } kind = Kind::held_out;
  std::array<double, 3> fractions = {0.7, 0.2, 0.1};
  std::uint64_t seed = 7;
};

/// Held-out protocol: subjects A,B,C in scene I form the 7:2:1 pool, subject D
/// in scene I is Setting I, scenes II/III are Setting II.
SplitSpec make_splits(const Dataset& dataset, const SplitProtocol& protocol);

/// Counts for a 7:2:1 style split; val and test round down, train takes the rest.
std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions);

// ---- on-disk format -------------------------------------------------------

inline constexpr std::string_view kFormatVersion = "1";

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

void write_splits(const SplitSpec& split, const std::filesystem::path& file);
SplitSpec read_splits(const std::filesystem::path& file);

}  // namespace smart
