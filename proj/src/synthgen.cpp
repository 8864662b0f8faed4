#include "smart/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "smart/error.hpp"
#include "smart/parallel.hpp"

namespace smart {

namespace {

constexpr std::array<ActionClass, kNumClasses> kClasses = {{
    {kCrouch, "crouch", false},
    {kStand, "stand", false},
    {kSit, "sit", false},
    {kHandWave, "hand_wave", false},
    {kWalk, "walk", false},
    {kRun, "run", false},
    {kClimbWall, "climb_wall", true},
    {kHitWindow, "hit_window", true},
    {kClimb, "climb", true},
    {kHit, "hit", true},
}};

// Pinhole stand-in: horizon row, focal length and camera height are fixed
// fractions of the frame so layouts scale with resolution.
struct Camera {
  double horizon;  // rows
  double focal;    // pixels
  double height = 1.3;
  double fps = 10.0;

  Camera(int h, int w) : horizon(0.35 * h), focal(0.7 * w) {}

  // Image row of a floor point at the given depth.
  double floor_row_at(double depth) const { return horizon - 0.5 + focal * height / depth; }
  double floor_depth(int row) const { return focal * height / (row + 0.5 - horizon); }
  double pixels(double metres, double depth) const { return focal * metres / depth; }
};

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(key),
                    static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct FurnitureSpec {
  double center, width, depth, height;
};

struct WindowSpec {
  double x0, x1;      // fractions of the image width
  double sill, top;   // metres above the floor
};

struct SceneSpec {
  double wall_depth;
  std::vector<WindowSpec> windows;
  std::vector<FurnitureSpec> furniture;
};

// Scene I is the roomy training scene with windows and furniture interleaved
// across the image, one piece standing against the wall. II and III are
// tighter, ward-like rooms.
SceneSpec canonical_scene(int index) {
  switch (index) {
    case 0:
      return {4.0,
              {{0.02, 0.20, 0.9, 2.1}, {0.54, 0.72, 0.9, 2.1}},
              {{0.36, 0.16, 2.3, 0.9}, {0.88, 0.18, 3.75, 1.2}}};
    case 1:
      return {3.6, {{0.58, 0.84, 0.9, 2.1}}, {{0.20, 0.22, 2.7, 0.9}}};
    default:
      return {3.0, {{0.38, 0.60, 0.9, 2.1}}, {{0.14, 0.24, 2.3, 0.6}, {0.86, 0.16, 2.55, 1.1}}};
  }
}

Rect clamp_rect(Rect r, int h, int w) {
  r.x0 = std::clamp(r.x0, 0, w - 1);
  r.x1 = std::clamp(r.x1, r.x0 + 1, w);
  r.y0 = std::clamp(r.y0, 0, h - 1);
  r.y1 = std::clamp(r.y1, r.y0 + 1, h);
  return r;
}

// Body-normalised COCO-17 keypoints: x lateral, y up from the feet, both in
// units of body height.
using Pose = std::array<std::array<double, 2>, kNumKeypoints>;

enum Kp {
  kNose, kLEye, kREye, kLEar, kREar, kLShoulder, kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist,
  kLHip, kRHip, kLKnee, kRKnee, kLAnkle, kRAnkle,
};

constexpr Pose kBasePose = {{
    {0.0, 0.94}, {0.02, 0.96}, {-0.02, 0.96}, {0.045, 0.95}, {-0.045, 0.95},
    {0.11, 0.82}, {-0.11, 0.82}, {0.14, 0.64}, {-0.14, 0.64}, {0.15, 0.48}, {-0.15, 0.48},
    {0.07, 0.52}, {-0.07, 0.52}, {0.07, 0.28}, {-0.07, 0.28}, {0.07, 0.03}, {-0.07, 0.03},
}};

enum class Family { stand, crouch, sit, wave, walk, run, climb, hit };

Family family_of(int action) {
  switch (action) {
    case kCrouch: return Family::crouch;
    case kStand: return Family::stand;
    case kSit: return Family::sit;
    case kHandWave: return Family::wave;
    case kWalk: return Family::walk;
    case kRun: return Family::run;
    case kClimbWall:
    case kClimb: return Family::climb;
    default: return Family::hit;
  }
}

double family_frequency(Family f) {
  switch (f) {
    case Family::stand: return 0.2;
    case Family::crouch: return 0.4;
    case Family::sit: return 0.2;
    case Family::wave: return 1.5;
    case Family::walk: return 1.0;
    case Family::run: return 2.0;
    case Family::climb: return 0.8;
    case Family::hit: return 1.2;
  }
  return 1.0;
}

void shift_upper_body(Pose& p, double dy) {
  for (int k = kNose; k <= kRHip; ++k) p[k][1] += dy;
}

// Parametric oscillator per motion family.
Pose family_pose(Family f, double phase, double amp) {
  Pose p = kBasePose;
  const double s = std::sin(phase);
  switch (f) {
    case Family::stand:
      for (auto& kp : p) kp[0] += 0.01 * amp * s;
      break;
    case Family::crouch: {
      const double depth = amp * (0.5 - 0.5 * std::cos(phase));
      shift_upper_body(p, -0.22 * depth);
      p[kLKnee][1] -= 0.1 * depth;
      p[kRKnee][1] -= 0.1 * depth;
      p[kLKnee][0] += 0.05 * depth;
      p[kRKnee][0] -= 0.05 * depth;
      p[kLWrist][1] += 0.1 * depth;
      p[kRWrist][1] += 0.1 * depth;
      break;
    }
    case Family::sit:
      shift_upper_body(p, -0.22);
      p[kLKnee] = {0.16, 0.3};
      p[kRKnee] = {-0.16, 0.3};
      p[kLAnkle][0] = 0.14;
      p[kRAnkle][0] = -0.14;
      p[kLWrist][1] += 0.02 * amp * s;
      p[kRWrist][1] += 0.02 * amp * s;
      break;
    case Family::wave:
      p[kRElbow] = {-0.2, 0.9};
      p[kRWrist] = {-0.22 + 0.09 * amp * s, 1.06};
      break;
    case Family::walk:
    case Family::run: {
      const double a = (f == Family::run ? 2.0 : 1.0) * amp;
      p[kLKnee][0] += 0.04 * a * s;
      p[kRKnee][0] -= 0.04 * a * s;
      p[kLAnkle][0] += 0.06 * a * s;
      p[kRAnkle][0] -= 0.06 * a * s;
      p[kLAnkle][1] += 0.04 * a * std::max(0.0, s);
      p[kRAnkle][1] += 0.04 * a * std::max(0.0, -s);
      p[kLWrist][0] -= 0.05 * a * s;
      p[kRWrist][0] += 0.05 * a * s;
      if (f == Family::run) {
        p[kLElbow][1] += 0.06;
        p[kRElbow][1] += 0.06;
        p[kLWrist][1] += 0.14;
        p[kRWrist][1] += 0.14;
      }
      break;
    }
    case Family::climb: {
      p[kLElbow] = {0.14, 0.92 + 0.04 * amp * s};
      p[kRElbow] = {-0.14, 0.92 - 0.04 * amp * s};
      p[kLWrist] = {0.13, 1.06 + 0.07 * amp * s};
      p[kRWrist] = {-0.13, 1.06 - 0.07 * amp * s};
      p[kLKnee][1] += 0.12 * amp * std::max(0.0, s);
      p[kRKnee][1] += 0.12 * amp * std::max(0.0, -s);
      p[kLAnkle][1] += 0.1 * amp * std::max(0.0, s);
      p[kRAnkle][1] += 0.1 * amp * std::max(0.0, -s);
      break;
    }
    case Family::hit: {
      const double pulse = std::pow(std::max(0.0, s), 2.0) * amp;
      p[kRElbow] = {-0.16 - 0.08 * pulse, 0.72 + 0.14 * pulse};
      p[kRWrist] = {-0.1 - 0.22 * pulse, 0.8 + 0.16 * pulse};
      p[kLElbow] = {0.15, 0.7};
      p[kLWrist] = {0.08, 0.8};
      break;
    }
  }
  return p;
}

struct Point {
  double x, y;
};

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const auto& p = pts[i - 1];
    while (k >= t && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

bool inside_dilated_hull(const std::vector<Point>& hull, const Point& p, double radius) {
  if (hull.size() >= 3) {
    bool inside = true;
    for (std::size_t i = 0; i < hull.size() && inside; ++i)
      inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0;
    if (inside) return true;
  }
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (segment_distance(p, hull[i], hull[(i + 1) % hull.size()]) <= radius) return true;
  return false;
}

struct Placed {
  double depth;
  double u0;
  double speed_px = 0.0;  // signed px/frame
  double rise_m = 0.0;
};

Placed place_human(int action, const SubjectProfile& subject, const SceneLayout& scene, const Camera& cam,
                   int w, std::mt19937_64& rng) {
  Placed p{};
  const double wd = scene.wall_depth;
  auto pick_furniture = [&]() -> const FurnitureItem& {
    const auto k = std::uniform_int_distribution<std::size_t>(0, scene.furniture.size() - 1)(rng);
    return scene.furniture[k];
  };
  switch (action) {
    case kHitWindow: {
      if (scene.windows.empty()) throw ConfigError("scene " + scene.id + " has no window for hit_window");
      const auto k = std::uniform_int_distribution<std::size_t>(0, scene.windows.size() - 1)(rng);
      const auto& win = scene.windows[k];
      p.depth = wd - 0.35 + uniform(rng, -0.05, 0.05);
      p.u0 = 0.5 * (win.x0 + win.x1) + uniform(rng, -0.3, 0.3) * win.width();
      break;
    }
    case kClimbWall: {
      p.depth = wd - 0.3 + uniform(rng, -0.05, 0.05);
      p.u0 = uniform(rng, 0.1 * w, 0.9 * w);
      for (int attempt = 0; attempt < 32; ++attempt) {
        const double u = uniform(rng, 0.1 * w, 0.9 * w);
        bool clear = true;
        for (const auto& f : scene.furniture) clear = clear && (u < f.rect.x0 - 4 || u > f.rect.x1 + 4);
        if (clear) {
          p.u0 = u;
          break;
        }
      }
      break;
    }
    case kHit:
    case kClimb: {
      if (scene.furniture.empty()) throw ConfigError("scene " + scene.id + " has no furniture for " +
                                                     std::string(kClasses[action].name));
      const auto& f = pick_furniture();
      const double spread = action == kHit ? 0.3 : 0.2;
      p.depth = f.depth - (action == kHit ? 0.3 : 0.2) + uniform(rng, -0.05, 0.05);
      p.u0 = 0.5 * (f.rect.x0 + f.rect.x1) + uniform(rng, -spread, spread) * f.rect.width();
      // climbing ends standing on the furniture top
      if (action == kClimb) p.rise_m = f.rect.height() * f.depth / cam.focal;
      break;
    }
    default: {
      // Rooms shallower than 4 m are cramped: there a normal action often
      // happens right beside a window or a piece of furniture. Otherwise the
      // person stands on open floor.
      const double near_prob = 0.8 * std::clamp(4.0 - wd, 0.0, 1.0);
      const std::size_t elements = scene.windows.size() + scene.furniture.size();
      if (elements > 0 && uniform(rng, 0.0, 1.0) < near_prob) {
        const auto k = std::uniform_int_distribution<std::size_t>(0, elements - 1)(rng);
        if (k < scene.windows.size()) {
          const auto& win = scene.windows[k];
          p.depth = wd - 0.4 + uniform(rng, -0.05, 0.05);
          p.u0 = 0.5 * (win.x0 + win.x1) + uniform(rng, -0.4, 0.4) * win.width();
        } else {
          const auto& f = scene.furniture[k - scene.windows.size()];
          p.depth = f.depth - 0.3 + uniform(rng, -0.05, 0.05);
          p.u0 = 0.5 * (f.rect.x0 + f.rect.x1) + uniform(rng, -0.4, 0.4) * f.rect.width();
        }
      } else {
        const double far = std::max(1.9, wd - 0.6);
        for (int attempt = 0; attempt < 16; ++attempt) {
          p.depth = uniform(rng, 1.8, far);
          p.u0 = uniform(rng, 0.15 * w, 0.85 * w);
          bool clear = true;
          for (const auto& f : scene.furniture)
            clear = clear && (std::abs(p.depth - f.depth) > 0.6 || p.u0 < f.rect.x0 - 6 || p.u0 > f.rect.x1 + 6);
          if (clear) break;
        }
      }
      if (action == kWalk || action == kRun) {
        const double metres_per_s = (action == kWalk ? 1.0 : 2.4) * subject.tempo;
        const double dir = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        p.speed_px = dir * cam.pixels(metres_per_s, p.depth) / cam.fps;
      }
      break;
    }
  }
  if (action == kClimbWall) p.rise_m = uniform(rng, 0.4, 0.8);
  return p;
}

// Ping-pong position inside [lo, hi].
double bounce(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  double r = std::fmod(x - lo, 2 * span);
  if (r < 0) r += 2 * span;
  return lo + (r <= span ? r : 2 * span - r);
}

std::vector<int> active_classes(const GeneratorConfig& c) {
  if (!c.classes.empty()) {
    auto v = c.classes;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }
  std::vector<int> all(kNumClasses);
  for (int i = 0; i < kNumClasses; ++i) all[i] = i;
  return all;
}

std::vector<Placement> placements(const GeneratorConfig& config) {
  std::vector<Placement> out;
  int id = 1;
  for (auto [subj, scene] : subject_scene_pairs(config))
    for (int action : active_classes(config))
      for (int clip = 0; clip < config.clips_per_class; ++clip) out.push_back({subj, scene, action, clip, id++});
  return out;
}

template <class ForEach>
Dataset generate_with(const GeneratorConfig& config, ForEach&& for_each) {
  validate(config);
  Dataset ds;
  ds.config = config;
  for (int i = 0; i < config.subjects; ++i) ds.subjects.push_back(make_subject(config, i));
  for (int i = 0; i < config.scenes; ++i) ds.scenes.push_back(make_scene(config, i));
  const auto plan = placements(config);
  ds.samples.resize(plan.size());
  for_each(static_cast<std::ptrdiff_t>(plan.size()), [&](std::ptrdiff_t i) {
    const auto& p = plan[i];
    ds.samples[i] = generate_sequence(config, ds.subjects[p.subject], ds.scenes[p.scene], p);
  });
  return ds;
}

}  // namespace

void validate(const GeneratorConfig& c) {
  if (c.clips_per_class < 1) throw ConfigError("generator.clips_per_class must be >= 1");
  if (c.height < 32 || c.width < 32) throw ConfigError("generator.height and generator.width must be >= 32");
  if (c.frames < 8) throw ConfigError("generator.frames must be >= 8");
  if (c.subjects < 1) throw ConfigError("generator.subjects must be >= 1");
  if (c.scenes < 1) throw ConfigError("generator.scenes must be >= 1");
  if (c.pairs == PairProtocol::held_out && (c.subjects < 4 || c.scenes < 3))
    throw ConfigError("held_out pairs need at least 4 subjects and 3 scenes");
  for (int a : c.classes)
    if (a < 0 || a >= kNumClasses) throw ConfigError("generator.classes contains unknown class id");
}

std::string_view element_name(Element e) {
  switch (e) {
    case Element::background: return "background";
    case Element::human: return "human";
    case Element::wall: return "wall";
    case Element::window: return "window";
    case Element::floor: return "floor";
    case Element::furniture: return "furniture";
  }
  return "unknown";
}

const std::array<ActionClass, kNumClasses>& action_classes() { return kClasses; }

int action_id(std::string_view name) {
  for (const auto& c : kClasses)
    if (c.name == name) return c.id;
  throw ConfigError("unknown action class '" + std::string(name) + "'");
}

bool is_abnormal(int action) { return action >= 0 && action < kNumClasses && kClasses[action].scene_association; }

std::vector<int> abnormal_classes() {
  std::vector<int> out;
  for (const auto& c : kClasses)
    if (c.scene_association) out.push_back(c.id);
  return out;
}

const SequenceSample& Dataset::by_id(int sequence_id) const {
  // ids are dense and ordered for generated data; fall back to a scan otherwise
  if (sequence_id >= 1 && static_cast<std::size_t>(sequence_id) <= samples.size() &&
      samples[sequence_id - 1].sequence_id == sequence_id)
    return samples[sequence_id - 1];
  for (const auto& s : samples)
    if (s.sequence_id == sequence_id) return s;
  throw DataError("sequence " + std::to_string(sequence_id) + " not in dataset");
}

const SceneLayout& Dataset::scene(const std::string& id) const {
  for (const auto& s : scenes)
    if (s.id == id) return s;
  throw DataError("scene " + id + " not in dataset");
}

std::string subject_name(int index) {
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  return "S" + std::to_string(index);
}

std::string scene_name(int index) {
  static constexpr std::array<std::string_view, 10> roman = {"I", "II", "III", "IV", "V",
                                                              "VI", "VII", "VIII", "IX", "X"};
  if (index < static_cast<int>(roman.size())) return std::string(roman[index]);
  return "S" + std::to_string(index + 1);
}

std::vector<std::pair<int, int>> subject_scene_pairs(const GeneratorConfig& config) {
  std::vector<std::pair<int, int>> pairs;
  if (config.pairs == PairProtocol::held_out) {
    // (A,I) (B,I) (C,I) | (D,I) | (A,II) (E,II) (A,III)
    pairs = {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 1}};
    if (config.subjects >= 5) pairs.push_back({4, 1});
    pairs.push_back({0, 2});
  } else {
    for (int sc = 0; sc < config.scenes; ++sc)
      for (int su = 0; su < config.subjects; ++su) pairs.push_back({su, sc});
  }
  return pairs;
}

SubjectProfile make_subject(const GeneratorConfig& config, int index) {
  auto rng = keyed_rng(config.seed, 1, static_cast<std::uint64_t>(index));
  SubjectProfile s;
  s.id = subject_name(index);
  s.limb_scale = uniform(rng, 0.85, 1.15);
  s.tempo = uniform(rng, 0.8, 1.3);
  s.jitter_std = uniform(rng, 0.2, 1.0);
  return s;
}

SceneLayout make_scene(const GeneratorConfig& config, int index) {
  const int h = config.height, w = config.width;
  SceneSpec spec;
  if (index < 3) {
    spec = canonical_scene(index);
  } else {
    auto rng = keyed_rng(config.seed, 2, static_cast<std::uint64_t>(index));
    spec.wall_depth = uniform(rng, 3.0, 6.0);
    const double wx0 = uniform(rng, 0.05, 0.6);
    spec.windows.push_back({wx0, wx0 + 0.24, 0.9, 2.1});
    const double cx = wx0 < 0.3 ? uniform(rng, 0.65, 0.85) : uniform(rng, 0.12, 0.3);
    spec.furniture.push_back({cx, 0.2, uniform(rng, 2.2, spec.wall_depth - 0.6), uniform(rng, 0.6, 1.1)});
  }
  const Camera cam(h, w);
  SceneLayout s;
  s.id = scene_name(index);
  s.wall_depth = spec.wall_depth;
  s.floor_row = std::clamp(static_cast<int>(std::ceil(cam.floor_row_at(spec.wall_depth))), 1, h - 1);
  for (const auto& win : spec.windows) {
    const double sill_row = cam.floor_row_at(spec.wall_depth) - cam.pixels(win.sill, spec.wall_depth);
    const double top_row = cam.floor_row_at(spec.wall_depth) - cam.pixels(win.top, spec.wall_depth);
    s.windows.push_back(clamp_rect({static_cast<int>(std::lround(win.x0 * w)), static_cast<int>(std::lround(top_row)),
                                    static_cast<int>(std::lround(win.x1 * w)), static_cast<int>(std::lround(sill_row))},
                                   s.floor_row, w));
  }
  for (const auto& f : spec.furniture) {
    const double bottom = cam.floor_row_at(f.depth);
    const double top = bottom - cam.pixels(f.height, f.depth);
    const double half = 0.5 * f.width * w;
    Rect r{static_cast<int>(std::lround(f.center * w - half)), static_cast<int>(std::lround(top)),
           static_cast<int>(std::lround(f.center * w + half)), static_cast<int>(std::lround(bottom))};
    s.furniture.push_back({clamp_rect(r, h, w), f.depth});
  }
  std::sort(s.furniture.begin(), s.furniture.end(),
            [](const FurnitureItem& a, const FurnitureItem& b) { return a.depth > b.depth; });
  return s;
}

SequenceSample generate_sequence(const GeneratorConfig& config, const SubjectProfile& subject,
                                 const SceneLayout& scene, const Placement& placement) {
  const int T = config.frames, H = config.height, W = config.width;
  const Camera cam(H, W);
  auto rng = keyed_rng(config.seed, 3, static_cast<std::uint64_t>(placement.sequence_id));

  SequenceSample s;
  s.sequence_id = placement.sequence_id;
  s.subject = subject.id;
  s.scene = scene.id;
  s.frames = T;
  s.height = H;
  s.width = W;
  s.action = placement.action;
  s.scene_label = kClasses[placement.action].scene_association ? 1 : 0;
  s.skeleton.resize(static_cast<std::size_t>(T) * kNumKeypoints * 2);
  s.depth.resize(static_cast<std::size_t>(T) * H * W);
  s.mask.resize(static_cast<std::size_t>(T) * H * W);

  const Placed placed = place_human(placement.action, subject, scene, cam, W, rng);
  const Family family = family_of(placement.action);
  const double amp = uniform(rng, 0.85, 1.15);
  const double phase0 = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double omega = 2 * std::numbers::pi * family_frequency(family) * subject.tempo / cam.fps;
  const double body_px = cam.pixels(1.7 * subject.limb_scale, placed.depth);
  std::normal_distribution<double> jitter(0.0, subject.jitter_std);

  // Static background, reused for every frame.
  std::vector<float> bg_depth(static_cast<std::size_t>(H) * W);
  std::vector<std::uint8_t> bg_mask(bg_depth.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (y < scene.floor_row) {
        const bool in_window =
            std::any_of(scene.windows.begin(), scene.windows.end(), [&](const Rect& r) { return r.contains(x, y); });
        bg_mask[i] = static_cast<std::uint8_t>(in_window ? Element::window : Element::wall);
        bg_depth[i] = static_cast<float>(scene.wall_depth);
      } else {
        bg_mask[i] = static_cast<std::uint8_t>(Element::floor);
        bg_depth[i] = static_cast<float>(std::min(scene.wall_depth, cam.floor_depth(y)));
      }
    }
  }
  for (const auto& f : scene.furniture) {  // sorted far to near
    for (int y = f.rect.y0; y < f.rect.y1; ++y)
      for (int x = f.rect.x0; x < f.rect.x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        bg_mask[i] = static_cast<std::uint8_t>(Element::furniture);
        bg_depth[i] = static_cast<float>(f.depth);
      }
  }

  const float human_depth = static_cast<float>(placed.depth);
  const double foot_row0 = cam.floor_row_at(placed.depth);
  for (int t = 0; t < T; ++t) {
    const double progress = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
    const double rise = placed.rise_m * progress * progress * (3 - 2 * progress);
    const double foot_row = foot_row0 - cam.pixels(rise, placed.depth);
    const double uc = placed.speed_px != 0.0 ? bounce(placed.u0 + placed.speed_px * t, 0.1 * W, 0.9 * W) : placed.u0;
    const Pose pose = family_pose(family, phase0 + omega * t, amp);

    std::vector<Point> pts(kNumKeypoints);
    for (int k = 0; k < kNumKeypoints; ++k) {
      double u = uc + pose[k][0] * body_px + jitter(rng);
      double v = foot_row - pose[k][1] * body_px + jitter(rng);
      u = std::clamp(u, 0.0, W - 1e-3);
      v = std::clamp(v, 0.0, H - 1e-3);
      const std::size_t off = (static_cast<std::size_t>(t) * kNumKeypoints + k) * 2;
      s.skeleton[off] = static_cast<float>(u);
      s.skeleton[off + 1] = static_cast<float>(v);
      pts[k] = {static_cast<double>(s.skeleton[off]), static_cast<double>(s.skeleton[off + 1])};
    }

    const std::size_t frame_off = static_cast<std::size_t>(t) * H * W;
    std::copy(bg_depth.begin(), bg_depth.end(), s.depth.begin() + frame_off);
    std::copy(bg_mask.begin(), bg_mask.end(), s.mask.begin() + frame_off);

    constexpr double kDilate = 2.0;
    const auto hull = convex_hull(pts);
    double x_lo = W, x_hi = 0, y_lo = H, y_hi = 0;
    for (const auto& p : pts) {
      x_lo = std::min(x_lo, p.x);
      x_hi = std::max(x_hi, p.x);
      y_lo = std::min(y_lo, p.y);
      y_hi = std::max(y_hi, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(x_lo - kDilate - 1)));
    const int x1 = std::min(W, static_cast<int>(std::ceil(x_hi + kDilate + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(y_lo - kDilate - 1)));
    const int y1 = std::min(H, static_cast<int>(std::ceil(y_hi + kDilate + 1)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (inside_dilated_hull(hull, {x + 0.5, y + 0.5}, kDilate)) {
          const std::size_t i = frame_off + static_cast<std::size_t>(y) * W + x;
          s.mask[i] = static_cast<std::uint8_t>(Element::human);
          s.depth[i] = human_depth;
        }
  }
  return s;
}

Dataset generate_dataset(const GeneratorConfig& config) {
  return generate_with(config, [](std::ptrdiff_t n, auto&& fn) { parallel_for(n, fn); });
}

Dataset generate_dataset_serial(const GeneratorConfig& config) {
  return generate_with(config, [](std::ptrdiff_t n, auto&& fn) { serial_for(n, fn); });
}

// ---- splits ---------------------------------------------------------------

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  const auto val = static_cast<std::size_t>(std::floor(n * fractions[1] / total + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(n * fractions[2] / total + 1e-9));
  return {n - val - test, val, test};
}

namespace {

void assign_pool(std::vector<int> pool, const std::array<double, 3>& fractions, std::uint64_t seed,
                 SplitSpec& out) {
  std::sort(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto counts = split_counts(pool.size(), fractions);
  auto it = pool.begin();
  out.train_ids.assign(it, it + counts[0]);
  it += counts[0];
  out.val_ids.assign(it, it + counts[1]);
  it += counts[1];
  out.internal_test_ids.assign(it, pool.end());
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.val_ids.begin(), out.val_ids.end());
  std::sort(out.internal_test_ids.begin(), out.internal_test_ids.end());
}

}  // namespace

SplitSpec make_splits(const Dataset& dataset, const SplitProtocol& protocol) {
  for (double f : protocol.fractions)
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  if (protocol.fractions[0] + protocol.fractions[1] + protocol.fractions[2] <= 0.0)
    throw ConfigError("split fractions must not all be zero");

  SplitSpec out;
  if (protocol.kind == SplitProtocol::Kind::random) {
    std::vector<int> ids;
    for (const auto& s : dataset.samples) ids.push_back(s.sequence_id);
    assign_pool(std::move(ids), protocol.fractions, protocol.seed, out);
    return out;
  }

  const std::string scene1 = scene_name(0);
  std::vector<int> pool;
  for (const auto& s : dataset.samples) {
    const bool train_subject = s.subject == "A" || s.subject == "B" || s.subject == "C";
    if (s.scene == scene1 && train_subject) pool.push_back(s.sequence_id);
    else if (s.scene == scene1 && s.subject == "D") out.setting1_ids.push_back(s.sequence_id);
    else if (s.scene == scene_name(1) || s.scene == scene_name(2)) out.setting2_ids.push_back(s.sequence_id);
  }
  std::vector<std::string> missing;
  if (pool.empty()) missing.push_back("training pool (subjects A,B,C in scene I)");
  if (out.setting1_ids.empty()) missing.push_back("Setting I (subject D in scene I)");
  if (out.setting2_ids.empty()) missing.push_back("Setting II (scenes II/III)");
  if (!missing.empty()) {
    std::string msg = "held_out protocol: dataset lacks ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? "; " : "") + missing[i];
    throw ProtocolError(msg);
  }
  assign_pool(std::move(pool), protocol.fractions, protocol.seed, out);
  return out;
}

}  // namespace smart
