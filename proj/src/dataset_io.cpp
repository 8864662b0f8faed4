#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "smart/error.hpp"
#include "smart/synthgen.hpp"
#include "smart/text.hpp"

namespace smart {

static_assert(std::endian::native == std::endian::little, "payload files are little-endian");

namespace {

namespace fs = std::filesystem;
using text::format_double;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues read_key_values(const fs::path& file, const std::string& context) {
  std::ifstream in(file);
  if (!in) throw FormatError(context + ": cannot open " + file.string());
  KeyValues out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto colon = trimmed.find(':');
    if (colon == std::string_view::npos)
      throw FormatError(context + ": malformed line " + std::to_string(line_no) + " in " + file.filename().string());
    out.emplace_back(std::string(text::trim(trimmed.substr(0, colon))),
                     std::string(text::trim(trimmed.substr(colon + 1))));
  }
  return out;
}

std::map<std::string, std::string> to_map(const KeyValues& kv) {
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : kv) m[k] = v;
  return m;
}

const std::string& require(const std::map<std::string, std::string>& m, const std::string& key,
                           const std::string& context) {
  const auto it = m.find(key);
  if (it == m.end()) throw FormatError(context + ": missing key '" + key + "'");
  return it->second;
}

template <class T>
void write_raw(const fs::path& file, const std::vector<T>& data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
}

// Reads a payload holding `frames` frames of `per_frame` elements. A size that
// is not a whole number of frames is a truncated file; a whole but different
// number of frames is a shape mismatch against the sidecar.
template <class T>
std::vector<T> read_raw(const fs::path& file, std::size_t per_frame, int frames, int sequence_id,
                        const std::string& what) {
  const std::string ctx = "sequence " + std::to_string(sequence_id);
  std::error_code ec;
  const auto bytes = fs::file_size(file, ec);
  if (ec) throw FormatError(ctx + ": missing payload " + file.filename().string());
  const std::size_t frame_bytes = per_frame * sizeof(T);
  if (bytes % frame_bytes != 0)
    throw FormatError(ctx + ": truncated payload " + file.filename().string() + " (" + std::to_string(bytes) +
                      " bytes is not a whole number of frames)");
  const auto held = bytes / frame_bytes;
  if (held != static_cast<std::size_t>(frames))
    throw ShapeMismatchError(ctx + ": sidecar declares T=" + std::to_string(frames) + " but " + what + " holds " +
                             std::to_string(held) + " frames");
  std::vector<T> data(per_frame * frames);
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError(ctx + ": short read on " + file.filename().string());
  return data;
}

std::string pairs_name(PairProtocol p) { return p == PairProtocol::held_out ? "held_out" : "all"; }

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt", std::ios::trunc);
    if (!m) throw FormatError("cannot write manifest in " + dir.string());
    const auto& c = dataset.config;
    m << "format:" << kFormatVersion << "\n";
    m << "generator.seed:" << c.seed << "\n";
    m << "generator.subjects:" << c.subjects << "\n";
    m << "generator.scenes:" << c.scenes << "\n";
    m << "generator.clips_per_class:" << c.clips_per_class << "\n";
    m << "generator.frames:" << c.frames << "\n";
    m << "generator.height:" << c.height << "\n";
    m << "generator.width:" << c.width << "\n";
    m << "generator.pairs:" << pairs_name(c.pairs) << "\n";
    m << "generator.classes:" << text::join_ints(c.classes) << "\n";
    for (const auto& s : dataset.subjects)
      m << "subject:" << s.id << "," << format_double(s.limb_scale) << "," << format_double(s.tempo) << ","
        << format_double(s.jitter_std) << "\n";
    for (const auto& s : dataset.scenes) {
      m << "scene:" << s.id << "," << format_double(s.wall_depth) << "," << s.floor_row << "," << s.windows.size();
      for (const auto& w : s.windows) m << "," << w.x0 << "," << w.y0 << "," << w.x1 << "," << w.y1;
      for (const auto& f : s.furniture)
        m << "," << f.rect.x0 << "," << f.rect.y0 << "," << f.rect.x1 << "," << f.rect.y1 << ","
          << format_double(f.depth);
      m << "\n";
    }
    std::vector<int> ids;
    for (const auto& s : dataset.samples) ids.push_back(s.sequence_id);
    m << "sequences:" << text::join_ints(ids) << "\n";
  }
  for (const auto& s : dataset.samples) {
    const fs::path seq = dir / ("seq_" + std::to_string(s.sequence_id));
    fs::create_directories(seq);
    write_raw(seq / "skeleton.f32", s.skeleton);
    write_raw(seq / "depth.f32", s.depth);
    write_raw(seq / "mask.u8", s.mask);
    std::ofstream meta(seq / "meta.txt", std::ios::trunc);
    meta << "version:" << kFormatVersion << "\n"
         << "sequence_id:" << s.sequence_id << "\n"
         << "subject:" << s.subject << "\n"
         << "scene:" << s.scene << "\n"
         << "frames:" << s.frames << "\n"
         << "keypoints:" << kNumKeypoints << "\n"
         << "height:" << s.height << "\n"
         << "width:" << s.width << "\n"
         << "action:" << s.action << "\n"
         << "action_name:" << action_classes()[s.action].name << "\n"
         << "scene_label:" << s.scene_label << "\n";
  }
}

Dataset read_dataset(const fs::path& dir) {
  const std::string mctx = "manifest";
  const auto kv = read_key_values(dir / "manifest.txt", mctx);
  Dataset ds;
  std::vector<int> ids;
  bool have_ids = false;
  for (const auto& [key, value] : kv) {
    auto& c = ds.config;
    if (key == "format") {
      if (value != kFormatVersion) throw FormatError("manifest: unknown format version '" + value + "'");
    } else if (key == "generator.seed") {
      c.seed = static_cast<std::uint64_t>(text::parse_int(value, key));
    } else if (key == "generator.subjects") {
      c.subjects = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.scenes") {
      c.scenes = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.clips_per_class") {
      c.clips_per_class = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.frames") {
      c.frames = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.height") {
      c.height = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.width") {
      c.width = static_cast<int>(text::parse_int(value, key));
    } else if (key == "generator.pairs") {
      if (value == "held_out") c.pairs = PairProtocol::held_out;
      else if (value == "all") c.pairs = PairProtocol::all;
      else throw FormatError("manifest: unknown pairs protocol '" + value + "'");
    } else if (key == "generator.classes") {
      c.classes = text::parse_int_list(value, key);
    } else if (key == "subject") {
      const auto f = text::split(value, ',');
      if (f.size() != 4) throw FormatError("manifest: malformed subject line");
      ds.subjects.push_back({f[0], text::parse_double(f[1], "limb_scale"), text::parse_double(f[2], "tempo"),
                             text::parse_double(f[3], "jitter_std")});
    } else if (key == "scene") {
      const auto f = text::split(value, ',');
      if (f.size() < 4) throw FormatError("manifest: malformed scene line");
      SceneLayout s;
      s.id = f[0];
      s.wall_depth = text::parse_double(f[1], "wall_depth");
      auto as_int = [&](std::size_t i) { return static_cast<int>(text::parse_int(f[i], "scene")); };
      s.floor_row = as_int(2);
      const std::size_t windows = static_cast<std::size_t>(std::max(0, as_int(3)));
      const std::size_t first_furniture = 4 + 4 * windows;
      if (f.size() < first_furniture || (f.size() - first_furniture) % 5 != 0)
        throw FormatError("manifest: malformed scene line");
      for (std::size_t i = 4; i < first_furniture; i += 4)
        s.windows.push_back({as_int(i), as_int(i + 1), as_int(i + 2), as_int(i + 3)});
      for (std::size_t i = first_furniture; i < f.size(); i += 5)
        s.furniture.push_back(
            {{as_int(i), as_int(i + 1), as_int(i + 2), as_int(i + 3)}, text::parse_double(f[i + 4], "depth")});
      ds.scenes.push_back(std::move(s));
    } else if (key == "sequences") {
      ids = text::parse_int_list(value, key);
      have_ids = true;
    } else {
      throw FormatError("manifest: unknown key '" + key + "'");
    }
  }
  if (!have_ids) throw FormatError("manifest: missing key 'sequences'");

  ds.samples.reserve(ids.size());
  for (int id : ids) {
    const fs::path seq = dir / ("seq_" + std::to_string(id));
    const std::string ctx = "sequence " + std::to_string(id);
    const auto meta = to_map(read_key_values(seq / "meta.txt", ctx));
    if (require(meta, "version", ctx) != kFormatVersion)
      throw FormatError(ctx + ": unknown format version '" + meta.at("version") + "'");
    SequenceSample s;
    auto geti = [&](const char* key) { return static_cast<int>(text::parse_int(require(meta, key, ctx), key)); };
    s.sequence_id = geti("sequence_id");
    if (s.sequence_id != id) throw FormatError(ctx + ": sidecar names sequence " + std::to_string(s.sequence_id));
    s.subject = require(meta, "subject", ctx);
    s.scene = require(meta, "scene", ctx);
    s.frames = geti("frames");
    s.height = geti("height");
    s.width = geti("width");
    s.action = geti("action");
    s.scene_label = geti("scene_label");
    if (geti("keypoints") != kNumKeypoints) throw ShapeMismatchError(ctx + ": keypoint count must be 17");
    if (s.frames < 1 || s.height < 1 || s.width < 1) throw FormatError(ctx + ": non-positive shape in sidecar");
    if (s.action < 0 || s.action >= kNumClasses) throw FormatError(ctx + ": action id out of range");
    if (s.scene_label != (is_abnormal(s.action) ? 1 : 0)) throw FormatError(ctx + ": scene_label contradicts action");
    s.skeleton = read_raw<float>(seq / "skeleton.f32", kNumKeypoints * 2, s.frames, id, "skeleton");
    s.depth = read_raw<float>(seq / "depth.f32", s.frame_pixels(), s.frames, id, "depth");
    s.mask = read_raw<std::uint8_t>(seq / "mask.u8", s.frame_pixels(), s.frames, id, "mask");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_splits(const SplitSpec& split, const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << "train:" << text::join_ints(split.train_ids) << "\n"
      << "val:" << text::join_ints(split.val_ids) << "\n"
      << "internal_test:" << text::join_ints(split.internal_test_ids) << "\n"
      << "setting1:" << text::join_ints(split.setting1_ids) << "\n"
      << "setting2:" << text::join_ints(split.setting2_ids) << "\n";
}

SplitSpec read_splits(const fs::path& file) {
  const auto m = to_map(read_key_values(file, "splits"));
  SplitSpec s;
  s.train_ids = text::parse_int_list(require(m, "train", "splits"), "train");
  s.val_ids = text::parse_int_list(require(m, "val", "splits"), "val");
  s.internal_test_ids = text::parse_int_list(require(m, "internal_test", "splits"), "internal_test");
  s.setting1_ids = text::parse_int_list(require(m, "setting1", "splits"), "setting1");
  s.setting2_ids = text::parse_int_list(require(m, "setting2", "splits"), "setting2");
  return s;
}

}  // namespace smart
