#include "smart/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "smart/error.hpp"
#include "smart/text.hpp"

namespace smart {

std::string composition_name(Composition c) {
  switch (c) {
    case Composition::full: return "full";
    case Composition::no_scene: return "no_scene";
    case Composition::no_fusion: return "no_fusion";
  }
  return "?";
}

Composition parse_composition(const std::string& name) {
  if (name == "full") return Composition::full;
  if (name == "no_scene") return Composition::no_scene;
  if (name == "no_fusion") return Composition::no_fusion;
  throw ConfigError("unknown composition '" + name + "'");
}

ModelConfig apply_composition(ModelConfig model, Composition c) {
  if (c == Composition::no_scene) model.use_scene_module = false;
  if (c == Composition::no_fusion) model.fusion = FusionKind::concat;
  return model;
}

namespace {

using text::format_double;

// One configurable key: how to read a value into the config and how to print it.
struct Binding {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

int to_int(const std::string& v, const std::string& key) { return static_cast<int>(text::parse_int(v, key)); }

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& v, Parse parse) {
  std::vector<T> out;
  for (const auto& item : text::split(v, ',')) {
    const std::string name(text::trim(item));
    if (!name.empty()) out.push_back(parse(name));
  }
  return out;
}

template <class T, class Name>
std::string join(const std::vector<T>& items, Name name) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + name(items[i]);
  return out;
}

#define INT_KEY(name, field)                                                      \
  Binding {                                                                       \
    name, [](RunConfig& c, const std::string& v) { c.field = to_int(v, name); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }               \
  }
#define DOUBLE_KEY(name, field)                                                                 \
  Binding {                                                                                     \
    name, [](RunConfig& c, const std::string& v) { c.field = text::parse_double(v, name); },   \
        [](const RunConfig& c) { return format_double(c.field); }                               \
  }
#define SEED_KEY(name, field)                                                                              \
  Binding {                                                                                                \
    name, [](RunConfig& c, const std::string& v) { c.field = static_cast<std::uint64_t>(text::parse_int(v, name)); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                                         \
  }
#define STRING_KEY(name, field)                                            \
  Binding {                                                                \
    name, [](RunConfig& c, const std::string& v) { c.field = v; },        \
        [](const RunConfig& c) { return c.field; }                         \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      SEED_KEY("generator.seed", generator.seed),
      INT_KEY("generator.subjects", generator.subjects),
      INT_KEY("generator.scenes", generator.scenes),
      INT_KEY("generator.clips_per_class", generator.clips_per_class),
      INT_KEY("generator.frames", generator.frames),
      INT_KEY("generator.height", generator.height),
      INT_KEY("generator.width", generator.width),
      Binding{"generator.pairs",
              [](RunConfig& c, const std::string& v) {
                if (v == "held_out") c.generator.pairs = PairProtocol::held_out;
                else if (v == "all") c.generator.pairs = PairProtocol::all;
                else throw ConfigError("generator.pairs: expected held_out or all, got '" + v + "'");
              },
              [](const RunConfig& c) { return std::string(c.generator.pairs == PairProtocol::held_out ? "held_out" : "all"); }},
      Binding{"generator.classes",
              [](RunConfig& c, const std::string& v) {
                c.generator.classes = parse_list<int>(v, [](const std::string& n) { return action_id(n); });
              },
              [](const RunConfig& c) {
                return join(c.generator.classes,
                            [](int id) { return std::string(action_classes()[static_cast<std::size_t>(id)].name); });
              }},
      Binding{"split.protocol",
              [](RunConfig& c, const std::string& v) {
                if (v == "held_out") c.split.kind = SplitProtocol::Kind::held_out;
                else if (v == "random") c.split.kind = SplitProtocol::Kind::random;
                else throw ConfigError("split.protocol: expected held_out or random, got '" + v + "'");
              },
              [](const RunConfig& c) {
                return std::string(c.split.kind == SplitProtocol::Kind::held_out ? "held_out" : "random");
              }},
      Binding{"split.fractions",
              [](RunConfig& c, const std::string& v) {
                const auto parts = text::split(v, ',');
                if (parts.size() != 3) throw ConfigError("split.fractions: expected three comma-separated values");
                for (std::size_t i = 0; i < 3; ++i) c.split.fractions[i] = text::parse_double(parts[i], "split.fractions");
              },
              [](const RunConfig& c) {
                return format_double(c.split.fractions[0]) + "," + format_double(c.split.fractions[1]) + "," +
                       format_double(c.split.fractions[2]);
              }},
      SEED_KEY("split.seed", split.seed),
      STRING_KEY("model.skeleton_encoder", model.skeleton_encoder),
      INT_KEY("model.d_k", model.skeleton.out_dim),
      INT_KEY("model.skeleton_hidden", model.skeleton.hidden),
      INT_KEY("model.temporal_kernel", model.skeleton.kernel),
      INT_KEY("model.d_j", model.attention.out_dim),
      INT_KEY("model.attention_hidden", model.attention.hidden),
      INT_KEY("model.attention_clip", model.attention.clip),
      INT_KEY("model.d_e", model.siamese.embed),
      INT_KEY("model.roi", model.siamese.roi),
      INT_KEY("model.channels1", model.siamese.channels1),
      INT_KEY("model.channels2", model.siamese.channels2),
      INT_KEY("model.d_fuse", model.fuse_dim),
      INT_KEY("model.weight_hidden", model.weight_hidden),
      DOUBLE_KEY("model.depth_max", model.depth_max),
      Binding{"model.scene_info",
              [](RunConfig& c, const std::string& v) { c.model.scene_info = parse_scene_info(v); },
              [](const RunConfig& c) { return scene_info_name(c.model.scene_info); }},
      Binding{"model.fusion", [](RunConfig& c, const std::string& v) { c.model.fusion = parse_fusion(v); },
              [](const RunConfig& c) { return fusion_name(c.model.fusion); }},
      Binding{"model.use_scene_module",
              [](RunConfig& c, const std::string& v) { c.model.use_scene_module = to_bool(v, "model.use_scene_module"); },
              [](const RunConfig& c) { return std::string(c.model.use_scene_module ? "true" : "false"); }},
      DOUBLE_KEY("train.lr", train.lr),
      INT_KEY("train.batch_size", train.batch_size),
      INT_KEY("train.patience", train.patience),
      DOUBLE_KEY("train.plateau_factor", train.plateau_factor),
      DOUBLE_KEY("train.min_lr", train.min_lr),
      DOUBLE_KEY("train.weight_decay", train.weight_decay),
      INT_KEY("train.max_epochs", train.max_epochs),
      INT_KEY("train.max_reductions", train.max_reductions),
      SEED_KEY("train.seed", train.seed),
      DOUBLE_KEY("train.beta1", train.beta1),
      DOUBLE_KEY("train.beta2", train.beta2),
      DOUBLE_KEY("train.eps", train.eps),
      STRING_KEY("data.dir", data_dir),
      STRING_KEY("run.out", out_dir),
      STRING_KEY("evaluate.checkpoint", checkpoint),
      Binding{"evaluate.scopes",
              [](RunConfig& c, const std::string& v) { c.scopes = parse_list<Scope>(v, parse_scope); },
              [](const RunConfig& c) { return join(c.scopes, scope_name); }},
      Binding{"evaluate.classes",
              [](RunConfig& c, const std::string& v) { c.classes = parse_list<ClassScope>(v, parse_class_scope); },
              [](const RunConfig& c) { return join(c.classes, class_scope_name); }},
      Binding{"ablate.scene_info",
              [](RunConfig& c, const std::string& v) { c.ablate.scene_info = parse_list<SceneInfo>(v, parse_scene_info); },
              [](const RunConfig& c) { return join(c.ablate.scene_info, scene_info_name); }},
      Binding{"ablate.fusion",
              [](RunConfig& c, const std::string& v) { c.ablate.fusion = parse_list<FusionKind>(v, parse_fusion); },
              [](const RunConfig& c) { return join(c.ablate.fusion, fusion_name); }},
      Binding{"ablate.composition",
              [](RunConfig& c, const std::string& v) {
                c.ablate.composition = parse_list<Composition>(v, parse_composition);
              },
              [](const RunConfig& c) { return join(c.ablate.composition, composition_name); }},
  };
  return table;
}

#undef INT_KEY
#undef DOUBLE_KEY
#undef SEED_KEY
#undef STRING_KEY

void validate(const RunConfig& c) {
  validate(c.generator);
  validate(c.train);
  const auto& m = c.model;
  if (m.skeleton.out_dim < 1 || m.skeleton.hidden < 1 || m.skeleton.kernel < 1 || m.skeleton.kernel % 2 == 0)
    throw ConfigError("model.d_k and model.skeleton_hidden must be >= 1, model.temporal_kernel odd and >= 1");
  if (m.attention.out_dim < 1 || m.attention.hidden < 1 || m.attention.clip < 0)
    throw ConfigError("model.d_j and model.attention_hidden must be >= 1, model.attention_clip >= 0");
  if (m.siamese.embed < 1 || m.siamese.roi < 8 || m.siamese.channels1 < 1 || m.siamese.channels2 < 1)
    throw ConfigError("model.d_e, model.channels1/2 must be >= 1 and model.roi >= 8");
  if (m.fuse_dim < 1 || m.weight_hidden < 1) throw ConfigError("model.d_fuse and model.weight_hidden must be >= 1");
  if (!(m.depth_max > 0)) throw ConfigError("model.depth_max must be > 0");
  if (!m.learned_skeleton()) frozen_skeleton_encoder(m.skeleton_encoder);
  if (c.scopes.empty() || c.classes.empty()) throw ConfigError("evaluate.scopes and evaluate.classes must not be empty");
  if (c.ablate.scene_info.empty() || c.ablate.fusion.empty() || c.ablate.composition.empty())
    throw ConfigError("ablate lists must not be empty");
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  std::map<std::string, const Binding*> by_key;
  for (const auto& b : bindings()) by_key[b.key] = &b;
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = text::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key=value");
    const std::string key(text::trim(body.substr(0, eq)));
    const std::string value(text::trim(body.substr(eq + 1)));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      it->second->set(config, value);
    } catch (const Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_echo(const RunConfig& config) {
  std::string out;
  for (const auto& b : bindings()) out += b.key + "=" + b.get(config) + "\n";
  return out;
}

}  // namespace smart
