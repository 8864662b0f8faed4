#pragma once

// Run configuration: plain `key=value` lines with dotted sections
// (`train.lr=0.001`). Blank lines and `#` comments are ignored; unknown keys
// are rejected. The echo is canonical and parses back to the same config.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smart/metrics.hpp"
#include "smart/model.hpp"
#include "smart/synthgen.hpp"
#include "smart/training.hpp"

namespace smart {

enum class Composition { full, no_scene, no_fusion };

std::string composition_name(Composition c);
Composition parse_composition(const std::string& name);

struct AblationGrid {
  std::vector<SceneInfo> scene_info = {SceneInfo::none, SceneInfo::depth, SceneInfo::mask, SceneInfo::both};
  std::vector<FusionKind> fusion = {FusionKind::smart};
  std::vector<Composition> composition = {Composition::full};
};

struct RunConfig {
  GeneratorConfig generator;
  SplitProtocol split;
  ModelConfig model;
  TrainConfig train;
  std::string data_dir = "data";
  std::string out_dir = "run";
  std::string checkpoint;  // empty: <out_dir>/checkpoint.bin
  std::vector<Scope> scopes = {Scope::overall, Scope::setting1, Scope::setting2};
  std::vector<ClassScope> classes = {ClassScope::all, ClassScope::abnormal};
  AblationGrid ablate;
};

/// Throws ConfigError naming the line for syntax errors, unknown keys and bad
/// values, and validates the resulting sections.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& file);
std::string config_echo(const RunConfig& config);

/// Applies the composition switch: no_scene drops the scene branch, no_fusion
/// replaces the fusion head with plain concatenation.
ModelConfig apply_composition(ModelConfig model, Composition c);

}  // namespace smart
