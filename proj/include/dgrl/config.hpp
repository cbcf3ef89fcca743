#pragma once

// Versioned YAML experiment configuration with DGRL_<SECTION>_<KEY>
// environment overrides.

#include "dgrl/agents.hpp"
#include "dgrl/repr.hpp"
#include "dgrl/theory.hpp"
#include "dgrl/vq.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dgrl::harness {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { pretrain, goal_dqn, hier_keychest, ood_eval, factor_demo, theorem_check };

std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(std::string_view name);

struct EnvSection {
  std::string maze = "loop";  // topology name or grid file
  std::filesystem::path maze_file;  // resolved when `maze` names a file
  int horizon = 100;
  int train_goals = 4;
  int test_goals = 4;
};

struct ReprSection {
  repr::PretrainConfig pretrain;
  int corpus_size = 10000;
  std::string dataset = "maze";  // maze | synthetic
  std::filesystem::path checkpoint;  // optional pretrained model
};

struct AgentSection {
  agents::DqnConfig dqn;
  std::vector<agents::ReprMode> modes{agents::ReprMode::discrete, agents::ReprMode::continuous};
};

struct HierSection {
  agents::HierConfig hier;  // hier.low mirrors the agent section
  bool flat_baseline = true;
};

struct TheorySection {
  theory::BoundCheckConfig check;
  std::vector<double> levels{0.25, 0.75};
  bool agent_value = false;
  int agent_rollouts = 32;
  double agent_epsilon = 0.05;
};

struct DemoSection {
  int shapes = 5;
  int colors = 5;
  std::vector<std::pair<int, int>> holdout{{0, 1}, {1, 3}, {2, 0}, {3, 4}, {4, 2}};
  int samples_per_combo = 40;
  int image_size = 16;
};

struct SweepSection {
  std::string axis;  // empty, G, seeds or goal_count
  std::vector<std::int64_t> values;
};

struct PlotInput {
  std::string label;
  std::filesystem::path path;
};

struct PlotSection {
  std::vector<PlotInput> inputs;
  std::string x = "episode";
  std::string y = "return_ext";
  int smooth = 10;
  std::string title;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind kind = ExperimentKind::goal_dqn;
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  EnvSection env;
  vq::VqConfig vq;
  ReprSection repr;
  AgentSection agent;
  HierSection hier;
  TheorySection theory;
  DemoSection demo;
  SweepSection sweep;
  PlotSection plot;
  std::filesystem::path output_dir = "runs";
  std::filesystem::path base_dir = ".";  // directory of the config file

  // Cross-field checks; throws ConfigError naming the field.
  void validate() const;
};

using EnvOverrides = std::vector<std::pair<std::string, std::string>>;

// DGRL_* variables from the process environment.
EnvOverrides overrides_from_environment();

ExperimentConfig parse_config(std::string_view yaml_text, const std::filesystem::path& base_dir,
                              const EnvOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, bool apply_environment = true);

// Sorted "section.key=value" lines of every effective setting (output
// directory excluded), so reordering keys in the file does not change it.
std::string canonical_text(const ExperimentConfig& config);
std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash(const ExperimentConfig& config);

}  // namespace dgrl::harness
