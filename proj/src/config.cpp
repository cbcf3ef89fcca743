#include "dgrl/config.hpp"

#include "dgrl/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

extern char** environ;

namespace dgrl::harness {

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::pretrain:
      return "pretrain";
    case ExperimentKind::goal_dqn:
      return "goal_dqn";
    case ExperimentKind::hier_keychest:
      return "hier_keychest";
    case ExperimentKind::ood_eval:
      return "ood_eval";
    case ExperimentKind::factor_demo:
      return "factor_demo";
    case ExperimentKind::theorem_check:
      return "theorem_check";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(std::string_view name) {
  for (auto k : {ExperimentKind::pretrain, ExperimentKind::goal_dqn, ExperimentKind::hier_keychest,
                 ExperimentKind::ood_eval, ExperimentKind::factor_demo, ExperimentKind::theorem_check}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("experiment.kind: unknown kind '" + std::string(name) +
                    "' (expected pretrain, goal_dqn, hier_keychest, ood_eval, factor_demo or theorem_check)");
}

namespace {

const std::vector<std::string> kSections{"experiment", "env",   "vq",     "repr",
                                         "agent",      "hier",  "theory", "demo",
                                         "sweep",      "output", "plot"};

template <class T>
std::string type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "a list";
}

class SectionReader {
 public:
  SectionReader(const YAML::Node& root, std::string name) : name_(std::move(name)) {
    const YAML::Node& r = root;
    if (r[name_]) {
      node_ = r[name_];
      if (!node_.IsMap()) throw ConfigError(name_ + ": expected a mapping");
    }
  }

  bool has(const std::string& key) const {
    const YAML::Node& n = node_;
    return n && n.IsMap() && n[key];
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    used_.insert(key);
    if (!has(key)) return false;
    const YAML::Node& n = node_;
    try {
      out = n[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(name_ + "." + key + ": expected " + type_name<T>());
    }
    return true;
  }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    const YAML::Node& n = node_;
    return has(key) ? n[key] : YAML::Node();
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown field " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  YAML::Node node_;
  std::set<std::string> used_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_topology_name(const std::string& s) { return s == "loop" || s == "spiral" || s == "keychest"; }

void read_dqn(SectionReader& s, agents::DqnConfig& d) {
  s.get("gamma", d.gamma);
  s.get("buffer_capacity", d.buffer_capacity);
  s.get("batch_size", d.batch_size);
  s.get("epsilon_start", d.epsilon_start);
  s.get("epsilon_end", d.epsilon_end);
  s.get("epsilon_decay_fraction", d.epsilon_decay_fraction);
  s.get("target_period", d.target_period);
  s.get("warmup", d.warmup);
  s.get("hidden", d.hidden);
  s.get("lr", d.lr);
  s.get("intrinsic_weight", d.intrinsic_weight);
  s.get("episodes", d.episodes);
  s.get("eval_period", d.eval_period);
  s.get("success_target", d.success_target);
  s.get("stop_at_target", d.stop_at_target);
}

}  // namespace

EnvOverrides overrides_from_environment() {
  EnvOverrides out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.substr(0, 5) != "DGRL_") continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace_back(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig parse_config(std::string_view yaml_text, const std::filesystem::path& base_dir,
                              const EnvOverrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");

  for (const auto& [var, value] : overrides) {
    const std::string rest = lower(var.substr(5));
    std::string section;
    for (const auto& s : kSections) {
      if (rest.size() > s.size() + 1 && rest.compare(0, s.size() + 1, s + "_") == 0) section = s;
    }
    if (section.empty()) throw ConfigError("environment override " + var + ": unknown section");
    const std::string key = rest.substr(section.size() + 1);
    YAML::Node parsed;
    try {
      parsed = YAML::Load(value);
    } catch (const YAML::Exception&) {
      throw ConfigError("environment override " + var + ": value is not valid YAML");
    }
    root[section][key] = parsed;
  }

  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "schema_version" && std::find(kSections.begin(), kSections.end(), key) == kSections.end()) {
      throw ConfigError("unknown top-level field '" + key + "'");
    }
  }

  ExperimentConfig c;
  c.base_dir = base_dir;
  if (!root["schema_version"]) throw ConfigError("schema_version: required field is missing");
  try {
    c.schema_version = root["schema_version"].as<int>();
  } catch (const YAML::Exception&) {
    throw ConfigError("schema_version: expected an integer");
  }
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("schema_version: unsupported version " + std::to_string(c.schema_version) +
                      " (this build reads version " + std::to_string(kSchemaVersion) + ")");
  }

  {
    SectionReader s(root, "experiment");
    std::string kind;
    if (!s.get("kind", kind)) throw ConfigError("experiment.kind: required field is missing");
    c.kind = experiment_kind_from_string(kind);
    s.get("name", c.name);
    s.get("seeds", c.seeds);
    s.finish();
  }
  {
    SectionReader s(root, "env");
    s.get("maze", c.env.maze);
    s.get("horizon", c.env.horizon);
    s.get("train_goals", c.env.train_goals);
    s.get("test_goals", c.env.test_goals);
    s.finish();
    if (!is_topology_name(c.env.maze)) {
      c.env.maze_file = base_dir / c.env.maze;
      if (!std::filesystem::exists(c.env.maze_file)) {
        throw ConfigError("env.maze: '" + c.env.maze + "' is neither loop, spiral, keychest nor an existing file (" +
                          c.env.maze_file.string() + ")");
      }
    }
  }
  {
    SectionReader s(root, "vq");
    s.get("factors", c.vq.factors);
    s.get("codebook_size", c.vq.codebook_size);
    s.get("beta", c.vq.beta);
    s.get("eta", c.vq.eta);
    s.get("dead_code_threshold", c.vq.dead_code_threshold);
    s.get("dead_code_patience", c.vq.dead_code_patience);
    s.finish();
  }
  {
    SectionReader s(root, "repr");
    auto& p = c.repr.pretrain;
    s.get("latent_dim", p.latent_dim);
    s.get("hidden", p.hidden);
    s.get("epochs", p.epochs);
    s.get("batch_size", p.batch_size);
    s.get("downsample_size", p.downsample_size);
    s.get("lr", p.lr);
    s.get("bottleneck", p.bottleneck);
    s.get("corpus_size", c.repr.corpus_size);
    s.get("dataset", c.repr.dataset);
    std::string ckpt;
    if (s.get("checkpoint", ckpt) && !ckpt.empty()) {
      c.repr.checkpoint = base_dir / ckpt;
      if (!std::filesystem::exists(c.repr.checkpoint)) {
        throw ConfigError("repr.checkpoint: file not found: " + c.repr.checkpoint.string());
      }
    }
    s.finish();
  }
  {
    SectionReader s(root, "agent");
    read_dqn(s, c.agent.dqn);
    std::vector<std::string> modes;
    if (s.get("modes", modes)) {
      c.agent.modes.clear();
      for (const auto& m : modes) c.agent.modes.push_back(agents::repr_mode_from_string(m));
    }
    s.finish();
  }
  {
    SectionReader s(root, "hier");
    auto& h = c.hier.hier;
    h.low = c.agent.dqn;
    h.high = c.agent.dqn;
    h.high.warmup = 100;
    h.high.target_period = 50;
    h.high.batch_size = 32;
    s.get("period", h.period);
    s.get("env_step_budget", h.env_step_budget);
    s.get("eval_episodes", h.eval_episodes);
    s.get("flat_baseline", c.hier.flat_baseline);
    s.get("high_warmup", h.high.warmup);
    s.get("high_target_period", h.high.target_period);
    s.get("high_batch_size", h.high.batch_size);
    s.get("high_lr", h.high.lr);
    s.get("high_gamma", h.high.gamma);
    s.finish();
  }
  {
    SectionReader s(root, "theory");
    auto& t = c.theory;
    s.get("n_list", t.check.n_list);
    s.get("delta", t.check.delta);
    s.get("trials", t.check.trials);
    s.get("expectation_samples", t.check.expectation_samples);
    s.get("min_conditional_samples", t.check.min_conditional_samples);
    s.get("levels", t.levels);
    s.get("agent_value", t.agent_value);
    s.get("agent_rollouts", t.agent_rollouts);
    s.get("agent_epsilon", t.agent_epsilon);
    s.finish();
  }
  {
    SectionReader s(root, "demo");
    auto& d = c.demo;
    s.get("shapes", d.shapes);
    s.get("colors", d.colors);
    s.get("samples_per_combo", d.samples_per_combo);
    s.get("image_size", d.image_size);
    std::vector<std::vector<int>> pairs;
    if (s.get("holdout", pairs)) {
      d.holdout.clear();
      for (const auto& p : pairs) {
        if (p.size() != 2) throw ConfigError("demo.holdout: each entry must be [shape, color]");
        d.holdout.emplace_back(p[0], p[1]);
      }
    }
    s.finish();
  }
  {
    SectionReader s(root, "sweep");
    s.get("axis", c.sweep.axis);
    s.get("values", c.sweep.values);
    s.finish();
  }
  {
    SectionReader s(root, "output");
    std::string dir;
    if (s.get("dir", dir)) c.output_dir = dir;
    s.finish();
  }
  {
    SectionReader s(root, "plot");
    s.get("x", c.plot.x);
    s.get("y", c.plot.y);
    s.get("smooth", c.plot.smooth);
    s.get("title", c.plot.title);
    const auto inputs = s.raw("inputs");
    if (inputs && !inputs.IsNull()) {
      if (!inputs.IsSequence()) throw ConfigError("plot.inputs: expected a list of {label, path}");
      for (const auto& item : inputs) {
        if (!item.IsMap() || !item["label"] || !item["path"]) {
          throw ConfigError("plot.inputs: each entry needs label and path");
        }
        PlotInput in{item["label"].as<std::string>(), base_dir / item["path"].as<std::string>()};
        if (!std::filesystem::exists(in.path)) {
          throw ConfigError("plot.inputs: file not found: " + in.path.string());
        }
        c.plot.inputs.push_back(std::move(in));
      }
    }
    s.finish();
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds: at least one seed is required");
  if (env.horizon < 1) throw ConfigError("env.horizon must be >= 1");
  if (env.train_goals < 1) throw ConfigError("env.train_goals must be >= 1");
  if (env.test_goals < 0) throw ConfigError("env.test_goals must be >= 0");
  vq.validate();
  repr.pretrain.validate();
  if (repr.pretrain.latent_dim % vq.factors != 0) {
    throw ConfigError("vq.factors: G=" + std::to_string(vq.factors) + " does not divide repr.latent_dim=" +
                      std::to_string(repr.pretrain.latent_dim));
  }
  if (repr.corpus_size < 1) throw ConfigError("repr.corpus_size must be positive");
  if (repr.dataset != "maze" && repr.dataset != "synthetic") {
    throw ConfigError("repr.dataset: expected maze or synthetic, got '" + repr.dataset + "'");
  }
  agent.dqn.validate();
  if (agent.modes.empty()) throw ConfigError("agent.modes: at least one mode is required");
  hier.hier.validate();
  theory.check.validate();
  if (theory.levels.empty()) throw ConfigError("theory.levels must not be empty");
  if (theory.agent_rollouts < 1) throw ConfigError("theory.agent_rollouts must be >= 1");
  if (!(theory.agent_epsilon >= 0.0 && theory.agent_epsilon <= 1.0)) {
    throw ConfigError("theory.agent_epsilon must be in [0, 1]");
  }
  if (kind == ExperimentKind::factor_demo && vq.factors != 2) {
    throw ConfigError("vq.factors: the factor demo uses exactly 2 factor groups");
  }
  if (kind == ExperimentKind::ood_eval && env.test_goals < 1) {
    throw ConfigError("env.test_goals: ood_eval needs at least one test goal");
  }
  if (!sweep.axis.empty()) {
    if (sweep.axis != "G" && sweep.axis != "seeds" && sweep.axis != "goal_count") {
      throw ConfigError("sweep.axis: expected G, seeds or goal_count, got '" + sweep.axis + "'");
    }
    if (sweep.values.empty()) throw ConfigError("sweep.values: list the values to sweep");
    for (const auto v : sweep.values) {
      if (sweep.axis == "G" && (v < 1 || repr.pretrain.latent_dim % v != 0)) {
        throw ConfigError("sweep.values: G=" + std::to_string(v) + " does not divide repr.latent_dim");
      }
      if (sweep.axis == "goal_count" && v < 1) throw ConfigError("sweep.values: goal counts must be >= 1");
      if (sweep.axis == "seeds" && v < 0) throw ConfigError("sweep.values: seeds must be >= 0");
    }
  }
  if (plot.smooth < 1) throw ConfigError("plot.smooth must be >= 1");
}

ExperimentConfig load_config(const std::filesystem::path& path, bool apply_environment) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config(ss.str(), base, apply_environment ? overrides_from_environment() : EnvOverrides{});
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string list(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += num(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out + "]";
}

void add_dqn(std::vector<std::string>& lines, const std::string& p, const agents::DqnConfig& d) {
  lines.push_back(p + "gamma=" + num(d.gamma));
  lines.push_back(p + "buffer_capacity=" + std::to_string(d.buffer_capacity));
  lines.push_back(p + "batch_size=" + std::to_string(d.batch_size));
  lines.push_back(p + "epsilon_start=" + num(d.epsilon_start));
  lines.push_back(p + "epsilon_end=" + num(d.epsilon_end));
  lines.push_back(p + "epsilon_decay_fraction=" + num(d.epsilon_decay_fraction));
  lines.push_back(p + "target_period=" + std::to_string(d.target_period));
  lines.push_back(p + "warmup=" + std::to_string(d.warmup));
  lines.push_back(p + "hidden=" + std::to_string(d.hidden));
  lines.push_back(p + "lr=" + num(d.lr));
  lines.push_back(p + "intrinsic_weight=" + num(d.intrinsic_weight));
  lines.push_back(p + "episodes=" + std::to_string(d.episodes));
  lines.push_back(p + "eval_period=" + std::to_string(d.eval_period));
  lines.push_back(p + "success_target=" + num(d.success_target));
  lines.push_back(p + "stop_at_target=" + std::to_string(d.stop_at_target));
}

}  // namespace

std::string canonical_text(const ExperimentConfig& c) {
  std::vector<std::string> lines;
  lines.push_back("schema_version=" + std::to_string(c.schema_version));
  lines.push_back("experiment.kind=" + std::string(to_string(c.kind)));
  lines.push_back("experiment.name=" + c.name);
  lines.push_back("experiment.seeds=" + list(c.seeds));
  lines.push_back("env.maze=" + c.env.maze);
  lines.push_back("env.horizon=" + std::to_string(c.env.horizon));
  lines.push_back("env.train_goals=" + std::to_string(c.env.train_goals));
  lines.push_back("env.test_goals=" + std::to_string(c.env.test_goals));
  lines.push_back("vq.factors=" + std::to_string(c.vq.factors));
  lines.push_back("vq.codebook_size=" + std::to_string(c.vq.codebook_size));
  lines.push_back("vq.beta=" + num(c.vq.beta));
  lines.push_back("vq.eta=" + num(c.vq.eta));
  lines.push_back("vq.dead_code_threshold=" + num(c.vq.dead_code_threshold));
  lines.push_back("vq.dead_code_patience=" + std::to_string(c.vq.dead_code_patience));
  const auto& p = c.repr.pretrain;
  lines.push_back("repr.latent_dim=" + std::to_string(p.latent_dim));
  lines.push_back("repr.hidden=" + std::to_string(p.hidden));
  lines.push_back("repr.epochs=" + std::to_string(p.epochs));
  lines.push_back("repr.batch_size=" + std::to_string(p.batch_size));
  lines.push_back("repr.downsample_size=" + std::to_string(p.downsample_size));
  lines.push_back("repr.lr=" + num(p.lr));
  lines.push_back("repr.bottleneck=" + std::to_string(p.bottleneck));
  lines.push_back("repr.corpus_size=" + std::to_string(c.repr.corpus_size));
  lines.push_back("repr.dataset=" + c.repr.dataset);
  lines.push_back("repr.checkpoint=" + c.repr.checkpoint.generic_string());
  add_dqn(lines, "agent.", c.agent.dqn);
  std::string modes;
  for (auto m : c.agent.modes) modes += (modes.empty() ? "" : ",") + std::string(agents::to_string(m));
  lines.push_back("agent.modes=[" + modes + "]");
  const auto& h = c.hier.hier;
  lines.push_back("hier.period=" + std::to_string(h.period));
  lines.push_back("hier.env_step_budget=" + std::to_string(h.env_step_budget));
  lines.push_back("hier.eval_episodes=" + std::to_string(h.eval_episodes));
  lines.push_back("hier.flat_baseline=" + std::to_string(c.hier.flat_baseline));
  add_dqn(lines, "hier.high.", h.high);
  const auto& t = c.theory;
  lines.push_back("theory.n_list=" + list(t.check.n_list));
  lines.push_back("theory.delta=" + num(t.check.delta));
  lines.push_back("theory.trials=" + std::to_string(t.check.trials));
  lines.push_back("theory.expectation_samples=" + std::to_string(t.check.expectation_samples));
  lines.push_back("theory.min_conditional_samples=" + std::to_string(t.check.min_conditional_samples));
  lines.push_back("theory.levels=" + list(t.levels));
  lines.push_back("theory.agent_value=" + std::to_string(t.agent_value));
  lines.push_back("theory.agent_rollouts=" + std::to_string(t.agent_rollouts));
  lines.push_back("theory.agent_epsilon=" + num(t.agent_epsilon));
  lines.push_back("demo.shapes=" + std::to_string(c.demo.shapes));
  lines.push_back("demo.colors=" + std::to_string(c.demo.colors));
  std::string held;
  for (const auto& [s, col] : c.demo.holdout) {
    held += (held.empty() ? "" : ",") + std::to_string(s) + ":" + std::to_string(col);
  }
  lines.push_back("demo.holdout=[" + held + "]");
  lines.push_back("demo.samples_per_combo=" + std::to_string(c.demo.samples_per_combo));
  lines.push_back("demo.image_size=" + std::to_string(c.demo.image_size));
  lines.push_back("sweep.axis=" + c.sweep.axis);
  lines.push_back("sweep.values=" + list(c.sweep.values));
  lines.push_back("plot.x=" + c.plot.x);
  lines.push_back("plot.y=" + c.plot.y);
  lines.push_back("plot.smooth=" + std::to_string(c.plot.smooth));
  lines.push_back("plot.title=" + c.plot.title);
  for (const auto& in : c.plot.inputs) {
    lines.push_back("plot.inputs." + in.label + "=" + in.path.generic_string());
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(config))));
  return buf;
}

}  // namespace dgrl::harness
