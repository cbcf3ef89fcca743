#pragma once

// Goal-conditioned DQN over frozen pretrained representations, the
// factor-match intrinsic reward, and a two-level agent for KeyChest.

#include "dgrl/envs.hpp"
#include "dgrl/nn.hpp"
#include "dgrl/repr.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dgrl::agents {

using nn::DenseMatrix;
using nn::Vector;

enum class ReprMode { discrete, continuous };

std::string_view to_string(ReprMode m);
ReprMode repr_mode_from_string(std::string_view name);

// ---- representations ----

struct CachedRepr {
  Vector z_e;
  Vector z_q;
  std::vector<int> codes;

  const Vector& get(ReprMode mode) const { return mode == ReprMode::discrete ? z_q : z_e; }
};

// Encodes each distinct rendered observation once. The encoder is frozen,
// so an observation is identified by (render mode, agent, goal, has_key).
class ReprCache {
 public:
  // Throws UsageError when the model has not been trained.
  ReprCache(const repr::EncoderDecoder& model, env::MazeSpec maze, int downsample_size);

  int state_id(const env::GridState& state) const;
  // Goal observation: the agent standing on `goal` (holding the key when the
  // goal is the key cell or it is already held).
  int goal_id(env::Cell goal, bool has_key = false) const;
  const CachedRepr& get(int id);

  std::vector<double> observation(int id) const;
  const repr::EncoderDecoder& model() const { return *model_; }
  const env::MazeSpec& maze() const { return maze_; }
  int factors() const { return model_->vq_config().factors; }
  int latent_dim() const { return model_->latent_dim(); }

 private:
  const repr::EncoderDecoder* model_;
  env::MazeSpec maze_;
  int downsample_size_;
  std::vector<std::optional<CachedRepr>> slots_;
};

// (cos(a, b) + 1) / 2; zero vectors score 0.5.
double cosine_reward(const Vector& a, const Vector& b);

// Discrete: fraction of matching factor indices. Continuous: rescaled
// cosine similarity of the continuous latents. Always in [0, 1].
double goal_reward(const CachedRepr& state, const CachedRepr& goal, ReprMode mode);
double goal_reward(std::span<const double> state_obs, std::span<const double> goal_obs,
                   const repr::EncoderDecoder& model, ReprMode mode);

// ---- replay ----

struct Transition {
  int state = 0;       // representation ids
  int goal = -1;       // -1 when the learner is not goal-conditioned
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  double discount = 0.0;  // gamma^k, zero at terminal transitions
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }
  // Distinct indices within one batch, uniform over stored transitions.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

// ---- DQN ----

struct DqnConfig {
  double gamma = 0.95;
  int buffer_capacity = 50000;
  int batch_size = 64;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.3;
  int target_period = 200;
  int warmup = 500;
  int hidden = 128;
  double lr = 1e-3;
  double intrinsic_weight = 0.1;
  int episodes = 500;
  int eval_period = 10;
  double success_target = 0.9;
  bool stop_at_target = false;
  std::uint64_t seed = 0;

  void validate() const;
  // Linear from epsilon_start to epsilon_end over the first
  // epsilon_decay_fraction of `total` episodes, then flat.
  double epsilon_at(int episode, int total) const;
};

int greedy_action(std::span<const double> q_values);
int select_action(std::span<const double> q_values, double epsilon, Rng& rng);

struct TdBatch {
  DenseMatrix inputs;
  std::vector<int> actions;
  std::vector<double> rewards;
  DenseMatrix next_inputs;
  std::vector<double> discounts;
};

class Dqn {
 public:
  Dqn() = default;
  Dqn(int input_dim, int actions, const DqnConfig& config, Rng& rng);

  Vector q_values(const Vector& input) const { return q_net_.forward(input); }
  // Mean squared TD error against r + discount * max_a' Q_target(s', a');
  // one Adam step on the online net. The target net is copied from the
  // online net after every `target_period` updates.
  double td_update(const TdBatch& batch);
  void sync_target() { target_net_ = q_net_; }

  const nn::Mlp& q_net() const { return q_net_; }
  const nn::Mlp& target_net() const { return target_net_; }
  nn::Mlp& mutable_q_net() { return q_net_; }
  std::int64_t updates() const { return updates_; }
  int input_dim() const { return static_cast<int>(q_net_.in_dim()); }
  int actions() const { return static_cast<int>(q_net_.out_dim()); }

 private:
  nn::Mlp q_net_;
  nn::Mlp target_net_;
  nn::Adam optimizer_;
  int target_period_ = 200;
  std::int64_t updates_ = 0;
};

struct GoalDqn {
  Dqn dqn;
  ReprMode mode = ReprMode::discrete;
  double gamma = 0.95;
};

// concat(state representation, goal representation).
Vector goal_input(const CachedRepr& state, const CachedRepr& goal, ReprMode mode);

struct EpisodeMetrics {
  int seed = 0;
  int episode = 0;
  int goal_id = 0;
  int steps = 0;
  double return_ext = 0.0;
  double return_int = 0.0;
  bool success = false;
};

struct GoalEval {
  env::Cell goal;
  double success_fraction = 0.0;
  double mean_steps = 0.0;
  int steps_to_first_success = 0;  // horizon when never solved
};

struct EvalReport {
  std::vector<GoalEval> goals;
  double success_rate = 0.0;
  std::int64_t total_steps = 0;  // sum of steps_to_first_success
};

// epsilon = 0 is the greedy policy; larger values are used to compare
// against a random walk.
EvalReport evaluate(const GoalDqn& agent, ReprCache& cache, std::span<const env::Cell> goals,
                    int episodes_per_goal, int horizon, double epsilon = 0.0, Rng* rng = nullptr);

struct EvalPoint {
  int episode = 0;  // training episodes completed
  std::int64_t env_steps = 0;
  double success_rate = 0.0;
};

struct GoalDqnRun {
  GoalDqn agent;
  std::vector<EpisodeMetrics> metrics;
  std::vector<EvalPoint> curve;
  // First evaluation reaching success_target; censored at the budget.
  int episodes_to_target = 0;
  std::int64_t steps_to_target = 0;
  bool reached_target = false;
};

GoalDqnRun train_goal_dqn(ReprCache& cache, std::span<const env::Cell> train_goals,
                          ReprMode mode, const DqnConfig& config, int horizon = 100);

// ---- hierarchy on KeyChest ----

struct HierConfig {
  int period = 10;  // K
  std::int64_t env_step_budget = 30000;
  DqnConfig high;
  DqnConfig low;
  int eval_episodes = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HierAgent {
  Dqn high;           // input z_q(state), one action per floor cell
  GoalDqn low;        // conditioned on z_q(subgoal)
  std::vector<env::Cell> subgoals;
  int period = 10;
};

// Low-level success: match fraction >= 1 - 1 / (2G).
double subgoal_success_threshold(int factors);

struct KeyChestRun {
  std::vector<EpisodeMetrics> metrics;
  std::int64_t env_steps = 0;
  double eval_mean_return = 0.0;
};

struct HierRun : KeyChestRun {
  HierAgent agent;
};

struct FlatRun : KeyChestRun {
  Dqn agent;
};

HierRun train_hier(ReprCache& cache, const HierConfig& config, int horizon = 100);
// Flat DQN on z_q(state) with the extrinsic reward, same step budget.
FlatRun train_flat_keychest(ReprCache& cache, const HierConfig& config, int horizon = 100);

// Greedy returns over seeded random starts.
double evaluate_hier(const HierAgent& agent, ReprCache& cache, int episodes, std::uint64_t seed,
                     int horizon = 100);
double evaluate_flat(const Dqn& agent, ReprCache& cache, int episodes, std::uint64_t seed,
                     int horizon = 100);

}  // namespace dgrl::agents
