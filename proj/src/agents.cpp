#include "dgrl/agents.hpp"

#include "dgrl/errors.hpp"
#include "dgrl/vq.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace dgrl::agents {

std::string_view to_string(ReprMode m) {
  return m == ReprMode::discrete ? "discrete" : "continuous";
}

ReprMode repr_mode_from_string(std::string_view name) {
  if (name == "discrete") return ReprMode::discrete;
  if (name == "continuous") return ReprMode::continuous;
  throw ConfigError("unknown representation mode '" + std::string(name) +
                    "' (expected discrete or continuous)");
}

// ---- representations ----

ReprCache::ReprCache(const repr::EncoderDecoder& model, env::MazeSpec maze, int downsample_size)
    : model_(&model), maze_(std::move(maze)), downsample_size_(downsample_size) {
  if (!model.trained()) throw UsageError("representation model has not been trained");
  const int dim = downsample_size * downsample_size * env::kChannels;
  if (dim != model.input_dim()) {
    throw ConfigError("downsample size " + std::to_string(downsample_size) +
                      " does not match the encoder input of " + std::to_string(model.input_dim()));
  }
  maze_.validate();
  const int n = maze_.cell_count();
  slots_.resize(static_cast<std::size_t>(2 * 2 * (n + 1) * n));
}

namespace {

int pack_id(int mode, bool has_key, int goal_index, int agent_index, int n) {
  return ((mode * 2 + (has_key ? 1 : 0)) * (n + 1) + (goal_index + 1)) * n + agent_index;
}

}  // namespace

int ReprCache::state_id(const env::GridState& state) const {
  const int n = maze_.cell_count();
  const int goal = state.goal ? maze_.index(*state.goal) : -1;
  return pack_id(0, state.has_key, goal, maze_.index(state.agent), n);
}

int ReprCache::goal_id(env::Cell goal, bool has_key) const {
  if (!maze_.is_floor(goal)) throw UsageError("goal " + env::to_string(goal) + " is not a floor cell");
  const bool held = has_key || (maze_.key && *maze_.key == goal);
  const int g = maze_.index(goal);
  return pack_id(1, held, g, g, maze_.cell_count());
}

std::vector<double> ReprCache::observation(int id) const {
  const int n = maze_.cell_count();
  if (id < 0 || id >= static_cast<int>(slots_.size())) throw UsageError("representation id out of range");
  const int agent = id % n;
  int rest = id / n;
  const int goal = rest % (n + 1) - 1;
  rest /= (n + 1);
  const bool has_key = (rest % 2) != 0;
  const int mode = rest / 2;
  env::GridState s;
  s.agent = maze_.cell_at(agent);
  if (goal >= 0) s.goal = maze_.cell_at(goal);
  s.has_key = has_key;
  const auto raster =
      env::render_pixels(maze_, s, mode == 0 ? env::RenderMode::state : env::RenderMode::goal);
  return env::downsample(raster, downsample_size_);
}

const CachedRepr& ReprCache::get(int id) {
  if (id < 0 || id >= static_cast<int>(slots_.size())) throw UsageError("representation id out of range");
  auto& slot = slots_[static_cast<std::size_t>(id)];
  if (!slot) {
    const auto obs = observation(id);
    auto q = model_->encode_quantized(obs);
    slot = CachedRepr{std::move(q.z_e), std::move(q.z_q), std::move(q.factor_indices)};
  }
  return *slot;
}

double cosine_reward(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw UsageError("cosine_reward: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.5;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return (c + 1.0) / 2.0;
}

double goal_reward(const CachedRepr& state, const CachedRepr& goal, ReprMode mode) {
  if (mode == ReprMode::discrete) return vq::factor_match_fraction(state.codes, goal.codes);
  return cosine_reward(state.z_e, goal.z_e);
}

double goal_reward(std::span<const double> state_obs, std::span<const double> goal_obs,
                   const repr::EncoderDecoder& model, ReprMode mode) {
  if (!model.trained()) throw UsageError("goal_reward: representation model has not been trained");
  const auto s = model.encode_quantized(state_obs);
  const auto g = model.encode_quantized(goal_obs);
  if (mode == ReprMode::discrete) return vq::factor_match_fraction(s, g);
  return cosine_reward(s.z_e, g.z_e);
}

// ---- replay ----

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[cursor_] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  const std::size_t n = items_.size();
  if (batch == 0 || batch > n) {
    throw UsageError("cannot sample " + std::to_string(batch) + " distinct transitions from " +
                     std::to_string(n));
  }
  // Floyd's algorithm: distinct and uniform.
  std::vector<std::size_t> out;
  out.reserve(batch);
  for (std::size_t j = n - batch; j < n; ++j) {
    const auto t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
  return out;
}

// ---- DQN ----

void DqnConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("agent.gamma must be in [0, 1]");
  if (buffer_capacity < 1) throw ConfigError("agent.buffer_capacity must be positive");
  if (batch_size < 1) throw ConfigError("agent.batch_size must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw ConfigError("agent epsilon values must be in [0, 1]");
  }
  if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0)) {
    throw ConfigError("agent.epsilon_decay_fraction must be in (0, 1]");
  }
  if (target_period < 1) throw ConfigError("agent.target_period must be positive");
  if (warmup < batch_size) throw ConfigError("agent.warmup must be at least agent.batch_size");
  if (hidden < 1) throw ConfigError("agent.hidden must be positive");
  if (!(lr > 0.0)) throw ConfigError("agent.lr must be positive");
  if (!(intrinsic_weight >= 0.0)) throw ConfigError("agent.intrinsic_weight must be >= 0");
  if (episodes < 1) throw ConfigError("agent.episodes must be positive");
  if (eval_period < 1) throw ConfigError("agent.eval_period must be positive");
  if (!(success_target > 0.0 && success_target <= 1.0)) {
    throw ConfigError("agent.success_target must be in (0, 1]");
  }
}

double DqnConfig::epsilon_at(int episode, int total) const {
  const double span = epsilon_decay_fraction * std::max(total, 1);
  const double t = std::clamp(episode / span, 0.0, 1.0);
  return epsilon_start + t * (epsilon_end - epsilon_start);
}

int greedy_action(std::span<const double> q_values) {
  if (q_values.empty()) throw UsageError("greedy_action: no actions");
  int best = 0;
  for (std::size_t a = 1; a < q_values.size(); ++a) {
    if (q_values[a] > q_values[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  return best;
}

int select_action(std::span<const double> q_values, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw UsageError("epsilon must be in [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < epsilon) {
    return std::uniform_int_distribution<int>(0, static_cast<int>(q_values.size()) - 1)(rng);
  }
  return greedy_action(q_values);
}

Dqn::Dqn(int input_dim, int actions, const DqnConfig& config, Rng& rng)
    : target_period_(config.target_period) {
  config.validate();
  const std::array<int, 4> sizes{input_dim, config.hidden, config.hidden, actions};
  q_net_ = nn::Mlp::make(sizes, nn::Activation::relu, nn::Activation::identity, rng);
  target_net_ = q_net_;
  optimizer_ = nn::Adam(q_net_, {.lr = config.lr});
}

double Dqn::td_update(const TdBatch& batch) {
  const auto b = batch.inputs.rows();
  if (b == 0) throw UsageError("td_update: empty batch");
  if (batch.next_inputs.rows() != b || static_cast<Eigen::Index>(batch.actions.size()) != b ||
      static_cast<Eigen::Index>(batch.rewards.size()) != b ||
      static_cast<Eigen::Index>(batch.discounts.size()) != b) {
    throw UsageError("td_update: batch fields disagree in length");
  }
  nn::GradTape tape;
  const DenseMatrix q = q_net_.forward(batch.inputs, &tape);
  const DenseMatrix q_next = target_net_.forward(batch.next_inputs);
  DenseMatrix grad = DenseMatrix::Zero(b, q.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int a = batch.actions[k];
    if (a < 0 || a >= q.cols()) throw UsageError("td_update: action out of range");
    double target = batch.rewards[k];
    if (batch.discounts[k] != 0.0) target += batch.discounts[k] * q_next.row(i).maxCoeff();
    const double err = q(i, a) - target;
    loss += err * err;
    grad(i, a) = 2.0 * err / static_cast<double>(b);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) {
    throw TrainingFault("td_update: non-finite TD loss after " + std::to_string(updates_) + " updates");
  }
  const auto bp = q_net_.backward(tape, grad);
  optimizer_.step(q_net_, bp.params);
  ++updates_;
  if (updates_ % target_period_ == 0) sync_target();
  return loss;
}

Vector goal_input(const CachedRepr& state, const CachedRepr& goal, ReprMode mode) {
  const Vector& s = state.get(mode);
  const Vector& g = goal.get(mode);
  Vector out(s.size() + g.size());
  out << s, g;
  return out;
}

namespace {

void fill_goal_batch(TdBatch& batch, const ReplayBuffer& buf, std::span<const std::size_t> idx,
                     ReprCache& cache, ReprMode mode) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  const auto m = static_cast<Eigen::Index>(cache.get(buf.at(idx[0]).state).get(mode).size());
  batch.inputs.resize(b, 2 * m);
  batch.next_inputs.resize(b, 2 * m);
  batch.actions.resize(idx.size());
  batch.rewards.resize(idx.size());
  batch.discounts.resize(idx.size());
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto& t = buf.at(idx[static_cast<std::size_t>(r)]);
    const auto& g = cache.get(t.goal).get(mode);
    batch.inputs.row(r).head(m) = cache.get(t.state).get(mode).transpose();
    batch.inputs.row(r).tail(m) = g.transpose();
    batch.next_inputs.row(r).head(m) = cache.get(t.next_state).get(mode).transpose();
    batch.next_inputs.row(r).tail(m) = g.transpose();
    batch.actions[static_cast<std::size_t>(r)] = t.action;
    batch.rewards[static_cast<std::size_t>(r)] = t.reward;
    batch.discounts[static_cast<std::size_t>(r)] = t.discount;
  }
}

void fill_state_batch(TdBatch& batch, const ReplayBuffer& buf, std::span<const std::size_t> idx,
                      ReprCache& cache) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  const auto m = static_cast<Eigen::Index>(cache.latent_dim());
  batch.inputs.resize(b, m);
  batch.next_inputs.resize(b, m);
  batch.actions.resize(idx.size());
  batch.rewards.resize(idx.size());
  batch.discounts.resize(idx.size());
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto& t = buf.at(idx[static_cast<std::size_t>(r)]);
    batch.inputs.row(r) = cache.get(t.state).z_q.transpose();
    batch.next_inputs.row(r) = cache.get(t.next_state).z_q.transpose();
    batch.actions[static_cast<std::size_t>(r)] = t.action;
    batch.rewards[static_cast<std::size_t>(r)] = t.reward;
    batch.discounts[static_cast<std::size_t>(r)] = t.discount;
  }
}

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

EvalReport evaluate(const GoalDqn& agent, ReprCache& cache, std::span<const env::Cell> goals,
                    int episodes_per_goal, int horizon, double epsilon, Rng* rng) {
  if (episodes_per_goal < 1) throw UsageError("evaluate: episodes_per_goal must be >= 1");
  if (epsilon > 0.0 && rng == nullptr) throw UsageError("evaluate: epsilon > 0 needs an rng");
  Rng unused(0);
  Rng& r = rng ? *rng : unused;
  env::GoalMazeEnv e(cache.maze(), horizon);
  EvalReport rep;
  double solved = 0.0;
  for (const env::Cell goal : goals) {
    GoalEval ge;
    ge.goal = goal;
    ge.steps_to_first_success = horizon;
    bool first = true;
    const int gid = cache.goal_id(goal);
    for (int ep = 0; ep < episodes_per_goal; ++ep) {
      e.reset(goal);
      env::StepResult sr;
      do {
        const Vector in = goal_input(cache.get(cache.state_id(e.state())), cache.get(gid), agent.mode);
        const Vector q = agent.dqn.q_values(in);
        sr = e.step(static_cast<env::Action>(select_action(as_span(q), epsilon, r)));
      } while (!sr.done);
      const int steps = e.state().steps;
      ge.mean_steps += steps;
      if (sr.reached) {
        ge.success_fraction += 1.0;
        if (first) {
          ge.steps_to_first_success = steps;
          first = false;
        }
      }
    }
    ge.success_fraction /= episodes_per_goal;
    ge.mean_steps /= episodes_per_goal;
    solved += ge.success_fraction;
    rep.total_steps += ge.steps_to_first_success;
    rep.goals.push_back(ge);
  }
  rep.success_rate = goals.empty() ? 0.0 : solved / static_cast<double>(goals.size());
  return rep;
}

GoalDqnRun train_goal_dqn(ReprCache& cache, std::span<const env::Cell> train_goals,
                          ReprMode mode, const DqnConfig& config, int horizon) {
  config.validate();
  if (train_goals.empty()) throw ConfigError("train_goal_dqn: no training goals");
  Rng rng(config.seed);
  const int m = cache.latent_dim();
  GoalDqnRun run;
  run.agent = GoalDqn{Dqn(2 * m, env::kNumActions, config, rng), mode, config.gamma};
  run.episodes_to_target = config.episodes;
  ReplayBuffer buf(static_cast<std::size_t>(config.buffer_capacity));
  env::GoalMazeEnv e(cache.maze(), horizon);
  TdBatch batch;
  std::int64_t env_steps = 0;
  std::vector<int> goal_ids;
  for (const auto g : train_goals) goal_ids.push_back(cache.goal_id(g));

  for (int ep = 0; ep < config.episodes; ++ep) {
    const double eps = config.epsilon_at(ep, config.episodes);
    const auto gi = std::uniform_int_distribution<std::size_t>(0, train_goals.size() - 1)(rng);
    e.reset(train_goals[gi]);
    const int gid = goal_ids[gi];
    EpisodeMetrics met;
    met.seed = static_cast<int>(config.seed);
    met.episode = ep;
    met.goal_id = static_cast<int>(gi);
    int s = cache.state_id(e.state());
    env::StepResult sr;
    do {
      const Vector in = goal_input(cache.get(s), cache.get(gid), mode);
      const Vector q = run.agent.dqn.q_values(in);
      const int a = select_action(as_span(q), eps, rng);
      sr = e.step(static_cast<env::Action>(a));
      ++env_steps;
      const int s2 = cache.state_id(e.state());
      const double r_int = goal_reward(cache.get(s2), cache.get(gid), mode);
      met.return_ext += sr.reward;
      met.return_int += r_int;
      buf.push({s, gid, a, sr.reward + config.intrinsic_weight * r_int, s2,
                sr.reached ? 0.0 : config.gamma});
      if (static_cast<int>(buf.size()) >= config.warmup) {
        const auto idx = buf.sample_indices(static_cast<std::size_t>(config.batch_size), rng);
        fill_goal_batch(batch, buf, idx, cache, mode);
        run.agent.dqn.td_update(batch);
      }
      s = s2;
    } while (!sr.done);
    met.steps = e.state().steps;
    met.success = sr.reached;
    run.metrics.push_back(met);

    if ((ep + 1) % config.eval_period == 0) {
      const auto rep = evaluate(run.agent, cache, train_goals, 1, horizon);
      run.curve.push_back({ep + 1, env_steps, rep.success_rate});
      if (!run.reached_target && rep.success_rate >= config.success_target) {
        run.reached_target = true;
        run.episodes_to_target = ep + 1;
        run.steps_to_target = env_steps;
        if (config.stop_at_target) break;
      }
    }
  }
  if (!run.reached_target) run.steps_to_target = env_steps;
  return run;
}

// ---- hierarchy ----

void HierConfig::validate() const {
  if (period < 1) throw ConfigError("hier.period must be >= 1");
  if (env_step_budget < 1) throw ConfigError("hier.env_step_budget must be positive");
  if (eval_episodes < 1) throw ConfigError("hier.eval_episodes must be positive");
  high.validate();
  low.validate();
}

double subgoal_success_threshold(int factors) {
  if (factors < 1) throw UsageError("subgoal_success_threshold: G must be >= 1");
  return 1.0 - 1.0 / (2.0 * factors);
}

namespace {

int clamp_progress(std::int64_t steps) {
  return static_cast<int>(std::min<std::int64_t>(steps, std::numeric_limits<int>::max()));
}

struct SegmentOutcome {
  double discounted_return = 0.0;
  double discount = 1.0;
};

}  // namespace

HierRun train_hier(ReprCache& cache, const HierConfig& config, int horizon) {
  config.validate();
  const auto& maze = cache.maze();
  if (!maze.key || !maze.chest) throw ConfigError("train_hier needs a KeyChest maze");
  Rng rng(config.seed);
  const int m = cache.latent_dim();
  HierRun run;
  run.agent.subgoals = maze.floor_cells();
  run.agent.period = config.period;
  run.agent.high = Dqn(m, static_cast<int>(run.agent.subgoals.size()), config.high, rng);
  run.agent.low = GoalDqn{Dqn(2 * m, env::kNumActions, config.low, rng), ReprMode::discrete,
                          config.low.gamma};
  const double threshold = subgoal_success_threshold(cache.factors());
  ReplayBuffer high_buf(static_cast<std::size_t>(config.high.buffer_capacity));
  ReplayBuffer low_buf(static_cast<std::size_t>(config.low.buffer_capacity));
  env::KeyChestEnv e(maze, horizon);
  TdBatch batch;
  const int budget = clamp_progress(config.env_step_budget);

  for (int ep = 0; run.env_steps < config.env_step_budget; ++ep) {
    e.reset(rng);
    EpisodeMetrics met;
    met.seed = static_cast<int>(config.seed);
    met.episode = ep;
    met.goal_id = -1;
    int s = cache.state_id(e.state());
    bool done = false;
    bool chest = false;
    while (!done && run.env_steps < config.env_step_budget) {
      const int progress = clamp_progress(run.env_steps);
      const Vector hq = run.agent.high.q_values(cache.get(s).z_q);
      const int c = select_action(as_span(hq), config.high.epsilon_at(progress, budget), rng);
      const int gid = cache.goal_id(run.agent.subgoals[static_cast<std::size_t>(c)], e.state().has_key);
      const int s0 = s;
      SegmentOutcome seg;
      for (int k = 0; k < config.period && !done && run.env_steps < config.env_step_budget; ++k) {
        const Vector in = goal_input(cache.get(s), cache.get(gid), ReprMode::discrete);
        const Vector q = run.agent.low.dqn.q_values(in);
        const double eps = config.low.epsilon_at(clamp_progress(run.env_steps), budget);
        const int a = select_action(as_span(q), eps, rng);
        const auto sr = e.step(static_cast<env::Action>(a));
        ++run.env_steps;
        const int s2 = cache.state_id(e.state());
        const double r_int = goal_reward(cache.get(s2), cache.get(gid), ReprMode::discrete);
        low_buf.push({s, gid, a, r_int, s2, sr.reached ? 0.0 : config.low.gamma});
        if (static_cast<int>(low_buf.size()) >= config.low.warmup) {
          const auto idx = low_buf.sample_indices(static_cast<std::size_t>(config.low.batch_size), rng);
          fill_goal_batch(batch, low_buf, idx, cache, ReprMode::discrete);
          run.agent.low.dqn.td_update(batch);
        }
        seg.discounted_return += seg.discount * sr.reward;
        seg.discount *= config.high.gamma;
        met.return_ext += sr.reward;
        met.return_int += r_int;
        s = s2;
        done = sr.done;
        chest = chest || sr.reached;
        if (r_int >= threshold) break;
      }
      high_buf.push({s0, -1, c, seg.discounted_return, s, chest ? 0.0 : seg.discount});
      if (static_cast<int>(high_buf.size()) >= config.high.warmup) {
        const auto idx = high_buf.sample_indices(static_cast<std::size_t>(config.high.batch_size), rng);
        fill_state_batch(batch, high_buf, idx, cache);
        run.agent.high.td_update(batch);
      }
    }
    met.steps = e.state().steps;
    met.success = chest;
    run.metrics.push_back(met);
  }
  run.eval_mean_return = evaluate_hier(run.agent, cache, config.eval_episodes, config.seed + 7919, horizon);
  return run;
}

FlatRun train_flat_keychest(ReprCache& cache, const HierConfig& config, int horizon) {
  config.validate();
  const auto& maze = cache.maze();
  if (!maze.key || !maze.chest) throw ConfigError("train_flat_keychest needs a KeyChest maze");
  Rng rng(config.seed);
  FlatRun run;
  run.agent = Dqn(cache.latent_dim(), env::kNumActions, config.low, rng);
  ReplayBuffer buf(static_cast<std::size_t>(config.low.buffer_capacity));
  env::KeyChestEnv e(maze, horizon);
  TdBatch batch;
  const int budget = clamp_progress(config.env_step_budget);
  for (int ep = 0; run.env_steps < config.env_step_budget; ++ep) {
    e.reset(rng);
    EpisodeMetrics met;
    met.seed = static_cast<int>(config.seed);
    met.episode = ep;
    met.goal_id = -1;
    int s = cache.state_id(e.state());
    env::StepResult sr;
    do {
      const Vector q = run.agent.q_values(cache.get(s).z_q);
      const double eps = config.low.epsilon_at(clamp_progress(run.env_steps), budget);
      const int a = select_action(as_span(q), eps, rng);
      sr = e.step(static_cast<env::Action>(a));
      ++run.env_steps;
      const int s2 = cache.state_id(e.state());
      buf.push({s, -1, a, sr.reward, s2, sr.reached ? 0.0 : config.low.gamma});
      if (static_cast<int>(buf.size()) >= config.low.warmup) {
        const auto idx = buf.sample_indices(static_cast<std::size_t>(config.low.batch_size), rng);
        fill_state_batch(batch, buf, idx, cache);
        run.agent.td_update(batch);
      }
      met.return_ext += sr.reward;
      s = s2;
    } while (!sr.done && run.env_steps < config.env_step_budget);
    met.steps = e.state().steps;
    met.success = sr.reached;
    run.metrics.push_back(met);
  }
  run.eval_mean_return = evaluate_flat(run.agent, cache, config.eval_episodes, config.seed + 7919, horizon);
  return run;
}

double evaluate_hier(const HierAgent& agent, ReprCache& cache, int episodes, std::uint64_t seed,
                     int horizon) {
  if (episodes < 1) throw UsageError("evaluate_hier: episodes must be >= 1");
  Rng rng(seed);
  env::KeyChestEnv e(cache.maze(), horizon);
  const double threshold = subgoal_success_threshold(cache.factors());
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    e.reset(rng);
    int s = cache.state_id(e.state());
    bool done = false;
    while (!done) {
      const Vector hq = agent.high.q_values(cache.get(s).z_q);
      const int c = greedy_action(as_span(hq));
      const int gid = cache.goal_id(agent.subgoals[static_cast<std::size_t>(c)], e.state().has_key);
      for (int k = 0; k < agent.period && !done; ++k) {
        const Vector q = agent.low.dqn.q_values(goal_input(cache.get(s), cache.get(gid), ReprMode::discrete));
        const auto sr = e.step(static_cast<env::Action>(greedy_action(as_span(q))));
        total += sr.reward;
        s = cache.state_id(e.state());
        done = sr.done;
        if (goal_reward(cache.get(s), cache.get(gid), ReprMode::discrete) >= threshold) break;
      }
    }
  }
  return total / episodes;
}

double evaluate_flat(const Dqn& agent, ReprCache& cache, int episodes, std::uint64_t seed,
                     int horizon) {
  if (episodes < 1) throw UsageError("evaluate_flat: episodes must be >= 1");
  Rng rng(seed);
  env::KeyChestEnv e(cache.maze(), horizon);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    e.reset(rng);
    env::StepResult sr;
    do {
      const Vector q = agent.q_values(cache.get(cache.state_id(e.state())).z_q);
      sr = e.step(static_cast<env::Action>(greedy_action(as_span(q))));
      total += sr.reward;
    } while (!sr.done);
  }
  return total / episodes;
}

}  // namespace dgrl::agents
