#include "dgrl/theory.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dgrl::theory {

std::string_view to_string(Sigma s) { return s == Sigma::identity ? "id" : "q"; }

namespace {

class RunningMean {
 public:
  void add(double x) {
    ++count_;
    mean_ += (x - mean_) / static_cast<double>(count_);
  }
  double mean() const { return mean_; }
  std::int64_t count() const { return count_; }

 private:
  std::int64_t count_ = 0;
  double mean_ = 0.0;
};

Vector apply_sigma(const GoalQuantizer& quantizer, Sigma sigma, const Vector& g) {
  return sigma == Sigma::identity ? g : quantizer.representative(g);
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[hi] * w;
}

}  // namespace

GoalQuantizer grid_quantizer(std::span<const double> levels, int dims) {
  if (levels.empty()) throw ConfigError("grid_quantizer: no levels");
  if (dims < 1) throw ConfigError("grid_quantizer: dims must be >= 1");
  nn::DenseMatrix codes(static_cast<Eigen::Index>(levels.size()), 1);
  for (std::size_t i = 0; i < levels.size(); ++i) codes(static_cast<Eigen::Index>(i), 0) = levels[i];
  vq::VqConfig cfg;
  cfg.factors = dims;
  cfg.codebook_size = static_cast<int>(levels.size());
  const auto cb = vq::Codebook::from_codes(codes, cfg.eta);

  GoalQuantizer q;
  q.code = [cb, cfg](const Vector& g) { return vq::quantize(g, cb, cfg).z_q; };
  q.representative = q.code;
  std::vector<int> digits(static_cast<std::size_t>(dims), 0);
  const int base = static_cast<int>(levels.size());
  while (true) {
    Vector v(dims);
    for (int d = 0; d < dims; ++d) v[d] = levels[static_cast<std::size_t>(digits[static_cast<std::size_t>(d)])];
    q.values.push_back(v);
    int d = dims - 1;
    while (d >= 0 && ++digits[static_cast<std::size_t>(d)] == base) digits[static_cast<std::size_t>(d--)] = 0;
    if (d < 0) break;
  }
  return q;
}

int nearest_value(const Vector& quantized, std::span<const Vector> values) {
  if (values.empty()) throw UsageError("nearest_value: empty value set");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != quantized.size()) throw UsageError("nearest_value: dimension mismatch");
    const double d = (values[i] - quantized).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> GoalPartition::active() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < index_sets.size(); ++k) {
    if (!index_sets[k].empty()) out.push_back(static_cast<int>(k));
  }
  return out;
}

GoalPartition partition_goals(std::span<const Vector> goals, const GoalQuantizer& quantizer) {
  if (goals.empty()) throw UsageError("partition_goals: empty goal sample");
  if (quantizer.values.empty()) throw UsageError("partition_goals: quantizer has no values");
  GoalPartition p;
  p.values = quantizer.values;
  p.index_sets.resize(p.values.size());
  p.assignment.reserve(goals.size());
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const int k = nearest_value(quantizer.code(goals[i]), p.values);
    p.assignment.push_back(k);
    p.index_sets[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
  }
  return p;
}

double omega(std::span<const double> phi_values, const GoalPartition& partition,
             std::span<const double> conditional_expectations) {
  const std::size_t n = partition.sample_size();
  if (n == 0) throw UsageError("omega: empty partition");
  if (phi_values.size() != n) throw UsageError("omega: one phi value per sampled goal is required");
  if (conditional_expectations.size() != partition.index_sets.size()) {
    throw UsageError("omega: one conditional expectation per neighbourhood is required");
  }
  double total = 0.0;
  for (const int k : partition.active()) {
    const auto& members = partition.index_sets[static_cast<std::size_t>(k)];
    const double expected = conditional_expectations[static_cast<std::size_t>(k)];
    if (!std::isfinite(expected)) {
      throw UsageError("omega: neighbourhood " + std::to_string(k) +
                       " has training goals but no conditional expectation");
    }
    RunningMean mean;
    for (const int i : members) mean.add(phi_values[static_cast<std::size_t>(i)]);
    total += static_cast<double>(members.size()) * (mean.mean() - expected);
  }
  return total / static_cast<double>(n);
}

double concentration_term(std::int64_t n, double delta, int q_count, double m) {
  if (n < 1) throw UsageError("concentration_term: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("concentration_term: delta must be in (0, 1)");
  if (q_count < 1) throw UsageError("concentration_term: |Q| must be >= 1");
  if (m < 0.0) throw UsageError("concentration_term: M must be >= 0");
  return m * std::sqrt(2.0 * q_count * std::log(2.0 / delta) / static_cast<double>(n));
}

ValueModel constant_value(double c) {
  return {"constant", [c](const Vector&) { return c; }, std::abs(c), false, false};
}

ValueModel linear_value() {
  return {"linear", [](const Vector& g) { return g[0] + 0.5 * g[1]; }, 1.5, false, false};
}

ValueModel piecewise_value(const GoalQuantizer& quantizer) {
  std::vector<double> levels;
  double peak = 0.0;
  for (std::size_t k = 0; k < quantizer.values.size(); ++k) {
    levels.push_back(0.6 * std::cos(1.3 * static_cast<double>(k) + 0.4));
    peak = std::max(peak, std::abs(levels.back()));
  }
  auto code = quantizer.code;
  auto values = quantizer.values;
  return {"piecewise",
          [levels, code, values](const Vector& g) {
            const int k = nearest_value(code(g), values);
            const double noise = 0.2 * std::sin(20.0 * g[0]) * std::cos(17.0 * g[1]);
            return levels[static_cast<std::size_t>(k)] + noise;
          },
          peak + 0.2, false, false};
}

std::vector<ValueModel> synthetic_suite(const GoalQuantizer& quantizer) {
  return {constant_value(1.0), linear_value(), piecewise_value(quantizer)};
}

GoalSampler uniform_unit_square() {
  return [](Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector g(2);
    g[0] = u(rng);
    g[1] = u(rng);
    return g;
  };
}

void BoundCheckConfig::validate() const {
  if (n_list.empty()) throw ConfigError("theory.n_list must not be empty");
  for (int n : n_list) {
    if (n < 1) throw ConfigError("theory.n_list entries must be >= 1");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("theory.delta must be in (0, 1)");
  if (trials < 1) throw ConfigError("theory.trials must be >= 1");
  if (expectation_samples < 1) throw ConfigError("theory.expectation_samples must be >= 1");
  if (min_conditional_samples < 1) throw ConfigError("theory.min_conditional_samples must be >= 1");
}

std::vector<double> conditional_expectations(const ValueModel& model, const GoalSampler& sampler,
                                             const GoalQuantizer& quantizer, Sigma sigma,
                                             int min_samples, Rng& rng) {
  const std::size_t k_count = quantizer.values.size();
  std::vector<RunningMean> acc(k_count);
  // Neighbourhoods never hit after this many draws are treated as massless.
  const std::int64_t unseen_cap = static_cast<std::int64_t>(min_samples) * static_cast<std::int64_t>(k_count) * 20;
  const std::int64_t hard_cap = 50'000'000;
  for (std::int64_t draws = 1;; ++draws) {
    const Vector g = sampler(rng);
    const int k = nearest_value(quantizer.code(g), quantizer.values);
    acc[static_cast<std::size_t>(k)].add(model.phi(apply_sigma(quantizer, sigma, g)));
    if (draws % 256 != 0) continue;
    bool done = true;
    for (const auto& a : acc) {
      if (a.count() == 0 ? draws < unseen_cap : a.count() < min_samples) {
        done = false;
        break;
      }
    }
    if (done) break;
    if (draws >= hard_cap) throw TrainingFault("conditional_expectations: sampling budget exhausted");
  }
  std::vector<double> out;
  out.reserve(k_count);
  for (const auto& a : acc) {
    out.push_back(a.count() == 0 ? std::numeric_limits<double>::quiet_NaN() : a.mean());
  }
  return out;
}

std::vector<BoundReport> verify_bound(const ValueModel& model, const GoalSampler& sampler,
                                      const GoalQuantizer& quantizer, Sigma sigma,
                                      const BoundCheckConfig& config) {
  config.validate();
  Rng rng(config.seed);
  RunningMean truth;
  for (int i = 0; i < config.expectation_samples; ++i) {
    truth.add(model.phi(apply_sigma(quantizer, sigma, sampler(rng))));
  }
  const auto cond = conditional_expectations(model, sampler, quantizer, sigma,
                                             config.min_conditional_samples, rng);
  const int q_count = static_cast<int>(quantizer.values.size());

  std::vector<BoundReport> out;
  out.reserve(config.n_list.size() * static_cast<std::size_t>(config.trials));
  std::vector<Vector> goals;
  std::vector<double> phi;
  for (const int n : config.n_list) {
    for (int t = 0; t < config.trials; ++t) {
      std::seed_seq seq{config.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t),
                        static_cast<std::uint64_t>(sigma == Sigma::identity ? 0 : 1)};
      Rng trial_rng(seq);
      goals.clear();
      phi.clear();
      for (int i = 0; i < n; ++i) {
        goals.push_back(sampler(trial_rng));
        phi.push_back(model.phi(apply_sigma(quantizer, sigma, goals.back())));
      }
      const auto part = partition_goals(goals, quantizer);
      BoundReport r;
      r.n = n;
      r.trial = t;
      r.sigma = sigma;
      r.delta = config.delta;
      RunningMean emp;
      for (double v : phi) emp.add(v);
      r.empirical_mean = emp.mean();
      r.true_expectation = truth.mean();
      r.omega_hat = omega(phi, part, cond);
      r.concentration = concentration_term(n, config.delta, q_count, model.bound);
      r.lhs = r.true_expectation;
      r.rhs = r.empirical_mean - r.concentration - (sigma == Sigma::identity ? r.omega_hat : 0.0);
      r.holds = r.lhs >= r.rhs;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<BoundSummary> summarize(std::span<const BoundReport> reports) {
  std::map<std::pair<int, int>, std::vector<const BoundReport*>> groups;
  for (const auto& r : reports) groups[{r.sigma == Sigma::identity ? 0 : 1, r.n}].push_back(&r);
  std::vector<BoundSummary> out;
  for (const auto& [key, rs] : groups) {
    BoundSummary s;
    s.sigma = key.first == 0 ? Sigma::identity : Sigma::quantized;
    s.n = key.second;
    s.trials = static_cast<int>(rs.size());
    std::vector<double> abs_omega;
    std::vector<double> omega_values;
    int holds = 0;
    for (const auto* r : rs) {
      holds += r->holds ? 1 : 0;
      abs_omega.push_back(std::abs(r->omega_hat));
      omega_values.push_back(r->omega_hat);
      s.max_abs_omega = std::max(s.max_abs_omega, std::abs(r->omega_hat));
    }
    s.holds_fraction = static_cast<double>(holds) / static_cast<double>(s.trials);
    s.median_abs_omega = quantile(abs_omega, 0.5);
    s.omega_iqr = quantile(omega_values, 0.75) - quantile(omega_values, 0.25);
    out.push_back(s);
  }
  return out;
}

double holds_fraction_floor(double delta, int trials) {
  if (trials < 1) throw UsageError("holds_fraction_floor: trials must be >= 1");
  return (1.0 - delta) - 3.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
}

std::vector<double> agent_goal_values(const agents::GoalDqn& agent, agents::ReprCache& cache,
                                      std::span<const env::Cell> goals, int rollouts,
                                      double epsilon, std::uint64_t seed, int horizon) {
  if (rollouts < 1) throw UsageError("agent_goal_values: rollouts must be >= 1");
  Rng rng(seed);
  env::GoalMazeEnv e(cache.maze(), horizon);
  std::vector<double> out;
  out.reserve(goals.size());
  for (const env::Cell goal : goals) {
    const int gid = cache.goal_id(goal);
    RunningMean ret;
    for (int r = 0; r < rollouts; ++r) {
      e.reset(goal);
      double total = 0.0;
      env::StepResult sr;
      do {
        const Vector in = agents::goal_input(cache.get(cache.state_id(e.state())), cache.get(gid), agent.mode);
        const Vector q = agent.dqn.q_values(in);
        const int a = agents::select_action({q.data(), static_cast<std::size_t>(q.size())}, epsilon, rng);
        sr = e.step(static_cast<env::Action>(a));
        total += sr.reward;
      } while (!sr.done);
      ret.add(total);
    }
    out.push_back(ret.mean());
  }
  return out;
}

AgentBoundSetup agent_bound_setup(std::span<const double> goal_values,
                                  std::span<const env::Cell> goals, agents::ReprCache& cache) {
  if (goals.empty()) throw UsageError("agent_bound_setup: no goals");
  if (goal_values.size() != goals.size()) throw UsageError("agent_bound_setup: one value per goal is required");
  const std::size_t count = goals.size();
  std::vector<Vector> codes;
  std::vector<int> representative(count, 0);
  std::vector<Vector> values;
  std::vector<std::vector<int>> tuples;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& r = cache.get(cache.goal_id(goals[i]));
    codes.push_back(r.z_q);
    const auto it = std::find(tuples.begin(), tuples.end(), r.codes);
    if (it == tuples.end()) {
      tuples.push_back(r.codes);
      values.push_back(r.z_q);
      representative[i] = static_cast<int>(i);
    } else {
      const auto cls = static_cast<std::size_t>(it - tuples.begin());
      for (std::size_t j = 0; j < i; ++j) {
        if (codes[j] == values[cls]) {
          representative[i] = static_cast<int>(j);
          break;
        }
      }
    }
  }
  auto index_of = [count](const Vector& g) {
    const auto i = static_cast<long>(std::lround(g[0]));
    if (i < 0 || i >= static_cast<long>(count)) throw UsageError("goal index out of range");
    return static_cast<std::size_t>(i);
  };
  std::vector<double> table(goal_values.begin(), goal_values.end());

  AgentBoundSetup s;
  s.quantizer.values = values;
  s.quantizer.code = [codes, index_of](const Vector& g) { return codes[index_of(g)]; };
  s.quantizer.representative = [representative, index_of](const Vector& g) {
    Vector out(1);
    out[0] = representative[index_of(g)];
    return out;
  };
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < count; ++i) {
    if (std::abs(table[i]) > std::abs(table[argmax])) argmax = i;
  }
  s.model.name = "agent";
  s.model.phi = [table, index_of](const Vector& g) { return table[index_of(g)]; };
  s.model.bound = std::abs(table[argmax]);
  s.model.bound_estimated = true;
  s.model.bound_at_boundary = argmax == 0 || argmax + 1 == count;
  s.sampler = [count](Rng& rng) {
    Vector g(1);
    g[0] = static_cast<double>(std::uniform_int_distribution<std::size_t>(0, count - 1)(rng));
    return g;
  };
  return s;
}

}  // namespace dgrl::theory
