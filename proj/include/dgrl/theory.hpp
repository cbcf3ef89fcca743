#pragma once

// Empirical check of the discretized-goal generalization bound:
//   E[phi o s(g)] >= mean_i phi o s(g_i) - M sqrt(2 |Q| ln(2/delta) / n) - [s = id] omega
// where s is either the identity or the goal quantizer q.

#include "dgrl/agents.hpp"
#include "dgrl/nn.hpp"
#include "dgrl/vq.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgrl::theory {

using nn::Vector;

enum class Sigma { identity, quantized };

std::string_view to_string(Sigma s);

using GoalSampler = std::function<Vector(Rng&)>;

// q(g) lives in code space (compared under the Euclidean distance);
// representative(g) is the goal that phi o q evaluates, a point of the
// goal space standing for g's quantization class.
struct GoalQuantizer {
  std::function<Vector(const Vector&)> code;
  std::function<Vector(const Vector&)> representative;
  std::vector<Vector> values;  // the distinct quantized values, fixed order
};

// Quantizer on [0,1]^dims with one factor per coordinate and a shared
// scalar codebook `levels`; values are listed lexicographically.
GoalQuantizer grid_quantizer(std::span<const double> levels, int dims);

// Lowest index among equally near values.
int nearest_value(const Vector& quantized, std::span<const Vector> values);

struct GoalPartition {
  std::vector<Vector> values;                 // Q with its fixed order
  std::vector<int> assignment;                // neighbourhood of each sampled goal
  std::vector<std::vector<int>> index_sets;   // I_k: sample positions in neighbourhood k

  std::vector<int> active() const;            // k with |I_k| >= 1
  std::size_t sample_size() const { return assignment.size(); }
};

// Throws UsageError on an empty sample.
GoalPartition partition_goals(std::span<const Vector> goals, const GoalQuantizer& quantizer);

// (1/n) sum_{k active} |I_k| (mean_{i in I_k} phi_i - E[phi | G_k]).
// Means are running means, so constant groups reproduce their value exactly.
double omega(std::span<const double> phi_values, const GoalPartition& partition,
             std::span<const double> conditional_expectations);

// M * sqrt(2 |Q| ln(2/delta) / n); UsageError unless n >= 1 and 0 < delta < 1.
double concentration_term(std::int64_t n, double delta, int q_count, double m);

struct ValueModel {
  std::string name;
  std::function<double(const Vector&)> phi;
  double bound = 1.0;       // M >= sup |phi|
  bool bound_estimated = false;
  bool bound_at_boundary = false;
};

ValueModel constant_value(double c = 1.0);
// g0 + 0.5 g1 on the unit square.
ValueModel linear_value();
// A level per neighbourhood plus bounded high-frequency noise.
ValueModel piecewise_value(const GoalQuantizer& quantizer);
std::vector<ValueModel> synthetic_suite(const GoalQuantizer& quantizer);

GoalSampler uniform_unit_square();

struct BoundReport {
  int n = 0;
  int trial = 0;
  Sigma sigma = Sigma::identity;
  double delta = 0.05;
  double empirical_mean = 0.0;
  double true_expectation = 0.0;
  double omega_hat = 0.0;
  double concentration = 0.0;
  double lhs = 0.0;  // true expectation
  double rhs = 0.0;  // empirical mean - concentration - [identity] omega
  bool holds = false;
};

struct BoundCheckConfig {
  std::vector<int> n_list{10, 100, 1000};
  double delta = 0.05;
  int trials = 500;
  int expectation_samples = 100000;
  int min_conditional_samples = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// E[phi o s | G_k] per neighbourhood by rejection sampling from the goal
// distribution; every neighbourhood with positive mass gets at least
// `min_samples` accepted draws.
std::vector<double> conditional_expectations(const ValueModel& model, const GoalSampler& sampler,
                                             const GoalQuantizer& quantizer, Sigma sigma,
                                             int min_samples, Rng& rng);

std::vector<BoundReport> verify_bound(const ValueModel& model, const GoalSampler& sampler,
                                      const GoalQuantizer& quantizer, Sigma sigma,
                                      const BoundCheckConfig& config);

struct BoundSummary {
  int n = 0;
  Sigma sigma = Sigma::identity;
  int trials = 0;
  double holds_fraction = 0.0;
  double median_abs_omega = 0.0;
  double omega_iqr = 0.0;
  double max_abs_omega = 0.0;
};

std::vector<BoundSummary> summarize(std::span<const BoundReport> reports);

// Smallest holds-fraction consistent with 1 - delta at three binomial
// standard deviations over `trials`.
double holds_fraction_floor(double delta, int trials);

// ---- value of a trained goal-reaching agent ----

// Mean epsilon-greedy return over `rollouts` episodes for every goal.
std::vector<double> agent_goal_values(const agents::GoalDqn& agent, agents::ReprCache& cache,
                                      std::span<const env::Cell> goals, int rollouts,
                                      double epsilon, std::uint64_t seed, int horizon = 100);

// Goals are indices into `goals` carried as 1-vectors; the quantizer maps
// them to their z_q and the representative is the lowest-index goal with
// the same factor tuple. M is the empirical max |phi|, flagged when it is
// attained at either end of the goal list.
struct AgentBoundSetup {
  ValueModel model;
  GoalQuantizer quantizer;
  GoalSampler sampler;
};

AgentBoundSetup agent_bound_setup(std::span<const double> goal_values,
                                  std::span<const env::Cell> goals, agents::ReprCache& cache);

}  // namespace dgrl::theory
