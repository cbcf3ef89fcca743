#include "dgrl/harness.hpp"

#include "dgrl/agents.hpp"
#include "dgrl/checkpoint.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/plot.hpp"
#include "dgrl/repr.hpp"
#include "dgrl/theory.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#ifndef DGRL_CODE_VERSION
#define DGRL_CODE_VERSION "unknown"
#endif

namespace dgrl::harness {

namespace fs = std::filesystem;
using io::format_double;
using Clock = std::chrono::steady_clock;

std::string code_version() { return DGRL_CODE_VERSION; }

// ---- manifest ----

Manifest::Manifest(fs::path dir, const ExperimentConfig& config, std::string verb)
    : dir_(std::move(dir)),
      hash_(config_hash(config)),
      kind_(to_string(config.kind)),
      name_(config.name),
      verb_(std::move(verb)) {
  fs::create_directories(dir_);
  save();
}

fs::path Manifest::declare(const std::string& relative, const std::string& seed_label) {
  const auto it = std::find_if(outputs_.begin(), outputs_.end(),
                               [&](const auto& o) { return o.first == relative; });
  if (it == outputs_.end()) outputs_.emplace_back(relative, seed_label);
  save();
  return dir_ / relative;
}

void Manifest::record_timing(const std::string& label, double seconds) {
  timings_.emplace_back(label, seconds);
  save();
}

void Manifest::record_summary(const std::string& key, const std::string& value) {
  summary_.emplace_back(key, value);
}

void Manifest::finish(bool ok, const std::string& error) {
  status_ = ok ? "complete" : "failed";
  error_ = error;
  save();
}

void Manifest::save() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = hash_;
  j["code_version"] = code_version();
  j["experiment"] = {{"kind", kind_}, {"name", name_}, {"verb", verb_}};
  j["status"] = status_;
  j["partial"] = status_ != "complete";
  if (!error_.empty()) j["error"] = error_;
  auto outs = nlohmann::ordered_json::array();
  for (const auto& [path, seed] : outputs_) outs.push_back({{"path", path}, {"seed", seed}});
  j["outputs"] = outs;
  auto t = nlohmann::ordered_json::object();
  for (const auto& [label, secs] : timings_) t[label] = secs;
  j["timings_seconds"] = t;
  auto s = nlohmann::ordered_json::object();
  for (const auto& [k, v] : summary_) s[k] = v;
  j["summary"] = s;
  io::write_text_file(dir_ / "manifest.json", j.dump(2) + "\n");
}

namespace {

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_table(Manifest& m, RunResult& r, const std::string& rel, const std::string& seed,
                 const io::CsvTable& t) {
  const auto path = m.declare(rel, seed);
  io::write_csv(path, t);
  r.outputs.push_back(path);
}

env::MazeSpec load_env_maze(const ExperimentConfig& c) {
  if (!c.env.maze_file.empty()) return env::load_maze_file(c.env.maze_file);
  return env::build_maze(c.env.maze);
}

io::CsvTable metrics_table(const std::vector<agents::EpisodeMetrics>& ms) {
  io::CsvTable t;
  t.header = {"seed", "episode", "goal_id", "steps", "return_ext", "return_int", "success"};
  for (const auto& m : ms) {
    t.add_row({std::to_string(m.seed), std::to_string(m.episode), std::to_string(m.goal_id),
               std::to_string(m.steps), format_double(m.return_ext), format_double(m.return_int),
               m.success ? "1" : "0"});
  }
  return t;
}

io::CsvTable loss_curve_table(const std::vector<repr::EpochStats>& curve) {
  io::CsvTable t;
  t.header = {"epoch", "recon_mse", "commitment", "total", "revived_codes"};
  for (const auto& e : curve) {
    t.add_row({std::to_string(e.epoch), format_double(e.recon_mse), format_double(e.commitment),
               format_double(e.total), std::to_string(e.revived_codes)});
  }
  return t;
}

repr::PretrainConfig pretrain_config(const ExperimentConfig& c, std::uint64_t seed) {
  auto p = c.repr.pretrain;
  p.seed = seed;
  return p;
}

// Pretrained model for a seed: loaded from repr.checkpoint when given,
// otherwise trained on random-rollout observations of `maze`.
repr::EncoderDecoder obtain_model(const ExperimentConfig& c, const env::MazeSpec& maze, std::uint64_t seed,
                                  Manifest& m, RunResult& r) {
  if (!c.repr.checkpoint.empty()) {
    auto model = repr::EncoderDecoder::load(io::CheckpointReader::load(c.repr.checkpoint));
    if (model.vq_config().factors != c.vq.factors || model.latent_dim() != c.repr.pretrain.latent_dim) {
      throw ConfigError("repr.checkpoint: stored model has G=" + std::to_string(model.vq_config().factors) +
                        ", m=" + std::to_string(model.latent_dim()) + " but the config asks for G=" +
                        std::to_string(c.vq.factors) + ", m=" + std::to_string(c.repr.pretrain.latent_dim));
    }
    return model;
  }
  const auto t0 = Clock::now();
  Rng rng(seed * 1000003ULL + 17ULL);
  const auto corpus = repr::collect_random_rollouts(maze, c.repr.corpus_size, c.repr.pretrain.downsample_size,
                                                    c.env.horizon, rng);
  auto res = repr::pretrain(corpus, pretrain_config(c, seed), c.vq);
  const std::string sd = seed_dir(seed);
  write_table(m, r, sd + "/loss_curve.csv", std::to_string(seed), loss_curve_table(res.curve));
  io::CheckpointWriter w;
  res.model.save(w);
  const auto ckpt = m.declare(sd + "/model.ckpt", std::to_string(seed));
  w.save(ckpt);
  r.outputs.push_back(ckpt);
  m.record_timing(sd + "/pretrain", seconds_since(t0));
  return std::move(res.model);
}

// Fraction of floor-cell pairs whose goal observations get different
// factor tuples.
double distinct_tuple_fraction(agents::ReprCache& cache) {
  const auto cells = cache.maze().floor_cells();
  std::vector<std::vector<int>> codes;
  for (const auto c : cells) codes.push_back(cache.get(cache.goal_id(c)).codes);
  std::int64_t pairs = 0, distinct = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      ++pairs;
      distinct += codes[i] != codes[j] ? 1 : 0;
    }
  }
  return pairs ? static_cast<double>(distinct) / static_cast<double>(pairs) : 1.0;
}

// ---- kinds ----

// Freshly initialised networks have an all-zero codebook, so the reference
// is decoder(encoder(x)) without quantization.
double untrained_reconstruction_mse(const ExperimentConfig& c, std::uint64_t seed, const nn::DenseMatrix& data) {
  auto p = pretrain_config(c, seed);
  p.bottleneck = false;
  Rng rng(seed);
  const auto plain = repr::EncoderDecoder::create(static_cast<int>(data.cols()), p, c.vq, rng);
  return repr::reconstruction_mse(plain, data);
}

void run_pretrain(const ExperimentConfig& c, std::uint64_t seed, Manifest& m, RunResult& r) {
  const std::string sd = seed_dir(seed);
  io::CsvTable summary;
  summary.header = {"seed", "dataset", "final_recon_mse", "untrained_recon_mse", "distinct_tuple_fraction",
                    "code_entropy"};
  if (c.repr.dataset == "synthetic") {
    const auto data = repr::build_synthetic_factor_dataset(c.demo.shapes, c.demo.colors, c.demo.holdout, seed,
                                                           c.demo.samples_per_combo, c.demo.image_size);
    const auto t0 = Clock::now();
    auto res = repr::pretrain(data.train_images, pretrain_config(c, seed), c.vq);
    write_table(m, r, sd + "/loss_curve.csv", std::to_string(seed), loss_curve_table(res.curve));
    io::CheckpointWriter w;
    res.model.save(w);
    const auto ckpt = m.declare(sd + "/model.ckpt", std::to_string(seed));
    w.save(ckpt);
    r.outputs.push_back(ckpt);
    m.record_timing(sd + "/pretrain", seconds_since(t0));
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < data.validation_images.rows(); ++i) {
      const auto q = res.model.encode_quantized(
          {data.validation_images.row(i).data(), static_cast<std::size_t>(data.validation_images.cols())});
      idx.insert(idx.end(), q.factor_indices.begin(), q.factor_indices.end());
    }
    summary.add_row({std::to_string(seed), "synthetic",
                     format_double(repr::reconstruction_mse(res.model, data.validation_images)),
                     format_double(untrained_reconstruction_mse(c, seed, data.validation_images)), "nan",
                     format_double(vq::code_usage_entropy(idx, c.vq.codebook_size))});
  } else {
    const auto maze = load_env_maze(c);
    Rng rng(seed * 1000003ULL + 17ULL);
    const auto corpus = repr::collect_random_rollouts(maze, c.repr.corpus_size, c.repr.pretrain.downsample_size,
                                                      c.env.horizon, rng);
    const auto t0 = Clock::now();
    auto res = repr::pretrain(corpus, pretrain_config(c, seed), c.vq);
    write_table(m, r, sd + "/loss_curve.csv", std::to_string(seed), loss_curve_table(res.curve));
    io::CheckpointWriter w;
    res.model.save(w);
    const auto ckpt = m.declare(sd + "/model.ckpt", std::to_string(seed));
    w.save(ckpt);
    r.outputs.push_back(ckpt);
    m.record_timing(sd + "/pretrain", seconds_since(t0));
    const double untrained_mse = untrained_reconstruction_mse(c, seed, corpus);
    agents::ReprCache cache(res.model, maze, c.repr.pretrain.downsample_size);
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < corpus.rows(); ++i) {
      const auto q = res.model.encode_quantized({corpus.row(i).data(), static_cast<std::size_t>(corpus.cols())});
      idx.insert(idx.end(), q.factor_indices.begin(), q.factor_indices.end());
    }
    summary.add_row({std::to_string(seed), "maze", format_double(repr::reconstruction_mse(res.model, corpus)),
                     format_double(untrained_mse), format_double(distinct_tuple_fraction(cache)),
                     format_double(vq::code_usage_entropy(idx, c.vq.codebook_size))});
  }
  write_table(m, r, sd + "/summary.csv", std::to_string(seed), summary);
}

struct GoalRunOutput {
  std::map<std::string, std::vector<agents::EpisodeMetrics>> metrics_by_mode;
};

void run_goal_dqn(const ExperimentConfig& c, std::uint64_t seed, Manifest& m, RunResult& r,
                  GoalRunOutput& plots) {
  const std::string sd = seed_dir(seed);
  const auto maze = load_env_maze(c);
  const auto split = env::canonical_goal_split(maze, c.env.train_goals, c.env.test_goals);
  if (!split.disjoint()) throw ConfigError("env: train and test goals overlap");
  const auto model = obtain_model(c, maze, seed, m, r);
  agents::ReprCache cache(model, maze, c.repr.pretrain.downsample_size);

  io::CsvTable summary;
  summary.header = {"seed", "method", "factors", "train_goals", "episodes_to_target", "steps_to_target",
                    "reached_target", "final_train_success", "test_total_steps", "test_success"};
  for (const auto mode : c.agent.modes) {
    const std::string name(agents::to_string(mode));
    auto dqn = c.agent.dqn;
    dqn.seed = seed;
    const auto t0 = Clock::now();
    const auto run = agents::train_goal_dqn(cache, split.train_goals, mode, dqn, c.env.horizon);
    m.record_timing(sd + "/train_" + name, seconds_since(t0));
    write_table(m, r, sd + "/metrics_" + name + ".csv", std::to_string(seed), metrics_table(run.metrics));
    io::CsvTable curve;
    curve.header = {"seed", "episode", "env_steps", "success_rate"};
    for (const auto& p : run.curve) {
      curve.add_row({std::to_string(seed), std::to_string(p.episode), std::to_string(p.env_steps),
                     format_double(p.success_rate)});
    }
    write_table(m, r, sd + "/curve_" + name + ".csv", std::to_string(seed), curve);

    const auto train_eval = agents::evaluate(run.agent, cache, split.train_goals, 1, c.env.horizon);
    std::string test_steps = "nan";
    std::string test_success = "nan";
    if (!split.test_goals.empty()) {
      const auto test_eval = agents::evaluate(run.agent, cache, split.test_goals, 1, c.env.horizon);
      test_steps = std::to_string(test_eval.total_steps);
      test_success = format_double(test_eval.success_rate);
      io::CsvTable per_goal;
      per_goal.header = {"seed", "goal_row", "goal_col", "success_fraction", "steps_to_first_success"};
      for (const auto& g : test_eval.goals) {
        per_goal.add_row({std::to_string(seed), std::to_string(g.goal.row), std::to_string(g.goal.col),
                          format_double(g.success_fraction), std::to_string(g.steps_to_first_success)});
      }
      write_table(m, r, sd + "/test_goals_" + name + ".csv", std::to_string(seed), per_goal);
    }
    summary.add_row({std::to_string(seed), name, std::to_string(c.vq.factors), std::to_string(c.env.train_goals),
                     std::to_string(run.episodes_to_target), std::to_string(run.steps_to_target),
                     run.reached_target ? "1" : "0", format_double(train_eval.success_rate), test_steps,
                     test_success});
    auto& all = plots.metrics_by_mode[name];
    all.insert(all.end(), run.metrics.begin(), run.metrics.end());
  }
  write_table(m, r, sd + "/summary.csv", std::to_string(seed), summary);
}

void run_hier(const ExperimentConfig& c, std::uint64_t seed, Manifest& m, RunResult& r, GoalRunOutput& plots) {
  const std::string sd = seed_dir(seed);
  const auto maze = c.env.maze == "loop" || c.env.maze == "spiral" ? env::build_maze(env::Topology::keychest)
                                                                    : load_env_maze(c);
  if (!maze.key || !maze.chest) throw ConfigError("env.maze: hier_keychest needs a maze with a key and a chest");
  const auto model = obtain_model(c, maze, seed, m, r);
  agents::ReprCache cache(model, maze, c.repr.pretrain.downsample_size);
  auto hc = c.hier.hier;
  hc.seed = seed;
  hc.high.seed = seed;
  hc.low.seed = seed;

  io::CsvTable summary;
  summary.header = {"seed", "method", "env_steps", "episodes", "eval_mean_return"};
  auto t0 = Clock::now();
  const auto hier = agents::train_hier(cache, hc, c.env.horizon);
  m.record_timing(sd + "/train_hier", seconds_since(t0));
  write_table(m, r, sd + "/metrics_hier.csv", std::to_string(seed), metrics_table(hier.metrics));
  summary.add_row({std::to_string(seed), "hier", std::to_string(hier.env_steps), std::to_string(hier.metrics.size()),
                   format_double(hier.eval_mean_return)});
  auto& hm = plots.metrics_by_mode["hier"];
  hm.insert(hm.end(), hier.metrics.begin(), hier.metrics.end());
  if (c.hier.flat_baseline) {
    t0 = Clock::now();
    const auto flat = agents::train_flat_keychest(cache, hc, c.env.horizon);
    m.record_timing(sd + "/train_flat", seconds_since(t0));
    write_table(m, r, sd + "/metrics_flat.csv", std::to_string(seed), metrics_table(flat.metrics));
    summary.add_row({std::to_string(seed), "flat", std::to_string(flat.env_steps),
                     std::to_string(flat.metrics.size()), format_double(flat.eval_mean_return)});
    auto& fm = plots.metrics_by_mode["flat"];
    fm.insert(fm.end(), flat.metrics.begin(), flat.metrics.end());
  }
  write_table(m, r, sd + "/summary.csv", std::to_string(seed), summary);
}

void run_factor_demo(const ExperimentConfig& c, std::uint64_t seed, Manifest& m, RunResult& r) {
  const std::string sd = seed_dir(seed);
  const auto data = repr::build_synthetic_factor_dataset(c.demo.shapes, c.demo.colors, c.demo.holdout, seed,
                                                         c.demo.samples_per_combo, c.demo.image_size);
  const auto t0 = Clock::now();
  auto res = repr::pretrain(data.train_images, pretrain_config(c, seed), c.vq);
  m.record_timing(sd + "/pretrain", seconds_since(t0));
  write_table(m, r, sd + "/loss_curve.csv", std::to_string(seed), loss_curve_table(res.curve));
  const auto rep = repr::evaluate_factor_demo(res.model, data);

  io::CsvTable pairs;
  pairs.header = {"seed", "shape", "color", "mse", "shape_accuracy", "color_accuracy"};
  for (const auto& p : rep.pairs) {
    pairs.add_row({std::to_string(seed), std::to_string(p.shape), std::to_string(p.color), format_double(p.mse),
                   format_double(p.shape_accuracy), format_double(p.color_accuracy)});
  }
  write_table(m, r, sd + "/factor_demo.csv", std::to_string(seed), pairs);

  const double ratio = rep.heldout_mse / rep.train_combo_mse;
  const double own0 = rep.flip_rate[0][static_cast<std::size_t>(rep.specialization[0])];
  const double own1 = rep.flip_rate[1][static_cast<std::size_t>(rep.specialization[1])];
  io::CsvTable summary;
  summary.header = {"seed", "heldout_mse", "train_combo_mse", "mse_ratio", "flip_g0_shape", "flip_g0_color",
                    "flip_g1_shape", "flip_g1_color", "specialization_g0", "specialization_g1",
                    "distinct_specialization", "min_specialized_flip", "factorization_ok"};
  summary.add_row({std::to_string(seed), format_double(rep.heldout_mse), format_double(rep.train_combo_mse),
                   format_double(ratio), format_double(rep.flip_rate[0][0]), format_double(rep.flip_rate[0][1]),
                   format_double(rep.flip_rate[1][0]), format_double(rep.flip_rate[1][1]),
                   std::to_string(rep.specialization[0]), std::to_string(rep.specialization[1]),
                   rep.distinct_specialization ? "1" : "0", format_double(std::min(own0, own1)),
                   ratio < 2.0 ? "1" : "0"});
  write_table(m, r, sd + "/summary.csv", std::to_string(seed), summary);
}

io::CsvTable bound_table(const std::vector<theory::BoundReport>& reports) {
  io::CsvTable t;
  t.header = {"n", "trial", "sigma", "lhs", "rhs", "omega_hat", "concentration", "holds"};
  for (const auto& b : reports) {
    t.add_row({std::to_string(b.n), std::to_string(b.trial), std::string(theory::to_string(b.sigma)),
               format_double(b.lhs), format_double(b.rhs), format_double(b.omega_hat),
               format_double(b.concentration), b.holds ? "1" : "0"});
  }
  return t;
}

void run_theorem(const ExperimentConfig& c, std::uint64_t seed, Manifest& m, RunResult& r) {
  const std::string sd = seed_dir(seed);
  auto check = c.theory.check;
  check.seed = seed;
  const auto quantizer = theory::grid_quantizer(c.theory.levels, 2);
  const auto sampler = theory::uniform_unit_square();
  io::CsvTable summary;
  summary.header = {"model", "sigma", "n", "trials", "holds_fraction", "holds_floor", "median_abs_omega",
                    "omega_iqr", "max_abs_omega", "bound_estimated", "bound_at_boundary"};
  auto report = [&](const theory::ValueModel& vm, const theory::GoalQuantizer& q, const theory::GoalSampler& s) {
    std::vector<theory::BoundReport> all;
    for (const auto sigma : {theory::Sigma::identity, theory::Sigma::quantized}) {
      const auto reps = theory::verify_bound(vm, s, q, sigma, check);
      all.insert(all.end(), reps.begin(), reps.end());
    }
    write_table(m, r, sd + "/bound_report_" + vm.name + ".csv", std::to_string(seed), bound_table(all));
    for (const auto& b : theory::summarize(all)) {
      summary.add_row({vm.name, std::string(theory::to_string(b.sigma)), std::to_string(b.n),
                       std::to_string(b.trials), format_double(b.holds_fraction),
                       format_double(theory::holds_fraction_floor(check.delta, b.trials)),
                       format_double(b.median_abs_omega), format_double(b.omega_iqr), format_double(b.max_abs_omega),
                       vm.bound_estimated ? "1" : "0", vm.bound_at_boundary ? "1" : "0"});
    }
  };
  const auto t0 = Clock::now();
  for (const auto& vm : theory::synthetic_suite(quantizer)) report(vm, quantizer, sampler);
  m.record_timing(sd + "/synthetic_suite", seconds_since(t0));

  if (c.theory.agent_value) {
    const auto maze = load_env_maze(c);
    const auto split = env::canonical_goal_split(maze, c.env.train_goals, 0);
    const auto model = obtain_model(c, maze, seed, m, r);
    agents::ReprCache cache(model, maze, c.repr.pretrain.downsample_size);
    auto dqn = c.agent.dqn;
    dqn.seed = seed;
    const auto run = agents::train_goal_dqn(cache, split.train_goals, agents::ReprMode::discrete, dqn, c.env.horizon);
    auto goals = env::corridor_order(maze);
    goals.erase(std::remove_if(goals.begin(), goals.end(),
                               [&](const env::Cell g) {
                                 return std::find(maze.goal_candidates.begin(), maze.goal_candidates.end(), g) ==
                                        maze.goal_candidates.end();
                               }),
                goals.end());
    const auto values = theory::agent_goal_values(run.agent, cache, goals, c.theory.agent_rollouts,
                                                  c.theory.agent_epsilon, seed, c.env.horizon);
    const auto setup = theory::agent_bound_setup(values, goals, cache);
    report(setup.model, setup.quantizer, setup.sampler);
  }
  write_table(m, r, sd + "/summary.csv", std::to_string(seed), summary);
}

void emit_learning_curves(const ExperimentConfig& c, const GoalRunOutput& out, Manifest& m, RunResult& r) {
  if (out.metrics_by_mode.empty()) return;
  std::vector<plot::PlotSeries> series;
  for (const auto& [name, ms] : out.metrics_by_mode) series.push_back({name, metrics_table(ms)});
  plot::PlotSpec spec;
  spec.x = "episode";
  spec.y = "return_ext";
  spec.smooth = c.plot.smooth;
  spec.title = c.name;
  const auto path = m.declare("learning_curve.svg", "all");
  plot::emit_plot(series, spec, path);
  r.outputs.push_back(path);
}

ExperimentConfig with_seed(ExperimentConfig c, const RunOptions& o) {
  if (o.seed) c.seeds = {*o.seed};
  return c;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config_in, const RunOptions& options) {
  const auto config = with_seed(config_in, options);
  config.validate();
  RunResult result;
  result.dir = options.out_dir.value_or(config.output_dir);
  Manifest manifest(result.dir, config, options.verb);
  const auto t0 = Clock::now();
  try {
    GoalRunOutput curves;
    for (const auto seed : config.seeds) {
      switch (config.kind) {
        case ExperimentKind::pretrain:
          run_pretrain(config, seed, manifest, result);
          break;
        case ExperimentKind::goal_dqn:
        case ExperimentKind::ood_eval:
          run_goal_dqn(config, seed, manifest, result, curves);
          break;
        case ExperimentKind::hier_keychest:
          run_hier(config, seed, manifest, result, curves);
          break;
        case ExperimentKind::factor_demo:
          run_factor_demo(config, seed, manifest, result);
          break;
        case ExperimentKind::theorem_check:
          run_theorem(config, seed, manifest, result);
          break;
      }
    }
    emit_learning_curves(config, curves, manifest, result);
  } catch (const std::exception& e) {
    manifest.record_timing("total", seconds_since(t0));
    manifest.finish(false, e.what());
    throw;
  }
  manifest.record_timing("total", seconds_since(t0));
  manifest.finish(true);
  return result;
}

std::vector<std::string> summary_key_columns(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::goal_dqn:
    case ExperimentKind::ood_eval:
    case ExperimentKind::hier_keychest:
      return {"method"};
    case ExperimentKind::theorem_check:
      return {"model", "sigma", "n"};
    case ExperimentKind::pretrain:
      return {"dataset"};
    case ExperimentKind::factor_demo:
      return {};
  }
  return {};
}

io::CsvTable aggregate_summaries(const std::string& axis,
                                 const std::vector<std::pair<std::string, io::CsvTable>>& tables,
                                 const std::vector<std::string>& key_columns) {
  // (value, group, metric) -> samples, in first-seen order.
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> samples;
  for (const auto& [value, t] : tables) {
    const auto missing = t.missing_columns(key_columns);
    if (!missing.empty()) throw ConfigError("aggregate: summary table lacks key column " + missing.front());
    for (const auto& row : t.rows) {
      std::string group;
      for (const auto& k : key_columns) {
        group += (group.empty() ? "" : ":") + row[static_cast<std::size_t>(t.column(k))];
      }
      if (group.empty()) group = "all";
      for (std::size_t col = 0; col < t.header.size(); ++col) {
        const auto& name = t.header[col];
        if (name == "seed" || std::find(key_columns.begin(), key_columns.end(), name) != key_columns.end()) continue;
        const auto& cell = row[col];
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (cell.empty() || end != cell.c_str() + cell.size()) continue;
        const auto key = std::make_tuple(value, group, name);
        if (!samples.count(key)) order.push_back(key);
        samples[key].push_back(v);
      }
    }
  }
  io::CsvTable out;
  out.header = {"axis", "value", "group", "metric", "mean", "sd", "count"};
  for (const auto& key : order) {
    const auto& xs = samples[key];
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    std::string sd = "NA";
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      sd = format_double(std::sqrt(ss / static_cast<double>(xs.size() - 1)));
    }
    out.add_row({axis, std::get<0>(key), std::get<1>(key), std::get<2>(key), format_double(mean), sd,
                 std::to_string(xs.size())});
  }
  return out;
}

RunResult run_sweep(const ExperimentConfig& config_in, const RunOptions& options) {
  const auto config = with_seed(config_in, options);
  config.validate();
  if (config.sweep.axis.empty()) throw ConfigError("sweep.axis: required for the sweep verb");
  RunResult result;
  result.dir = options.out_dir.value_or(config.output_dir);
  Manifest manifest(result.dir, config, "sweep");
  const auto t0 = Clock::now();
  try {
    std::vector<std::pair<std::string, io::CsvTable>> tables;
    for (const auto v : config.sweep.values) {
      auto sub = config;
      sub.sweep = {};
      if (config.sweep.axis == "G") {
        sub.vq.factors = static_cast<int>(v);
      } else if (config.sweep.axis == "seeds") {
        sub.seeds = {static_cast<std::uint64_t>(v)};
      } else {
        sub.env.train_goals = static_cast<int>(v);
      }
      const std::string rel = config.sweep.axis + "_" + std::to_string(v);
      manifest.declare(rel + "/manifest.json", "all");
      RunOptions so;
      so.out_dir = result.dir / rel;
      so.verb = "sweep";
      const auto sub_result = run_experiment(sub, so);
      result.outputs.insert(result.outputs.end(), sub_result.outputs.begin(), sub_result.outputs.end());
      for (const auto seed : sub.seeds) {
        tables.emplace_back(std::to_string(v), io::read_csv(so.out_dir.value() / seed_dir(seed) / "summary.csv"));
      }
    }
    const auto agg = aggregate_summaries(config.sweep.axis, tables, summary_key_columns(config.kind));
    write_table(manifest, result, "aggregate.csv", "all", agg);
  } catch (const std::exception& e) {
    manifest.record_timing("total", seconds_since(t0));
    manifest.finish(false, e.what());
    throw;
  }
  manifest.record_timing("total", seconds_since(t0));
  manifest.finish(true);
  return result;
}

RunResult run_plot(const ExperimentConfig& config, const RunOptions& options) {
  if (config.plot.inputs.empty()) throw ConfigError("plot.inputs: list at least one {label, path}");
  RunResult result;
  result.dir = options.out_dir.value_or(config.output_dir);
  Manifest manifest(result.dir, config, "plot");
  try {
    std::vector<plot::PlotSeries> series;
    for (const auto& in : config.plot.inputs) series.push_back({in.label, io::read_csv(in.path)});
    plot::PlotSpec spec;
    spec.x = config.plot.x;
    spec.y = config.plot.y;
    spec.smooth = config.plot.smooth;
    spec.title = config.plot.title;
    const auto path = manifest.declare("plot.svg", "all");
    const auto s = plot::emit_plot(series, spec, path);
    result.outputs.push_back(path);
    if (s.empty) manifest.record_summary("warning", "no data rows; wrote an empty placeholder plot");
  } catch (const std::exception& e) {
    manifest.finish(false, e.what());
    throw;
  }
  manifest.finish(true);
  return result;
}

}  // namespace dgrl::harness
