#include "dgrl/config.hpp"
#include "dgrl/csv.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/harness.hpp"
#include "dgrl/plot.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

using namespace dgrl;
using namespace dgrl::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dgrl_harness_tests" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyDqn = R"(schema_version: 1
experiment:
  kind: goal_dqn
  name: tiny
  seeds: [0, 1, 2]
env:
  maze: loop
  horizon: 20
  train_goals: 4
  test_goals: 2
vq:
  factors: 4
  codebook_size: 16
repr:
  latent_dim: 16
  hidden: 32
  epochs: 1
  batch_size: 32
  corpus_size: 200
agent:
  hidden: 32
  batch_size: 16
  warmup: 40
  target_period: 20
  episodes: 10
  eval_period: 5
)";

const char* kTinyTheorem = R"(schema_version: 1
experiment:
  kind: theorem_check
  name: theorem
  seeds: [0, 1]
theory:
  n_list: [10, 100]
  trials: 20
  expectation_samples: 2000
  min_conditional_samples: 100
)";

ExperimentConfig tiny(const char* text) { return parse_config(text, fs::path(DGRL_TEST_DATA_DIR)); }

std::map<std::string, std::string> manifest_outputs(const fs::path& dir) {
  const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  std::map<std::string, std::string> out;
  for (const auto& o : j["outputs"]) out[o["path"].get<std::string>()] = o["seed"].get<std::string>();
  return out;
}

double svg_attr(const std::string& svg, const std::string& name) {
  const auto key = name + "=\"";
  const auto pos = svg.find(key);
  REQUIRE(pos != std::string::npos);
  return std::stod(svg.substr(pos + key.size()));
}

int count_of(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("goal_dqn run: manifest lists every file and metrics schemas match") {
  const auto dir = scratch("dqn");
  RunOptions o;
  o.out_dir = dir;
  const auto r = run_experiment(tiny(kTinyDqn), o);
  const auto outs = manifest_outputs(dir);
  for (const auto& p : r.outputs) {
    CHECK(fs::exists(p));
    CHECK(outs.count(fs::relative(p, dir).generic_string()) == 1);
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    CAPTURE(entry.path().string());
    CHECK(outs.count(fs::relative(entry.path(), dir).generic_string()) == 1);
  }
  std::vector<std::string> header;
  for (int seed = 0; seed < 3; ++seed) {
    const auto t = io::read_csv(dir / ("seed_" + std::to_string(seed)) / "metrics_discrete.csv");
    if (header.empty()) header = t.header;
    CHECK(t.header == header);
    CHECK(t.rows.size() == 10u);
    CHECK(fs::exists(dir / ("seed_" + std::to_string(seed)) / "model.ckpt"));
    CHECK(fs::exists(dir / ("seed_" + std::to_string(seed)) / "loss_curve.csv"));
  }
  CHECK(header == std::vector<std::string>{"seed", "episode", "goal_id", "steps", "return_ext", "return_int",
                                           "success"});
  const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(j["status"] == "complete");
  CHECK(j["partial"] == false);
  CHECK(j["config_hash"] == config_hash(tiny(kTinyDqn)));
  CHECK(j["timings_seconds"].contains("total"));
}

TEST_CASE("re-running with the same config and seed gives byte-identical CSVs") {
  const auto a = scratch("repro_a");
  const auto b = scratch("repro_b");
  auto cfg = tiny(kTinyDqn);
  RunOptions oa, ob;
  oa.out_dir = a;
  ob.out_dir = b;
  oa.seed = ob.seed = 1;
  run_experiment(cfg, oa);
  run_experiment(cfg, ob);
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (entry.path().extension() != ".csv" && entry.path().extension() != ".svg" &&
        entry.path().extension() != ".ckpt") {
      continue;
    }
    CAPTURE(entry.path().string());
    const auto other = b / fs::relative(entry.path(), a);
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++compared;
  }
  CHECK(compared >= 6);
  // Overwriting in place reproduces the same bytes.
  const auto before = slurp(a / "seed_1" / "metrics_continuous.csv");
  run_experiment(cfg, oa);
  CHECK(slurp(a / "seed_1" / "metrics_continuous.csv") == before);
}

TEST_CASE("synthetic pretrain writes a checkpoint and a loss curve") {
  const auto dir = scratch("pretrain");
  const char* text = R"(schema_version: 1
experiment:
  kind: pretrain
  seeds: [4]
vq:
  factors: 2
  codebook_size: 16
repr:
  dataset: synthetic
  latent_dim: 8
  hidden: 32
  epochs: 2
demo:
  shapes: 2
  colors: 2
  holdout: [[0, 1]]
  samples_per_combo: 5
)";
  RunOptions o;
  o.out_dir = dir;
  run_experiment(tiny(text), o);
  CHECK(fs::exists(dir / "seed_4" / "model.ckpt"));
  const auto curve = io::read_csv(dir / "seed_4" / "loss_curve.csv");
  CHECK(curve.rows.size() == 2u);
  CHECK(curve.missing_columns({"epoch", "recon_mse", "commitment", "total"}).empty());
}

TEST_CASE("a mid-run fault leaves a manifest flagged partial") {
  const auto dir = scratch("fault");
  auto cfg = tiny(kTinyDqn);
  cfg.repr.checkpoint = dir / "missing.ckpt";
  RunOptions o;
  o.out_dir = dir;
  CHECK_THROWS(run_experiment(cfg, o));
  const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(j["status"] == "failed");
  CHECK(j["partial"] == true);
  CHECK(j["error"].get<std::string>().find("missing.ckpt") != std::string::npos);
}

TEST_CASE("G sweep: one sub-directory per value plus an aggregate") {
  const auto dir = scratch("sweep_g");
  auto cfg = tiny(kTinyTheorem);
  cfg.sweep.axis = "G";
  cfg.sweep.values = {4, 8, 16};
  RunOptions o;
  o.out_dir = dir;
  run_sweep(cfg, o);
  int subdirs = 0;
  for (const auto& e : fs::directory_iterator(dir)) subdirs += e.is_directory() ? 1 : 0;
  CHECK(subdirs == 3);
  for (const char* v : {"G_4", "G_8", "G_16"}) CHECK(fs::exists(dir / v / "manifest.json"));
  REQUIRE(fs::exists(dir / "aggregate.csv"));

  // Recompute every aggregate row from the raw per-seed summaries.
  const auto agg = io::read_csv(dir / "aggregate.csv");
  CHECK(agg.header == std::vector<std::string>{"axis", "value", "group", "metric", "mean", "sd", "count"});
  int checked = 0;
  for (const auto& row : agg.rows) {
    if (row[3] != "holds_fraction" && row[3] != "median_abs_omega") continue;
    std::vector<double> xs;
    for (int seed = 0; seed < 2; ++seed) {
      const auto t = io::read_csv(dir / ("G_" + row[1]) / ("seed_" + std::to_string(seed)) / "summary.csv");
      for (const auto& r : t.rows) {
        const std::string group = r[static_cast<std::size_t>(t.column("model"))] + ":" +
                                  r[static_cast<std::size_t>(t.column("sigma"))] + ":" +
                                  r[static_cast<std::size_t>(t.column("n"))];
        if (group == row[2]) xs.push_back(std::stod(r[static_cast<std::size_t>(t.column(row[3]))]));
      }
    }
    REQUIRE(xs.size() == 2u);
    const double mean = (xs[0] + xs[1]) / 2.0;
    const double sd = std::abs(xs[0] - xs[1]) / std::sqrt(2.0);
    CHECK(std::stod(row[4]) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(std::stod(row[5]) == doctest::Approx(sd).epsilon(1e-9).scale(1e-12));
    CHECK(row[6] == "2");
    ++checked;
  }
  CHECK(checked == 3 * 2 * 2 * 2 * 3);
}

TEST_CASE("seeds sweep with a single seed marks sd as NA") {
  const auto dir = scratch("sweep_seed");
  auto cfg = tiny(kTinyTheorem);
  cfg.sweep.axis = "seeds";
  cfg.sweep.values = {5};
  RunOptions o;
  o.out_dir = dir;
  run_sweep(cfg, o);
  const auto agg = io::read_csv(dir / "aggregate.csv");
  REQUIRE_FALSE(agg.rows.empty());
  for (const auto& row : agg.rows) {
    CHECK(row[5] == "NA");
    CHECK(row[6] == "1");
  }
}

TEST_CASE("aggregate of hand-written tables") {
  io::CsvTable a;
  a.header = {"seed", "method", "score"};
  a.add_row({"0", "x", "1"});
  a.add_row({"0", "y", "10"});
  io::CsvTable b = a;
  b.rows = {{"1", "x", "3"}, {"1", "y", "nan"}};
  const auto agg = aggregate_summaries("seeds", {{"0", a}, {"0", b}}, {"method"});
  REQUIRE(agg.rows.size() == 2u);
  CHECK(agg.rows[0] == std::vector<std::string>{"seeds", "0", "x", "score", "2", io::format_double(std::sqrt(2.0)), "2"});
  CHECK(agg.rows[1][2] == "y");
  CHECK(agg.rows[1][6] == "2");
  CHECK(std::isnan(std::stod(agg.rows[1][4])));
  CHECK_THROWS_AS(aggregate_summaries("G", {{"4", a}}, {"model"}), ConfigError);
}

TEST_CASE("plots: placeholder, legend, range and schema errors") {
  plot::PlotSpec spec;
  spec.x = "episode";
  spec.y = "return_ext";
  spec.smooth = 1;

  io::CsvTable empty;
  empty.header = {"seed", "episode", "return_ext"};
  plot::PlotSummary s;
  const std::vector<plot::PlotSeries> none{{"discrete", empty}};
  const auto placeholder = plot::render_svg(none, spec, &s);
  CHECK(s.empty);
  CHECK(placeholder.find("data-empty=\"true\"") != std::string::npos);
  CHECK(placeholder.find("warning") != std::string::npos);

  io::CsvTable a, b;
  a.header = b.header = {"seed", "episode", "return_ext"};
  for (int i = 0; i < 20; ++i) {
    a.add_row({"0", std::to_string(i), io::format_double(-30.0 + i)});
    a.add_row({"1", std::to_string(i), io::format_double(-25.0 + i)});
    b.add_row({"0", std::to_string(i), io::format_double(2.5 * i - 7.0)});
  }
  const std::vector<plot::PlotSeries> two{{"discrete", a}, {"continuous", b}};
  const auto svg = plot::render_svg(two, spec, &s);
  CHECK_FALSE(s.empty);
  CHECK(s.legend_entries == 2);
  CHECK(count_of(svg, "class=\"legend-entry\"") == 2);
  CHECK(svg_attr(svg, "data-ymin") <= -30.0);
  CHECK(svg_attr(svg, "data-ymax") >= 2.5 * 19 - 7.0);
  CHECK(plot::render_svg(two, spec) == svg);

  io::CsvTable wrong;
  wrong.header = {"seed", "step"};
  wrong.add_row({"0", "1"});
  const std::vector<plot::PlotSeries> bad{{"broken", wrong}};
  try {
    plot::render_svg(bad, spec);
    FAIL("expected a schema error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("episode") != std::string::npos);
    CHECK(msg.find("return_ext") != std::string::npos);
  }
}

TEST_CASE("plot verb renders the listed CSVs") {
  const auto dir = scratch("plot_verb");
  fs::create_directories(dir);
  io::CsvTable t;
  t.header = {"seed", "episode", "return_ext"};
  t.add_row({"0", "0", "1"});
  t.add_row({"0", "1", "2"});
  io::write_csv(dir / "m.csv", t);
  const std::string text = "schema_version: 1\nexperiment:\n  kind: goal_dqn\nplot:\n  inputs:\n"
                           "    - {label: run, path: m.csv}\n";
  const auto cfg = parse_config(text, dir);
  RunOptions o;
  o.out_dir = dir / "out";
  run_plot(cfg, o);
  const auto svg = slurp(dir / "out" / "plot.svg");
  CHECK(svg.find("data-empty=\"false\"") != std::string::npos);
  CHECK(manifest_outputs(dir / "out").count("plot.svg") == 1);
}
