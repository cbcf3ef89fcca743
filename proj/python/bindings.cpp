#include "dgrl/config.hpp"
#include "dgrl/envs.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/harness.hpp"
#include "dgrl/theory.hpp"
#include "dgrl/vq.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace dgrl;

namespace {

py::array_t<std::uint8_t> raster_array(const env::Raster& raster) {
  py::array_t<std::uint8_t> out({raster.height, raster.width, env::kChannels});
  std::copy(raster.pixels.begin(), raster.pixels.end(), out.mutable_data());
  return out;
}

env::Raster array_raster(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pixels) {
  if (pixels.ndim() != 3 || pixels.shape(2) != env::kChannels) {
    throw UsageError("raster must have shape (height, width, 3)");
  }
  env::Raster raster;
  raster.height = static_cast<int>(pixels.shape(0));
  raster.width = static_cast<int>(pixels.shape(1));
  raster.pixels.assign(pixels.data(), pixels.data() + pixels.size());
  return raster;
}

py::dict step_dict(const env::StepResult& r) {
  py::dict d;
  d["reward"] = r.reward;
  d["done"] = r.done;
  d["reached"] = r.reached;
  return d;
}

py::dict summary_dict(const theory::BoundSummary& s) {
  py::dict d;
  d["n"] = s.n;
  d["sigma"] = std::string(theory::to_string(s.sigma));
  d["trials"] = s.trials;
  d["holds_fraction"] = s.holds_fraction;
  d["median_abs_omega"] = s.median_abs_omega;
  d["omega_iqr"] = s.omega_iqr;
  d["max_abs_omega"] = s.max_abs_omega;
  return d;
}

harness::ExperimentConfig config_from(const std::string& text, const std::string& base_dir,
                                      const std::vector<std::pair<std::string, std::string>>& overrides) {
  return harness::parse_config(text, base_dir, overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete goal representations: quantizer, mazes, bound checks and experiment runner";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<TrainingFault>(m, "TrainingFault", PyExc_RuntimeError);

  py::class_<vq::VqConfig>(m, "VqConfig")
      .def(py::init<>())
      .def_readwrite("factors", &vq::VqConfig::factors)
      .def_readwrite("codebook_size", &vq::VqConfig::codebook_size)
      .def_readwrite("beta", &vq::VqConfig::beta)
      .def_readwrite("eta", &vq::VqConfig::eta)
      .def("validate", &vq::VqConfig::validate);

  py::class_<vq::Codebook>(m, "Codebook")
      .def(py::init<int, int, double>(), py::arg("size"), py::arg("seg_dim"), py::arg("eta") = 0.99)
      .def_static("from_codes", &vq::Codebook::from_codes, py::arg("codes"), py::arg("eta") = 0.99)
      .def_property_readonly("size", &vq::Codebook::size)
      .def_property_readonly("seg_dim", &vq::Codebook::seg_dim)
      .def_property_readonly("codes", &vq::Codebook::codes);

  py::class_<vq::QuantizedLatent>(m, "QuantizedLatent")
      .def_readonly("z_e", &vq::QuantizedLatent::z_e)
      .def_readonly("factor_indices", &vq::QuantizedLatent::factor_indices)
      .def_readonly("z_q", &vq::QuantizedLatent::z_q)
      .def_readonly("commitment", &vq::QuantizedLatent::commitment);

  m.def(
      "nearest_code",
      [](const std::vector<double>& segment, const vq::Codebook& codebook) {
        const auto r = vq::nearest_code(segment, codebook);
        return py::make_tuple(r.index, r.sq_distance);
      },
      py::arg("segment"), py::arg("codebook"), "Index and squared distance of the closest code.");
  m.def("quantize", &vq::quantize, py::arg("z_e"), py::arg("codebook"), py::arg("config"),
        "Splits z_e into G segments and snaps each to its nearest code.");
  m.def(
      "factor_match_fraction",
      [](const std::vector<int>& a, const std::vector<int>& b) { return vq::factor_match_fraction(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "build_maze",
      [](const std::string& topology) { return env::format_maze(env::build_maze(topology)); },
      py::arg("topology"), "Grid text of a canonical maze: spiral, loop or keychest.");
  m.def(
      "shortest_path_length",
      [](const std::string& maze_text, std::pair<int, int> from, std::pair<int, int> to) {
        return env::shortest_path_length(env::parse_maze(maze_text), {from.first, from.second},
                                         {to.first, to.second});
      },
      py::arg("maze"), py::arg("start"), py::arg("goal"));
  m.def(
      "goal_split",
      [](const std::string& maze_text, int train_count, int test_count) {
        const auto split = env::canonical_goal_split(env::parse_maze(maze_text), train_count, test_count);
        auto cells = [](const std::vector<env::Cell>& v) {
          std::vector<std::pair<int, int>> out;
          for (const auto& c : v) out.emplace_back(c.row, c.col);
          return out;
        };
        return py::make_tuple(cells(split.train_goals), cells(split.test_goals));
      },
      py::arg("maze"), py::arg("train_count"), py::arg("test_count"));
  m.def(
      "downsample",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pixels, int size) {
        const auto flat = env::downsample(array_raster(pixels), size);
        py::array_t<double> out({size, size, env::kChannels});
        std::copy(flat.begin(), flat.end(), out.mutable_data());
        return out;
      },
      py::arg("pixels"), py::arg("size"));

  py::class_<env::GoalMazeEnv>(m, "GoalMazeEnv")
      .def(py::init([](const std::string& maze_text, int horizon) {
             return env::GoalMazeEnv(env::parse_maze(maze_text), horizon);
           }),
           py::arg("maze"), py::arg("horizon") = 100)
      .def(
          "reset",
          [](env::GoalMazeEnv& self, std::pair<int, int> goal) {
            const auto obs = self.reset({goal.first, goal.second});
            return py::make_tuple(raster_array(obs.state), raster_array(obs.goal));
          },
          py::arg("goal"))
      .def(
          "step", [](env::GoalMazeEnv& self, int action) {
            if (action < 0 || action >= env::kNumActions) throw UsageError("action must be in [0, 4)");
            return step_dict(self.step(static_cast<env::Action>(action)));
          },
          py::arg("action"))
      .def("observe", [](const env::GoalMazeEnv& self) { return raster_array(self.observe()); })
      .def_property_readonly("agent", [](const env::GoalMazeEnv& self) {
        return std::make_pair(self.state().agent.row, self.state().agent.col);
      })
      .def_property_readonly("steps", [](const env::GoalMazeEnv& self) { return self.state().steps; })
      .def_property_readonly("horizon", &env::GoalMazeEnv::horizon);

  m.def(
      "concentration_term",
      [](std::int64_t n, double delta, int q_count, double bound) {
        return theory::concentration_term(n, delta, q_count, bound);
      },
      py::arg("n"), py::arg("delta"), py::arg("q_count"), py::arg("bound"));
  m.def(
      "check_bound",
      [](const std::string& model, const std::string& sigma, std::vector<int> n_list, int trials,
         int expectation_samples, int min_conditional_samples, std::uint64_t seed) {
        const std::vector<double> levels{0.25, 0.75};
        const auto quantizer = theory::grid_quantizer(levels, 2);
        theory::BoundCheckConfig cfg;
        cfg.n_list = std::move(n_list);
        cfg.trials = trials;
        cfg.expectation_samples = expectation_samples;
        cfg.min_conditional_samples = min_conditional_samples;
        cfg.seed = seed;
        if (sigma != "q" && sigma != "id") throw UsageError("sigma must be 'id' or 'q'");
        const auto s = sigma == "q" ? theory::Sigma::quantized : theory::Sigma::identity;
        for (const auto& vm : theory::synthetic_suite(quantizer)) {
          if (vm.name != model) continue;
          const auto reports = theory::verify_bound(vm, theory::uniform_unit_square(), quantizer, s, cfg);
          py::list out;
          for (const auto& row : theory::summarize(reports)) out.append(summary_dict(row));
          return out;
        }
        throw UsageError("unknown value model '" + model + "'");
      },
      py::arg("model"), py::arg("sigma"), py::arg("n_list") = std::vector<int>{10, 100, 1000},
      py::arg("trials") = 100, py::arg("expectation_samples") = 20000, py::arg("min_conditional_samples") = 200,
      py::arg("seed") = 0,
      "Monte Carlo bound check of a synthetic value model on the unit square with a 2x2 grid quantizer.");
  m.def("value_models", [] {
    const std::vector<double> levels{0.25, 0.75};
    std::vector<std::string> names;
    for (const auto& vm : theory::synthetic_suite(theory::grid_quantizer(levels, 2))) names.push_back(vm.name);
    return names;
  });

  py::class_<harness::ExperimentConfig>(m, "ExperimentConfig")
      .def_property_readonly("kind",
                             [](const harness::ExperimentConfig& c) { return std::string(to_string(c.kind)); })
      .def_readonly("name", &harness::ExperimentConfig::name)
      .def_readonly("seeds", &harness::ExperimentConfig::seeds)
      .def_property_readonly("factors", [](const harness::ExperimentConfig& c) { return c.vq.factors; })
      .def_property_readonly("codebook_size", [](const harness::ExperimentConfig& c) { return c.vq.codebook_size; })
      .def_readonly("output_dir", &harness::ExperimentConfig::output_dir)
      .def("hash", [](const harness::ExperimentConfig& c) { return harness::config_hash(c); })
      .def("canonical_text", [](const harness::ExperimentConfig& c) { return harness::canonical_text(c); });

  m.def("parse_config", &config_from, py::arg("text"), py::arg("base_dir") = ".",
        py::arg("overrides") = std::vector<std::pair<std::string, std::string>>{});
  m.def(
      "load_config",
      [](const std::filesystem::path& path) { return harness::load_config(path, true); }, py::arg("path"));
  m.def(
      "run_experiment",
      [](const harness::ExperimentConfig& config, std::optional<std::filesystem::path> out,
         std::optional<std::uint64_t> seed) {
        harness::RunOptions options;
        options.out_dir = std::move(out);
        options.seed = seed;
        const auto result = config.sweep.values.empty() ? harness::run_experiment(config, options)
                                                        : harness::run_sweep(config, options);
        return result.dir;
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::call_guard<py::gil_scoped_release>(), "Runs the experiment (or sweep) and returns its output directory.");
}
