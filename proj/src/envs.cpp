#include "dgrl/envs.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace dgrl::env {

namespace {

constexpr std::string_view kLoopLayout =
    "SGGGGG\n"
    "G####G\n"
    "G####G\n"
    "G####G\n"
    "G####G\n"
    "GGGGGG\n";

constexpr std::string_view kSpiralLayout =
    "SGGGGG\n"
    "#####G\n"
    "GGGG#G\n"
    "G##G#G\n"
    "G####G\n"
    "GGGGGG\n";

constexpr std::string_view kKeyChestLayout =
    "K..#.C\n"
    ".#.#..\n"
    ".#....\n"
    ".####.\n"
    "S.....\n"
    "##..#.\n";

constexpr Cell kMoves[kNumActions] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

std::string to_string(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::spiral:
      return "spiral";
    case Topology::loop:
      return "loop";
    case Topology::keychest:
      return "keychest";
    case Topology::custom:
      return "custom";
  }
  return "custom";
}

Topology topology_from_string(std::string_view name) {
  if (name == "spiral") return Topology::spiral;
  if (name == "loop") return Topology::loop;
  if (name == "keychest") return Topology::keychest;
  if (name == "custom") return Topology::custom;
  throw ConfigError("unknown maze topology '" + std::string(name) +
                    "' (expected spiral, loop or keychest)");
}

std::vector<Cell> MazeSpec::floor_cells() const {
  std::vector<Cell> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (is_floor({r, c})) out.push_back({r, c});
    }
  }
  return out;
}

void MazeSpec::validate() const {
  if (rows <= 0 || cols <= 0 || walls.size() != static_cast<std::size_t>(rows * cols)) {
    throw ConfigError("maze: bad dimensions");
  }
  auto need_floor = [&](Cell c, const char* what) {
    if (!is_floor(c)) throw ConfigError(std::string("maze: ") + what + " " + to_string(c) + " is not floor");
  };
  need_floor(start, "start");
  for (auto g : goal_candidates) need_floor(g, "goal");
  if (key) need_floor(*key, "key");
  if (chest) need_floor(*chest, "chest");
  const auto reached = flood_fill(*this, start);
  if (reached.size() != floor_cells().size()) {
    throw ConfigError("maze: floor cells are not connected (" + std::to_string(reached.size()) +
                      " of " + std::to_string(floor_cells().size()) + " reachable)");
  }
}

MazeSpec parse_maze(std::string_view text, Topology tag) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == ';') continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("maze: no grid rows");
  MazeSpec m;
  m.topology = tag;
  m.rows = static_cast<int>(lines.size());
  m.cols = static_cast<int>(lines.front().size());
  m.walls.assign(static_cast<std::size_t>(m.rows * m.cols), 0);
  bool have_start = false;
  for (int r = 0; r < m.rows; ++r) {
    if (static_cast<int>(lines[static_cast<std::size_t>(r)].size()) != m.cols) {
      throw ConfigError("maze: row " + std::to_string(r) + " has a different width");
    }
    for (int c = 0; c < m.cols; ++c) {
      const char ch = lines[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const Cell cell{r, c};
      switch (ch) {
        case '#':
          m.walls[static_cast<std::size_t>(m.index(cell))] = 1;
          break;
        case '.':
          break;
        case 'S':
          if (have_start) throw ConfigError("maze: more than one start cell");
          m.start = cell;
          have_start = true;
          break;
        case 'G':
          m.goal_candidates.push_back(cell);
          break;
        case 'K':
          if (m.key) throw ConfigError("maze: more than one key cell");
          m.key = cell;
          break;
        case 'C':
          if (m.chest) throw ConfigError("maze: more than one chest cell");
          m.chest = cell;
          break;
        default:
          throw ConfigError(std::string("maze: unknown character '") + ch + "' at " + to_string(cell));
      }
    }
  }
  if (!have_start) throw ConfigError("maze: no start cell 'S'");
  m.validate();
  return m;
}

MazeSpec load_maze_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read maze file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Topology tag = Topology::custom;
  const auto stem = path.stem().string();
  if (stem == "loop" || stem == "spiral" || stem == "keychest") tag = topology_from_string(stem);
  return parse_maze(ss.str(), tag);
}

std::string format_maze(const MazeSpec& maze) {
  std::string out;
  for (int r = 0; r < maze.rows; ++r) {
    for (int c = 0; c < maze.cols; ++c) {
      const Cell cell{r, c};
      char ch = maze.is_floor(cell) ? '.' : '#';
      if (std::find(maze.goal_candidates.begin(), maze.goal_candidates.end(), cell) !=
          maze.goal_candidates.end()) {
        ch = 'G';
      }
      if (maze.key && *maze.key == cell) ch = 'K';
      if (maze.chest && *maze.chest == cell) ch = 'C';
      if (maze.start == cell) ch = 'S';
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

MazeSpec build_maze(Topology topology, std::uint64_t /*seed*/) {
  switch (topology) {
    case Topology::loop:
      return parse_maze(kLoopLayout, Topology::loop);
    case Topology::spiral:
      return parse_maze(kSpiralLayout, Topology::spiral);
    case Topology::keychest:
      return parse_maze(kKeyChestLayout, Topology::keychest);
    case Topology::custom:
      break;
  }
  throw ConfigError("build_maze: 'custom' mazes must be loaded from a file");
}

MazeSpec build_maze(std::string_view topology, std::uint64_t seed) {
  return build_maze(topology_from_string(topology), seed);
}

Cell apply_action(const MazeSpec& maze, Cell from, Action a) {
  const auto& d = kMoves[static_cast<int>(a)];
  const Cell to{from.row + d.row, from.col + d.col};
  return maze.is_floor(to) ? to : from;
}

std::vector<Cell> flood_fill(const MazeSpec& maze, Cell from) {
  std::vector<Cell> out;
  if (!maze.is_floor(from)) return out;
  std::vector<char> seen(static_cast<std::size_t>(maze.cell_count()), 0);
  std::deque<Cell> queue{from};
  seen[static_cast<std::size_t>(maze.index(from))] = 1;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    out.push_back(c);
    for (const auto& d : kMoves) {
      const Cell n{c.row + d.row, c.col + d.col};
      if (maze.is_floor(n) && !seen[static_cast<std::size_t>(maze.index(n))]) {
        seen[static_cast<std::size_t>(maze.index(n))] = 1;
        queue.push_back(n);
      }
    }
  }
  return out;
}

int shortest_path_length(const MazeSpec& maze, Cell from, Cell to) {
  if (!maze.is_floor(from) || !maze.is_floor(to)) return -1;
  std::vector<int> dist(static_cast<std::size_t>(maze.cell_count()), -1);
  std::deque<Cell> queue{from};
  dist[static_cast<std::size_t>(maze.index(from))] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (c == to) return dist[static_cast<std::size_t>(maze.index(c))];
    for (const auto& d : kMoves) {
      const Cell n{c.row + d.row, c.col + d.col};
      if (maze.is_floor(n) && dist[static_cast<std::size_t>(maze.index(n))] < 0) {
        dist[static_cast<std::size_t>(maze.index(n))] = dist[static_cast<std::size_t>(maze.index(c))] + 1;
        queue.push_back(n);
      }
    }
  }
  return -1;
}

std::vector<Cell> corridor_order(const MazeSpec& maze) {
  std::vector<Cell> out;
  std::vector<char> seen(static_cast<std::size_t>(maze.cell_count()), 0);
  std::vector<Cell> stack{maze.start};
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(maze.index(c))]) continue;
    seen[static_cast<std::size_t>(maze.index(c))] = 1;
    out.push_back(c);
    // Reverse push so the first listed move is explored first.
    for (int a = kNumActions; a-- > 0;) {
      const Cell n{c.row + kMoves[a].row, c.col + kMoves[a].col};
      if (maze.is_floor(n) && !seen[static_cast<std::size_t>(maze.index(n))]) stack.push_back(n);
    }
  }
  return out;
}

bool GoalDistribution::disjoint() const {
  for (const auto& g : test_goals) {
    if (std::find(train_goals.begin(), train_goals.end(), g) != train_goals.end()) return false;
  }
  return true;
}

namespace {

std::vector<std::size_t> evenly_spaced(std::size_t available, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < count; ++i) {
    idx.push_back(static_cast<std::size_t>(
        std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(available) /
                   static_cast<double>(count))));
  }
  return idx;
}

}  // namespace

GoalDistribution canonical_goal_split(const MazeSpec& maze, int train_count, int test_count) {
  if (train_count < 0 || test_count < 0) throw ConfigError("goal split: counts must be >= 0");
  std::vector<Cell> candidates;
  for (const Cell c : corridor_order(maze)) {
    if (c == maze.start) continue;
    if (std::find(maze.goal_candidates.begin(), maze.goal_candidates.end(), c) !=
        maze.goal_candidates.end()) {
      candidates.push_back(c);
    }
  }
  const auto need = static_cast<std::size_t>(train_count + test_count);
  if (need > candidates.size()) {
    throw ConfigError("goal split: " + std::to_string(train_count) + " train + " +
                      std::to_string(test_count) + " test goals requested but the maze has only " +
                      std::to_string(candidates.size()) + " candidate cells");
  }
  GoalDistribution d;
  std::vector<char> used(candidates.size(), 0);
  for (auto i : evenly_spaced(candidates.size(), static_cast<std::size_t>(train_count))) {
    d.train_goals.push_back(candidates[i]);
    used[i] = 1;
  }
  std::vector<Cell> rest;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!used[i]) rest.push_back(candidates[i]);
  }
  for (auto i : evenly_spaced(rest.size(), static_cast<std::size_t>(test_count))) {
    d.test_goals.push_back(rest[i]);
  }
  return d;
}

Cell sample_goal(std::span<const Cell> goals, Rng& rng) {
  if (goals.empty()) throw ConfigError("sample_goal: empty goal list");
  std::uniform_int_distribution<std::size_t> pick(0, goals.size() - 1);
  return goals[pick(rng)];
}

Rgb Raster::at(int r, int c) const {
  const auto i = static_cast<std::size_t>((r * width + c) * kChannels);
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

namespace {

void fill_block(Raster& img, Cell cell, Rgb color) {
  const int r0 = kBorderPx + cell.row * kCellPx;
  const int c0 = kBorderPx + cell.col * kCellPx;
  for (int r = r0; r < r0 + kCellPx; ++r) {
    for (int c = c0; c < c0 + kCellPx; ++c) {
      auto* p = &img.pixels[static_cast<std::size_t>((r * img.width + c) * kChannels)];
      p[0] = color.r;
      p[1] = color.g;
      p[2] = color.b;
    }
  }
}

}  // namespace

Raster render_pixels(const MazeSpec& maze, const GridState& state, RenderMode mode) {
  if (maze.rows * kCellPx + 2 * kBorderPx != kRasterSize ||
      maze.cols * kCellPx + 2 * kBorderPx != kRasterSize) {
    throw UsageError("render_pixels: only 6x6 mazes map onto an 80x80 raster");
  }
  Raster img;
  img.height = kRasterSize;
  img.width = kRasterSize;
  img.pixels.resize(static_cast<std::size_t>(kRasterSize * kRasterSize * kChannels));
  for (std::size_t i = 0; i < img.pixels.size(); i += kChannels) {
    img.pixels[i] = kWallColor.r;
    img.pixels[i + 1] = kWallColor.g;
    img.pixels[i + 2] = kWallColor.b;
  }
  for (const Cell c : maze.floor_cells()) fill_block(img, c, kFloorColor);
  if (maze.key && !state.has_key) fill_block(img, *maze.key, kKeyColor);
  if (maze.chest) fill_block(img, *maze.chest, kChestColor);
  Cell agent = state.agent;
  if (mode == RenderMode::goal) {
    if (!state.goal) throw UsageError("render_pixels: goal mode needs a goal cell");
    agent = *state.goal;
  } else if (state.goal) {
    fill_block(img, *state.goal, kGoalColor);
  }
  if (!maze.is_floor(agent)) throw UsageError("render_pixels: agent is not on a floor cell");
  fill_block(img, agent, kAgentColor);
  return img;
}

std::vector<double> downsample(const Raster& raster, int size) {
  if (size <= 0 || raster.height % size != 0 || raster.width % size != 0) {
    throw UsageError("downsample: size " + std::to_string(size) + " does not divide the raster");
  }
  const int fh = raster.height / size;
  const int fw = raster.width / size;
  const double norm = 1.0 / (255.0 * fh * fw);
  std::vector<double> out(static_cast<std::size_t>(size * size * kChannels), 0.0);
  for (int r = 0; r < raster.height; ++r) {
    for (int c = 0; c < raster.width; ++c) {
      const auto src = static_cast<std::size_t>((r * raster.width + c) * kChannels);
      const auto dst = static_cast<std::size_t>(((r / fh) * size + (c / fw)) * kChannels);
      for (int k = 0; k < kChannels; ++k) out[dst + k] += raster.pixels[src + k];
    }
  }
  for (auto& v : out) v *= norm;
  return out;
}

std::optional<Cell> decode_agent_cell(const MazeSpec& maze, const Raster& raster) {
  std::optional<Cell> found;
  for (int r = 0; r < maze.rows; ++r) {
    for (int c = 0; c < maze.cols; ++c) {
      const int pr = kBorderPx + r * kCellPx + kCellPx / 2;
      const int pc = kBorderPx + c * kCellPx + kCellPx / 2;
      if (raster.at(pr, pc) == kAgentColor) {
        if (found) return std::nullopt;
        found = Cell{r, c};
      }
    }
  }
  return found;
}

GoalMazeEnv::GoalMazeEnv(MazeSpec maze, int horizon) : maze_(std::move(maze)), horizon_(horizon) {
  if (horizon_ < 1) throw ConfigError("env horizon must be >= 1");
  maze_.validate();
}

ResetObservation GoalMazeEnv::reset(Cell goal) {
  if (std::find(maze_.goal_candidates.begin(), maze_.goal_candidates.end(), goal) ==
      maze_.goal_candidates.end()) {
    throw UsageError("reset: " + to_string(goal) + " is not a goal candidate of this maze");
  }
  state_ = GridState{};
  state_.agent = maze_.start;
  state_.goal = goal;
  active_ = true;
  return {render_pixels(maze_, state_, RenderMode::state),
          render_pixels(maze_, state_, RenderMode::goal)};
}

StepResult GoalMazeEnv::step(Action action) {
  if (!active_ || state_.done) throw UsageError("step: episode is not active");
  state_.agent = apply_action(maze_, state_.agent, action);
  ++state_.steps;
  StepResult r;
  if (state_.agent == *state_.goal) {
    r.reward = kGoalReward;
    r.reached = true;
    r.done = true;
  } else {
    r.reward = kStepPenalty;
    r.done = state_.steps >= horizon_;
  }
  state_.done = r.done;
  return r;
}

KeyChestEnv::KeyChestEnv(MazeSpec maze, int horizon) : maze_(std::move(maze)), horizon_(horizon) {
  if (!maze_.key || !maze_.chest) throw ConfigError("KeyChest maze needs a key 'K' and a chest 'C'");
  if (horizon_ < 1) throw ConfigError("env horizon must be >= 1");
  maze_.validate();
}

std::vector<Cell> KeyChestEnv::start_cells() const {
  std::vector<Cell> out;
  for (const Cell c : maze_.floor_cells()) {
    if (c != *maze_.key && c != *maze_.chest) out.push_back(c);
  }
  return out;
}

Raster KeyChestEnv::reset(Rng& rng) {
  const auto cells = start_cells();
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  return reset_at(cells[pick(rng)]);
}

Raster KeyChestEnv::reset_at(Cell start) {
  if (!maze_.is_floor(start) || start == *maze_.key || start == *maze_.chest) {
    throw UsageError("KeyChest reset: invalid start " + to_string(start));
  }
  state_ = GridState{};
  state_.agent = start;
  active_ = true;
  return observe();
}

StepResult KeyChestEnv::step(Action action) {
  if (!active_ || state_.done) throw UsageError("step: episode is not active");
  state_.agent = apply_action(maze_, state_.agent, action);
  ++state_.steps;
  StepResult r;
  if (state_.agent == *maze_.key && !state_.has_key) {
    state_.has_key = true;
    r.reward = kKeyReward;
  } else if (state_.agent == *maze_.chest && state_.has_key) {
    r.reward = kChestReward;
    r.reached = true;
    r.done = true;
  }
  if (state_.steps >= horizon_) r.done = true;
  state_.done = r.done;
  return r;
}

}  // namespace dgrl::env
