#pragma once

// 6x6 pixel gridworlds: goal-reaching mazes (spiral, loop) and KeyChest.

#include "dgrl/nn.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgrl::env {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

std::string to_string(Cell c);

enum class Action : int { up = 0, down = 1, left = 2, right = 3 };
inline constexpr int kNumActions = 4;

enum class Topology { spiral, loop, keychest, custom };

std::string_view to_string(Topology t);
Topology topology_from_string(std::string_view name);

struct MazeSpec {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> walls;  // row-major, 1 = wall
  Topology topology = Topology::custom;
  Cell start;
  std::vector<Cell> goal_candidates;
  std::optional<Cell> key;
  std::optional<Cell> chest;

  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }
  bool is_floor(Cell c) const {
    return in_bounds(c) && walls[static_cast<std::size_t>(c.row * cols + c.col)] == 0;
  }
  int index(Cell c) const { return c.row * cols + c.col; }
  Cell cell_at(int index) const { return {index / cols, index % cols}; }
  int cell_count() const { return rows * cols; }
  std::vector<Cell> floor_cells() const;

  // Start, goals, key and chest on floor; floor cells form one component.
  void validate() const;
};

// Grid text: '#' wall, '.' floor, 'S' start, 'G' goal candidate, 'K' key,
// 'C' chest. Blank lines and lines starting with ';' are ignored.
MazeSpec parse_maze(std::string_view text, Topology tag = Topology::custom);
MazeSpec load_maze_file(const std::filesystem::path& path);
std::string format_maze(const MazeSpec& maze);

// Canonical fixed layouts. The seed is accepted for interface stability but
// does not change a fixed layout.
MazeSpec build_maze(Topology topology, std::uint64_t seed = 0);
MazeSpec build_maze(std::string_view topology, std::uint64_t seed = 0);

Cell apply_action(const MazeSpec& maze, Cell from, Action a);
std::vector<Cell> flood_fill(const MazeSpec& maze, Cell from);
// BFS distance; -1 when unreachable.
int shortest_path_length(const MazeSpec& maze, Cell from, Cell to);
// Depth-first walk from the start: the corridor order for non-branching mazes.
std::vector<Cell> corridor_order(const MazeSpec& maze);

struct GoalDistribution {
  std::vector<Cell> train_goals;
  std::vector<Cell> test_goals;

  bool disjoint() const;
};

// Train goals evenly spaced along the corridor (start excluded); test goals
// evenly spaced over the remaining candidates.
GoalDistribution canonical_goal_split(const MazeSpec& maze, int train_count, int test_count);

// Uniform draw; throws ConfigError on an empty list.
Cell sample_goal(std::span<const Cell> goals, Rng& rng);

struct GridState {
  Cell agent;
  std::optional<Cell> goal;
  int steps = 0;
  bool done = false;
  bool has_key = false;
};

inline constexpr int kRasterSize = 80;
inline constexpr int kChannels = 3;
inline constexpr int kCellPx = 13;   // 6 * 13 = 78 pixels of cells
inline constexpr int kBorderPx = 1;  // plus one border pixel on each side

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWallColor{40, 40, 40};
inline constexpr Rgb kFloorColor{235, 235, 235};
inline constexpr Rgb kAgentColor{220, 30, 50};
inline constexpr Rgb kGoalColor{20, 170, 60};
inline constexpr Rgb kKeyColor{250, 200, 0};
inline constexpr Rgb kChestColor{30, 80, 230};

struct Raster {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height x width x 3

  Rgb at(int r, int c) const;
  bool operator==(const Raster&) const = default;
};

enum class RenderMode { state, goal };

// State mode draws walls, floor, the goal marker (if any), key, chest and
// the agent on top. Goal mode draws the goal state itself: the agent
// standing on the goal cell.
Raster render_pixels(const MazeSpec& maze, const GridState& state, RenderMode mode);

// Average-pools an 80x80x3 raster to size x size x 3, scaled to [0, 1].
std::vector<double> downsample(const Raster& raster, int size);

// Colour-matching decoder: the cell whose block centre shows the agent colour.
std::optional<Cell> decode_agent_cell(const MazeSpec& maze, const Raster& raster);

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool reached = false;  // goal reached (maze) or chest opened (KeyChest)
};

inline constexpr double kStepPenalty = -1.0;
inline constexpr double kGoalReward = 5.0;
inline constexpr double kKeyReward = 1.0;
inline constexpr double kChestReward = 5.0;

struct ResetObservation {
  Raster state;
  Raster goal;
};

class GoalMazeEnv {
 public:
  explicit GoalMazeEnv(MazeSpec maze, int horizon = 100);

  ResetObservation reset(Cell goal);
  // -1 per step; +5 on the step that reaches the goal (episode ends).
  StepResult step(Action action);

  Raster observe() const { return render_pixels(maze_, state_, RenderMode::state); }
  const GridState& state() const { return state_; }
  const MazeSpec& maze() const { return maze_; }
  int horizon() const { return horizon_; }

 private:
  MazeSpec maze_;
  int horizon_;
  GridState state_;
  bool active_ = false;
};

class KeyChestEnv {
 public:
  explicit KeyChestEnv(MazeSpec maze, int horizon = 100);

  // Uniformly random start over floor cells other than key and chest.
  Raster reset(Rng& rng);
  Raster reset_at(Cell start);
  // +1 the first time the key cell is entered, +5 for entering the chest
  // while holding the key (episode ends), otherwise 0.
  StepResult step(Action action);

  Raster observe() const { return render_pixels(maze_, state_, RenderMode::state); }
  const GridState& state() const { return state_; }
  const MazeSpec& maze() const { return maze_; }
  int horizon() const { return horizon_; }
  std::vector<Cell> start_cells() const;

 private:
  MazeSpec maze_;
  int horizon_;
  GridState state_;
  bool active_ = false;
};

}  // namespace dgrl::env
