#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace robmapf::env {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Action : std::uint8_t { Wait = 0, Up = 1, Down = 2, Left = 3, Right = 4 };
inline constexpr int kNumActions = 5;

const char* action_name(Action a);
Cell apply_move(Cell c, Action a);

// Egocentric window geometry. The policy backbone is built for this size.
inline constexpr int kObsRadius = 2;
inline constexpr int kObsSide = 2 * kObsRadius + 1;
inline constexpr int kObsChannels = 3;
inline constexpr int kObsCells = kObsSide * kObsSide;
inline constexpr int kObsSize = kObsChannels * kObsCells;

inline constexpr int kChannelObstacles = 0;
inline constexpr int kChannelAgents = 1;
inline constexpr int kChannelHint = 2;

// Channel-major: index = channel * 25 + window_row * 5 + window_col.
using Observation = std::array<float, kObsSize>;

constexpr int obs_index(int channel, int wrow, int wcol) {
  return channel * kObsCells + wrow * kObsSide + wcol;
}

inline constexpr float kGoalReward = 1.0f;
inline constexpr float kStepPenalty = -0.01f;
inline constexpr float kCollisionPenalty = -0.05f;

struct EnvConfig {
  int side = 8;
  double density = 0.1;
  int agents = 4;
  int horizon = 64;
  int radius = kObsRadius;
};

void validate(const EnvConfig& cfg);

class GridMap {
 public:
  GridMap() = default;
  explicit GridMap(int side);

  int side() const { return side_; }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.col >= 0 && c.row < side_ && c.col < side_;
  }
  // Out-of-grid cells count as blocked.
  bool blocked(Cell c) const {
    return !in_bounds(c) || cells_[static_cast<std::size_t>(c.row * side_ + c.col)] != 0;
  }
  void set_obstacle(Cell c, bool value);
  int obstacle_count() const;
  std::vector<Cell> obstacles() const;

  bool operator==(const GridMap&) const = default;

 private:
  int side_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct AgentState {
  Cell pos;
  Cell goal;
  bool reached = false;
  bool operator==(const AgentState&) const = default;
};

struct EpisodeState {
  GridMap map;
  std::vector<AgentState> agents;
  int t = 0;
  int horizon = 64;
  double density = 0.0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  bool all_reached() const;
  bool terminal() const { return t >= horizon || all_reached(); }
  bool operator==(const EpisodeState&) const = default;
};

struct StepOutcome {
  std::vector<float> rewards;
  std::vector<bool> collided;
  bool done = false;
};

// Number of obstacles placed for a given density.
int obstacle_target(int side, double density);

// Deterministic in `seed`. Throws EnvError when no connected instance is
// found within kMaxGenerationRetries resamples.
inline constexpr int kMaxGenerationRetries = 1000;
EpisodeState generate_instance(std::uint64_t seed, const EnvConfig& cfg);

// True when every agent's goal is reachable from its start through free cells.
bool starts_connected(const EpisodeState& state);
int bfs_distance(const GridMap& map, Cell from, Cell to);  // -1 when unreachable

Observation observe(const EpisodeState& state, int agent);
// Window cell (row, col) holding the goal hint for an agent at `pos`.
Cell hint_cell(Cell pos, Cell goal);

// Simultaneous move. Blocked moves wait; vertex and swap conflicts revert the
// movers involved and flag them. Reached agents stay parked on their goals.
StepOutcome step(EpisodeState& state, std::span<const Action> actions);

double success_rate(const EpisodeState& state);

nlohmann::json instance_to_json(const EpisodeState& state);
EpisodeState instance_from_json(const nlohmann::json& doc);

}  // namespace robmapf::env
