#include "robmapf/grid_env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "robmapf/rng.hpp"

namespace robmapf::env {

const char* action_name(Action a) {
  switch (a) {
    case Action::Wait: return "WAIT";
    case Action::Up: return "UP";
    case Action::Down: return "DOWN";
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
  }
  return "?";
}

Cell apply_move(Cell c, Action a) {
  switch (a) {
    case Action::Wait: return c;
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
  }
  return c;
}

void validate(const EnvConfig& cfg) {
  if (cfg.side < 4) throw EnvError("env.L must be >= 4");
  if (!(cfg.density >= 0.0 && cfg.density < 0.5)) throw EnvError("env.rho must be in [0, 0.5)");
  if (cfg.agents < 1) throw EnvError("env.N must be >= 1");
  if (cfg.horizon < 1) throw EnvError("env.T must be >= 1");
  if (cfg.radius != kObsRadius) throw EnvError("env.r must be 2 for the fixed backbone");
  const int free_cells = cfg.side * cfg.side - obstacle_target(cfg.side, cfg.density);
  if (free_cells < 2 * cfg.agents) throw EnvError("not enough free cells for distinct starts and goals");
}

GridMap::GridMap(int side)
    : side_(side), cells_(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 0) {}

void GridMap::set_obstacle(Cell c, bool value) {
  if (!in_bounds(c)) throw EnvError("obstacle outside the grid");
  cells_[static_cast<std::size_t>(c.row * side_ + c.col)] = value ? 1 : 0;
}

int GridMap::obstacle_count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::vector<Cell> GridMap::obstacles() const {
  std::vector<Cell> out;
  for (int r = 0; r < side_; ++r)
    for (int c = 0; c < side_; ++c)
      if (blocked({r, c})) out.push_back({r, c});
  return out;
}

bool EpisodeState::all_reached() const {
  return std::all_of(agents.begin(), agents.end(), [](const AgentState& a) { return a.reached; });
}

int obstacle_target(int side, double density) {
  // The epsilon keeps values like 0.1 * 64 = 6.4000000000000004 stable.
  return static_cast<int>(std::floor(density * side * side + 1e-9));
}

int bfs_distance(const GridMap& map, Cell from, Cell to) {
  if (map.blocked(from) || map.blocked(to)) return -1;
  const int n = map.side();
  std::vector<int> dist(static_cast<std::size_t>(n * n), -1);
  std::deque<Cell> frontier{from};
  dist[static_cast<std::size_t>(from.row * n + from.col)] = 0;
  while (!frontier.empty()) {
    const Cell cur = frontier.front();
    frontier.pop_front();
    const int d = dist[static_cast<std::size_t>(cur.row * n + cur.col)];
    if (cur == to) return d;
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      const Cell nb = apply_move(cur, a);
      if (map.blocked(nb)) continue;
      auto& slot = dist[static_cast<std::size_t>(nb.row * n + nb.col)];
      if (slot >= 0) continue;
      slot = d + 1;
      frontier.push_back(nb);
    }
  }
  return -1;
}

bool starts_connected(const EpisodeState& state) {
  return std::all_of(state.agents.begin(), state.agents.end(), [&](const AgentState& a) {
    return bfs_distance(state.map, a.pos, a.goal) >= 0;
  });
}

EpisodeState generate_instance(std::uint64_t seed, const EnvConfig& cfg) {
  validate(cfg);
  const int n = cfg.side;
  const int target = obstacle_target(n, cfg.density);
  Rng rng(mix64(seed));
  std::vector<int> order(static_cast<std::size_t>(n * n));
  for (int attempt = 0; attempt < kMaxGenerationRetries; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<int>(order));

    EpisodeState state;
    state.map = GridMap(n);
    state.horizon = cfg.horizon;
    state.density = cfg.density;
    for (int i = 0; i < target; ++i) state.map.set_obstacle({order[i] / n, order[i] % n}, true);

    // Starts and goals come from the remaining cells in shuffled order.
    std::vector<int> free_cells(order.begin() + target, order.end());
    rng.shuffle(std::span<int>(free_cells));
    state.agents.resize(static_cast<std::size_t>(cfg.agents));
    for (int i = 0; i < cfg.agents; ++i) {
      const int s = free_cells[static_cast<std::size_t>(i)];
      const int g = free_cells[static_cast<std::size_t>(cfg.agents + i)];
      state.agents[static_cast<std::size_t>(i)] = {{s / n, s % n}, {g / n, g % n}, false};
    }
    if (starts_connected(state)) return state;
  }
  throw EnvError("instance generation failed after " + std::to_string(kMaxGenerationRetries) +
                 " retries");
}

Cell hint_cell(Cell pos, Cell goal) {
  const int dr = goal.row - pos.row;
  const int dc = goal.col - pos.col;
  const int cheb = std::max(std::abs(dr), std::abs(dc));
  if (cheb <= kObsRadius) return {dr + kObsRadius, dc + kObsRadius};
  // Scale the goal direction onto the window border and take the nearest
  // border cell; ties resolve to the first cell in row-major order.
  const double scale = static_cast<double>(kObsRadius) / cheb;
  const double pr = dr * scale;
  const double pc = dc * scale;
  Cell best{};
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = -kObsRadius; i <= kObsRadius; ++i) {
    for (int j = -kObsRadius; j <= kObsRadius; ++j) {
      if (std::max(std::abs(i), std::abs(j)) != kObsRadius) continue;
      const double d = (i - pr) * (i - pr) + (j - pc) * (j - pc);
      if (d < best_d - 1e-12) {
        best_d = d;
        best = {i + kObsRadius, j + kObsRadius};
      }
    }
  }
  return best;
}

Observation observe(const EpisodeState& state, int agent) {
  if (agent < 0 || agent >= state.num_agents()) throw EnvError("agent index out of range");
  Observation obs{};
  const AgentState& self = state.agents[static_cast<std::size_t>(agent)];
  for (int i = 0; i < kObsSide; ++i) {
    for (int j = 0; j < kObsSide; ++j) {
      const Cell c{self.pos.row - kObsRadius + i, self.pos.col - kObsRadius + j};
      if (state.map.blocked(c)) obs[obs_index(kChannelObstacles, i, j)] = 1.0f;
    }
  }
  for (int k = 0; k < state.num_agents(); ++k) {
    if (k == agent) continue;
    const Cell p = state.agents[static_cast<std::size_t>(k)].pos;
    const int i = p.row - self.pos.row + kObsRadius;
    const int j = p.col - self.pos.col + kObsRadius;
    if (i >= 0 && i < kObsSide && j >= 0 && j < kObsSide) obs[obs_index(kChannelAgents, i, j)] = 1.0f;
  }
  const Cell h = hint_cell(self.pos, self.goal);
  obs[obs_index(kChannelHint, h.row, h.col)] = 1.0f;
  return obs;
}

StepOutcome step(EpisodeState& state, std::span<const Action> actions) {
  const int n = state.num_agents();
  if (state.terminal()) throw EnvError("step() called on a terminal episode");
  if (static_cast<int>(actions.size()) != n) throw EnvError("action count does not match agent count");

  std::vector<Cell> target(static_cast<std::size_t>(n));
  StepOutcome out;
  out.rewards.assign(static_cast<std::size_t>(n), 0.0f);
  out.collided.assign(static_cast<std::size_t>(n), false);

  for (int i = 0; i < n; ++i) {
    const AgentState& a = state.agents[static_cast<std::size_t>(i)];
    Cell proposal = a.reached ? a.pos : apply_move(a.pos, actions[static_cast<std::size_t>(i)]);
    if (state.map.blocked(proposal)) proposal = a.pos;
    target[static_cast<std::size_t>(i)] = proposal;
  }
  auto moving = [&](int i) { return target[static_cast<std::size_t>(i)] != state.agents[static_cast<std::size_t>(i)].pos; };
  auto revert = [&](int i) {
    target[static_cast<std::size_t>(i)] = state.agents[static_cast<std::size_t>(i)].pos;
    out.collided[static_cast<std::size_t>(i)] = true;
  };

  // Swap conflicts.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!moving(i) || !moving(j)) continue;
      if (target[static_cast<std::size_t>(i)] == state.agents[static_cast<std::size_t>(j)].pos &&
          target[static_cast<std::size_t>(j)] == state.agents[static_cast<std::size_t>(i)].pos) {
        revert(i);
        revert(j);
      }
    }
  }
  // Vertex conflicts; a revert can block the agent behind, so iterate.
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j || target[static_cast<std::size_t>(i)] != target[static_cast<std::size_t>(j)]) continue;
        if (moving(i)) {
          revert(i);
          changed = true;
        }
        if (moving(j)) {
          revert(j);
          changed = true;
        }
      }
    }
  }

  state.t += 1;
  for (int i = 0; i < n; ++i) {
    AgentState& a = state.agents[static_cast<std::size_t>(i)];
    if (a.reached) {
      out.collided[static_cast<std::size_t>(i)] = false;
      continue;
    }
    a.pos = target[static_cast<std::size_t>(i)];
    float r = 0.0f;
    if (a.pos == a.goal) {
      a.reached = true;
      r = kGoalReward;
    } else {
      r = kStepPenalty;
      if (out.collided[static_cast<std::size_t>(i)]) r += kCollisionPenalty;
    }
    out.rewards[static_cast<std::size_t>(i)] = r;
  }
  out.done = state.terminal();
  return out;
}

double success_rate(const EpisodeState& state) {
  if (!state.terminal()) throw EnvError("success_rate() requires a terminal episode");
  const auto reached = std::count_if(state.agents.begin(), state.agents.end(),
                                     [](const AgentState& a) { return a.reached; });
  return static_cast<double>(reached) / static_cast<double>(state.num_agents());
}

namespace {

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.row, c.col}); }

Cell cell_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw EnvError("cell must be [row, col]");
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

}  // namespace

nlohmann::json instance_to_json(const EpisodeState& state) {
  nlohmann::json doc;
  doc["L"] = state.map.side();
  doc["rho"] = state.density;
  doc["N"] = state.num_agents();
  doc["T"] = state.horizon;
  auto& obstacles = doc["obstacles"] = nlohmann::json::array();
  for (Cell c : state.map.obstacles()) obstacles.push_back(cell_json(c));
  auto& starts = doc["starts"] = nlohmann::json::array();
  auto& goals = doc["goals"] = nlohmann::json::array();
  for (const AgentState& a : state.agents) {
    starts.push_back(cell_json(a.pos));
    goals.push_back(cell_json(a.goal));
  }
  return doc;
}

EpisodeState instance_from_json(const nlohmann::json& doc) {
  try {
    EpisodeState state;
    const int side = doc.at("L").get<int>();
    if (side < 1) throw EnvError("instance L must be positive");
    state.map = GridMap(side);
    state.density = doc.at("rho").get<double>();
    state.horizon = doc.at("T").get<int>();
    for (const auto& c : doc.at("obstacles")) state.map.set_obstacle(cell_from(c), true);
    const auto& starts = doc.at("starts");
    const auto& goals = doc.at("goals");
    const int n = doc.at("N").get<int>();
    if (static_cast<int>(starts.size()) != n || static_cast<int>(goals.size()) != n)
      throw EnvError("instance start/goal lists must have N entries");
    for (int i = 0; i < n; ++i) {
      AgentState a{cell_from(starts[static_cast<std::size_t>(i)]), cell_from(goals[static_cast<std::size_t>(i)]), false};
      if (state.map.blocked(a.pos) || state.map.blocked(a.goal))
        throw EnvError("instance start or goal on a blocked cell");
      a.reached = a.pos == a.goal;
      state.agents.push_back(a);
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw EnvError(std::string("malformed instance document: ") + e.what());
  }
}

}  // namespace robmapf::env
