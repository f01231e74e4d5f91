#include <gtest/gtest.h>

#include <queue>
#include <set>

#include "robmapf/grid_env.hpp"
#include "robmapf/rng.hpp"

using namespace robmapf;
using env::Action;
using env::Cell;

namespace {

env::EpisodeState empty_state(int side, std::vector<std::pair<Cell, Cell>> agents, int horizon = 64) {
  env::EpisodeState s;
  s.map = env::GridMap(side);
  s.horizon = horizon;
  for (auto [pos, goal] : agents) s.agents.push_back({pos, goal, pos == goal});
  return s;
}

bool flood_reaches(const env::GridMap& map, Cell from, Cell to) {
  std::set<Cell> seen{from};
  std::queue<Cell> q;
  q.push(from);
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    if (c == to) return true;
    for (Cell n : {Cell{c.row - 1, c.col}, Cell{c.row + 1, c.col}, Cell{c.row, c.col - 1}, Cell{c.row, c.col + 1}}) {
      if (map.blocked(n) || seen.count(n)) continue;
      seen.insert(n);
      q.push(n);
    }
  }
  return false;
}

}  // namespace

TEST(GridEnv, EmptyMapAtZeroDensity) {
  const auto s = env::generate_instance(0, {8, 0.0, 1, 64, 2});
  EXPECT_EQ(s.map.obstacle_count(), 0);
  EXPECT_EQ(s.num_agents(), 1);
}

TEST(GridEnv, GenerationIsDeterministic) {
  const env::EnvConfig cfg;
  EXPECT_EQ(env::generate_instance(123, cfg), env::generate_instance(123, cfg));
  EXPECT_NE(env::generate_instance(123, cfg), env::generate_instance(124, cfg));
}

TEST(GridEnv, StoryboardInstanceHasSixObstaclesAndConnectedAgents) {
  const auto s = env::generate_instance(2000, {});
  EXPECT_EQ(s.map.obstacle_count(), 6);
  EXPECT_EQ(s.num_agents(), 4);
  for (const auto& a : s.agents) EXPECT_TRUE(flood_reaches(s.map, a.pos, a.goal));
}

TEST(GridEnv, GeneratedInstancesSatisfyInvariants) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto s = env::generate_instance(seed, {});
    std::set<Cell> starts, goals;
    for (const auto& a : s.agents) {
      EXPECT_FALSE(s.map.blocked(a.pos));
      EXPECT_FALSE(s.map.blocked(a.goal));
      EXPECT_TRUE(flood_reaches(s.map, a.pos, a.goal)) << "seed " << seed;
      starts.insert(a.pos);
      goals.insert(a.goal);
    }
    EXPECT_EQ(starts.size(), 4u);
    EXPECT_EQ(goals.size(), 4u);
    EXPECT_EQ(s.map.obstacle_count(), 6);
  }
}

TEST(GridEnv, CornerWindowTreatsOutsideAsObstacles) {
  const auto s = empty_state(8, {{{0, 0}, {5, 5}}});
  const auto o = env::observe(s, 0);
  for (int wr = 0; wr < 5; ++wr)
    for (int wc = 0; wc < 5; ++wc) {
      const bool outside = wr < 2 || wc < 2;
      EXPECT_EQ(o[env::obs_index(env::kChannelObstacles, wr, wc)], outside ? 1.0f : 0.0f) << wr << "," << wc;
    }
}

TEST(GridEnv, GoalOnOwnCellLightsCenterHint) {
  const auto s = empty_state(8, {{{3, 3}, {3, 3}}});
  const auto o = env::observe(s, 0);
  EXPECT_EQ(o[env::obs_index(env::kChannelHint, 2, 2)], 1.0f);
}

TEST(GridEnv, FarGoalProjectsToBorder) {
  const auto s = empty_state(8, {{{3, 1}, {3, 6}}});
  const auto o = env::observe(s, 0);
  EXPECT_EQ(o[env::obs_index(env::kChannelHint, 2, 4)], 1.0f);
  float total = 0.0f;
  for (int i = 0; i < env::kObsCells; ++i) total += o[static_cast<std::size_t>(env::kChannelHint * env::kObsCells + i)];
  EXPECT_EQ(total, 1.0f);
}

TEST(GridEnv, HintInsideWindowIsExact) {
  EXPECT_EQ(env::hint_cell({4, 4}, {5, 3}), (Cell{3, 1}));
  // Diagonal far goal lands on the corner.
  EXPECT_EQ(env::hint_cell({0, 0}, {7, 7}), (Cell{4, 4}));
}

TEST(GridEnv, ObservationsAreBinaryWithOneHint) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = env::generate_instance(seed, {});
    for (int i = 0; i < s.num_agents(); ++i) {
      const auto o = env::observe(s, i);
      int hints = 0;
      for (int k = 0; k < env::kObsSize; ++k) {
        EXPECT_TRUE(o[static_cast<std::size_t>(k)] == 0.0f || o[static_cast<std::size_t>(k)] == 1.0f);
        if (k >= env::kChannelHint * env::kObsCells && o[static_cast<std::size_t>(k)] == 1.0f) ++hints;
      }
      EXPECT_EQ(hints, 1);
      EXPECT_EQ(o[env::obs_index(env::kChannelAgents, 2, 2)], 0.0f);
    }
  }
}

TEST(GridEnv, BlockedMoveWaitsWithoutCollision) {
  auto s = empty_state(8, {{{0, 0}, {7, 7}}});
  s.map.set_obstacle({0, 1}, true);
  const std::vector<Action> a{Action::Right};
  const auto out = env::step(s, a);
  EXPECT_EQ(s.agents[0].pos, (Cell{0, 0}));
  EXPECT_FALSE(out.collided[0]);
  EXPECT_FLOAT_EQ(out.rewards[0], env::kStepPenalty);
}

TEST(GridEnv, SwapRevertsBothAndFlags) {
  auto s = empty_state(8, {{{2, 2}, {7, 7}}, {{2, 3}, {0, 0}}});
  const std::vector<Action> a{Action::Right, Action::Left};
  const auto out = env::step(s, a);
  EXPECT_EQ(s.agents[0].pos, (Cell{2, 2}));
  EXPECT_EQ(s.agents[1].pos, (Cell{2, 3}));
  EXPECT_TRUE(out.collided[0]);
  EXPECT_TRUE(out.collided[1]);
  EXPECT_FLOAT_EQ(out.rewards[0], env::kStepPenalty + env::kCollisionPenalty);
}

TEST(GridEnv, VertexConflictCascades) {
  // 0 and 1 contend for (2,3); 2 tries to enter 1's cell and must revert too.
  auto s = empty_state(8, {{{2, 2}, {7, 7}}, {{2, 4}, {0, 0}}, {{2, 5}, {0, 7}}});
  const std::vector<Action> a{Action::Right, Action::Left, Action::Left};
  const auto out = env::step(s, a);
  EXPECT_EQ(s.agents[0].pos, (Cell{2, 2}));
  EXPECT_EQ(s.agents[1].pos, (Cell{2, 4}));
  EXPECT_EQ(s.agents[2].pos, (Cell{2, 5}));
  EXPECT_TRUE(out.collided[0]);
  EXPECT_TRUE(out.collided[1]);
  EXPECT_TRUE(out.collided[2]);
}

TEST(GridEnv, ReachedAgentsPark) {
  auto s = empty_state(8, {{{2, 2}, {2, 3}}, {{5, 5}, {0, 0}}});
  auto out = env::step(s, std::vector<Action>{Action::Right, Action::Wait});
  EXPECT_TRUE(s.agents[0].reached);
  EXPECT_FLOAT_EQ(out.rewards[0], env::kGoalReward);
  out = env::step(s, std::vector<Action>{Action::Left, Action::Wait});
  EXPECT_EQ(s.agents[0].pos, (Cell{2, 3}));
  EXPECT_FLOAT_EQ(out.rewards[0], 0.0f);
}

TEST(GridEnv, AllReachedIsTerminal) {
  auto s = empty_state(8, {{{2, 2}, {2, 3}}});
  const auto out = env::step(s, std::vector<Action>{Action::Right});
  EXPECT_TRUE(out.done);
  EXPECT_TRUE(s.terminal());
  EXPECT_THROW(env::step(s, std::vector<Action>{Action::Wait}), env::EnvError);
}

TEST(GridEnv, WrongActionCountThrows) {
  auto s = env::generate_instance(1, {});
  EXPECT_THROW(env::step(s, std::vector<Action>{Action::Wait}), env::EnvError);
}

TEST(GridEnv, SuccessRateIsFractional) {
  auto s = empty_state(8, {{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}, {{2, 2}, {2, 2}}, {{3, 3}, {4, 4}}}, 1);
  env::step(s, std::vector<Action>(4, Action::Wait));
  EXPECT_DOUBLE_EQ(env::success_rate(s), 0.75);

  auto none = empty_state(8, {{{0, 0}, {7, 7}}, {{1, 1}, {6, 6}}, {{2, 2}, {5, 5}}, {{3, 3}, {4, 4}}}, 1);
  env::step(none, std::vector<Action>(4, Action::Wait));
  EXPECT_DOUBLE_EQ(env::success_rate(none), 0.0);
  EXPECT_THROW(env::success_rate(env::generate_instance(0, {})), env::EnvError);
}

TEST(GridEnv, RandomEpisodesKeepOccupancyAndRewardBounds) {
  Rng rng(7);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = env::generate_instance(seed, {});
    std::vector<double> total(4, 0.0);
    while (!s.terminal()) {
      std::vector<Action> a;
      for (int i = 0; i < 4; ++i) a.push_back(static_cast<Action>(rng.below(5)));
      const auto out = env::step(s, a);
      for (int i = 0; i < 4; ++i) total[static_cast<std::size_t>(i)] += out.rewards[static_cast<std::size_t>(i)];
      std::set<Cell> occupied;
      for (const auto& ag : s.agents) {
        occupied.insert(ag.pos);
        EXPECT_FALSE(s.map.blocked(ag.pos));
      }
      EXPECT_EQ(occupied.size(), 4u);
    }
    for (double r : total) {
      EXPECT_GE(r, -64 * 0.06 - 1e-6);
      EXPECT_LE(r, 1.0 + 1e-6);
    }
    const double sr = env::success_rate(s);
    EXPECT_GE(sr, 0.0);
    EXPECT_LE(sr, 1.0);
  }
}

TEST(GridEnv, TrajectoryIsReproducible) {
  const auto run = [] {
    Rng rng(99);
    auto s = env::generate_instance(5, {});
    std::vector<env::EpisodeState> states;
    while (!s.terminal()) {
      std::vector<Action> a;
      for (int i = 0; i < 4; ++i) a.push_back(static_cast<Action>(rng.below(5)));
      env::step(s, a);
      states.push_back(s);
    }
    return states;
  };
  EXPECT_EQ(run(), run());
}

TEST(GridEnv, JsonRoundTrip) {
  const auto s = env::generate_instance(2000, {});
  const auto back = env::instance_from_json(env::instance_to_json(s));
  EXPECT_EQ(back.map, s.map);
  EXPECT_EQ(back.agents, s.agents);
  EXPECT_EQ(back.horizon, s.horizon);
}

TEST(GridEnv, RejectsInvalidConfig) {
  EXPECT_THROW(env::validate({0, 0.1, 4, 64, 2}), env::EnvError);
  EXPECT_THROW(env::validate({8, 1.5, 4, 64, 2}), env::EnvError);
  EXPECT_THROW(env::validate({8, 0.1, 0, 64, 2}), env::EnvError);
  EXPECT_THROW(env::validate({8, 0.1, 4, 64, 3}), env::EnvError);
}
