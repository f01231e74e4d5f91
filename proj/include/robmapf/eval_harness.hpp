#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "robmapf/attacks.hpp"
#include "robmapf/grid_env.hpp"
#include "robmapf/policy_net.hpp"

namespace robmapf::eval {

// Episode k of cell n uses seed base + episode_stride * k + cell_stride * n.
struct SeedPool {
  std::uint64_t base = 50000;
  std::uint64_t episode_stride = 13;
  std::uint64_t cell_stride = 7;

  std::uint64_t episode_seed(int k, int cell) const {
    return base + episode_stride * static_cast<std::uint64_t>(k) + cell_stride * static_cast<std::uint64_t>(cell);
  }
};

// Restart r of an episode draws attack randomness from episode seed + 1000 r.
inline constexpr std::uint64_t kRestartSeedStride = 1000;

// FGSM x5, PGD x5, Gaussian x4, salt-and-pepper x4, channel dropout x3.
std::vector<attack::AttackSpec> default_grid();
inline constexpr int kGridCells = 21;
inline constexpr int kCleanCellIndex = kGridCells;

struct EvalConfig {
  int episodes = 30;
  SeedPool seeds;
  std::vector<attack::AttackSpec> grid = default_grid();
  int jobs = 1;
};

// Argmax rollout of one instance with `spec` applied to every agent's
// observation at every step. Gradient attacks read `source`.
double run_episode(const net::NetParams& policy, const net::NetParams& source, const attack::AttackSpec& spec,
                   const env::EnvConfig& env_cfg, std::uint64_t env_seed, std::uint64_t attack_seed);

struct EvalCell {
  attack::AttackSpec spec;
  int index = 0;
  std::vector<double> episode_success;
  double mean = 0.0;

  nlohmann::json to_json() const;
  static EvalCell from_json(const nlohmann::json& doc);
};

// White-box cell: the policy is its own attack source.
EvalCell run_cell(const net::NetParams& policy, const attack::AttackSpec& spec, int cell_index,
                  const env::EnvConfig& env_cfg, int episodes, const SeedPool& seeds, int jobs,
                  std::uint64_t restart = 0);

struct EvalReport {
  EvalCell clean;
  std::vector<EvalCell> cells;
  double mean_adv = 0.0;
  double worst_adv = 0.0;
  int worst_index = 0;
  std::optional<double> mean_radius;
  std::string checkpoint_hash;
  std::string config_hash;

  // Recomputes mean / worst from the per-episode vectors.
  void aggregate();
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  std::string to_csv() const;
};

EvalReport run_grid(const net::NetParams& policy, const env::EnvConfig& env_cfg, const EvalConfig& cfg);

struct RestartResult {
  double eps = 0.0;
  int cell_index = 0;
  std::vector<double> restart_means;
  double worst = 0.0;
  nlohmann::json to_json() const;
};

// Worst-of-restarts PGD success per budget. Each budget must appear as a PGD
// cell of cfg.grid so the episodes reuse that cell's seeds.
std::vector<RestartResult> multi_restart_pgd(const net::NetParams& policy, std::span<const double> eps_list,
                                             int restarts, const env::EnvConfig& env_cfg, const EvalConfig& cfg);

struct BootstrapResult {
  double gap = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  nlohmann::json to_json() const;
};

// Mean of a_i - b_i with a percentile CI over resampled cell indices.
BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples = 10000,
                                 std::uint64_t seed = 0);

struct StoryboardAgentStep {
  env::Cell pos;
  bool reached = false;
  std::optional<int> clean_action;
  std::optional<int> attacked_action;
  bool flip = false;
};

struct StoryboardTrack {
  std::string name;
  std::vector<std::vector<StoryboardAgentStep>> steps;  // [t][agent]; t = 0 is the start
  int flips = 0;
  double success = 0.0;
};

struct Storyboard {
  nlohmann::json instance;
  attack::AttackSpec spec;
  std::vector<StoryboardTrack> tracks;

  nlohmann::json to_json() const;
};

struct NamedPolicy {
  std::string name;
  const net::NetParams* params;
};

Storyboard storyboard_capture(std::span<const NamedPolicy> policies, const env::EnvConfig& env_cfg,
                              std::uint64_t instance_seed, const attack::AttackSpec& spec);

// Static strip of per-step frames for one track.
std::string storyboard_svg(const Storyboard& board, std::size_t track);

}  // namespace robmapf::eval
