// Shared trained weights for tests that need a non-trivial policy.
#pragma once

#include <filesystem>

#include "robmapf/policy_net.hpp"
#include "robmapf/ppo.hpp"

#ifndef ROBMAPF_TEST_CACHE
#define ROBMAPF_TEST_CACHE "."
#endif

namespace fixtures {

// Short PPO run, cached on disk so each test process trains at most once.
inline const robmapf::net::NetParams& trained_policy() {
  using namespace robmapf;
  static const net::NetParams params = [] {
    const std::filesystem::path path = std::filesystem::path(ROBMAPF_TEST_CACHE) / "trained_policy_40.ckpt";
    if (std::filesystem::exists(path)) return net::load_checkpoint(path);
    const auto r = ppo::train_ppo(net::init_params(0), {}, {}, 40, 0);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    net::save_checkpoint(r.params, tmp);
    std::filesystem::rename(tmp, path);
    return r.params;
  }();
  return params;
}

// Clean observations visited by the policy's own rollouts.
inline robmapf::net::ObsBatch visited_states(const robmapf::net::NetParams& p, int count, std::uint64_t seed) {
  using namespace robmapf;
  net::ObsBatch out(0, env::kObsSize);
  int episodes = 8;
  while (true) {
    const auto batch = ppo::rollout(p, {}, seed, episodes, 0.95, 0.95);
    if (batch.obs.rows() >= count) return batch.obs.topRows(count);
    episodes *= 2;
  }
}

}  // namespace fixtures
