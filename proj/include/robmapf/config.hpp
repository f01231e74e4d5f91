#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "robmapf/attacks.hpp"
#include "robmapf/grid_env.hpp"
#include "robmapf/ppo.hpp"
#include "robmapf/robust_train.hpp"
#include "robmapf/smoothing_cert.hpp"

namespace robmapf::config {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalBlock {
  int episodes = 30;
  std::uint64_t seed_base = 50000;
  std::uint64_t episode_stride = 13;
  std::uint64_t cell_stride = 7;
  int pgd_restarts = 5;
  int bootstrap_resamples = 10000;
  bool certify = false;  // attach the certified mean radius to eval-grid reports
};

struct StoryboardBlock {
  std::uint64_t instance_seed = 50000;
  attack::AttackSpec attack = attack::AttackSpec::fgsm(0.20);
  std::vector<std::string> names;  // one per io.checkpoints entry
};

struct IoBlock {
  std::string baseline;                  // frozen baseline checkpoint
  std::string init;                      // starting checkpoint (fine-tune)
  std::vector<std::string> checkpoints;  // evaluated / certified / storyboarded
  std::vector<std::string> reports;      // report + compare inputs
};

struct RunConfig {
  env::EnvConfig env;
  ppo::PPOConfig ppo;
  int baseline_iterations = 1200;
  int baseline_select_every = 50;     // clean validation period; 0 keeps the final checkpoint
  int baseline_select_episodes = 64;
  robust::AdvConfig adv;
  robust::MacerConfig macer;
  cert::CertConfig cert;
  EvalBlock eval;
  StoryboardBlock storyboard;
  IoBlock io;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const RunConfig& cfg);
// Unknown keys and ill-typed values are errors naming the offending field.
RunConfig from_json(const nlohmann::json& doc);
void validate(const RunConfig& cfg);

// "a.b.c=value"; the value is parsed as JSON when possible, else as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Hash of the resolved experiment (io paths excluded).
std::string config_hash(const RunConfig& cfg);

eval::EvalConfig eval_config(const RunConfig& cfg, int jobs);

}  // namespace robmapf::config
