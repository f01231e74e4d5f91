#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "robmapf/grid_env.hpp"
#include "robmapf/policy_net.hpp"
#include "robmapf/rng.hpp"

namespace robmapf::ppo {

struct PPOConfig {
  double lr = 3e-4;
  double gamma = 0.95;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double clip = 0.2;
  int epochs = 4;
  int minibatches = 4;
  int episodes = 16;  // per rollout batch
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
};

void validate(const PPOConfig& cfg);

// One record per (episode, step, unreached agent), in collection order.
struct TrajectoryBatch {
  net::ObsBatch obs;
  std::vector<int> actions;
  net::Vector old_log_probs;
  net::Vector values;
  net::Vector rewards;
  std::vector<std::uint8_t> dones;
  net::Vector advantages;
  net::Vector returns;
  std::vector<int> episode;
  std::vector<int> agent;
  std::vector<int> step;

  std::vector<double> episode_success;
  std::int64_t env_steps = 0;
  double mean_entropy = 0.0;

  std::size_t size() const { return actions.size(); }
  double mean_success() const;
};

// Samples actions from the policy on clean observations. Episode e uses the
// instance seed stream_seed(seed, e); action sampling draws from its own
// stream. Advantages and returns are filled using gamma / gae_lambda.
TrajectoryBatch rollout(const net::NetParams& params, const env::EnvConfig& env_cfg, std::uint64_t seed,
                        int episodes, double gamma, double gae_lambda);

// GAE over one aligned sequence; a done flag ends a trajectory with
// bootstrap value 0, as does the end of the sequence.
std::pair<std::vector<double>, std::vector<double>> compute_gae(std::span<const double> rewards,
                                                                 std::span<const double> values,
                                                                 std::span<const std::uint8_t> dones,
                                                                 double gamma, double gae_lambda);

struct Minibatch {
  net::ObsBatch obs;
  std::vector<int> actions;
  net::Vector old_log_probs;
  net::Vector advantages;
  net::Vector returns;

  Eigen::Index size() const { return obs.rows(); }
};

Minibatch gather(const TrajectoryBatch& batch, std::span<const std::size_t> indices);

// Per-epoch random partition of [0, n) into `minibatches` contiguous chunks.
std::vector<std::vector<std::size_t>> epoch_minibatches(std::size_t n, int minibatches, Rng& rng);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped surrogate + c_v * value MSE - c_H * entropy, and the gradient of
// that mean loss w.r.t. the logits and values of `out` (rows match `mb`).
LossTerms ppo_logit_gradients(const net::PolicyBatch& out, const Minibatch& mb, const PPOConfig& cfg,
                              net::RowMatrix& dlogits, net::Vector& dvalues);

LossTerms ppo_loss(const net::NetParams& params, const Minibatch& mb, const PPOConfig& cfg,
                   net::NetGrads* grads = nullptr);

// Scales grads in place to the given global norm; returns the norm before.
double clip_grad_norm(net::NetGrads& grads, double max_norm);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(net::NetParams& params, const net::NetGrads& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<float> m_, v_;
};

struct IterationLog {
  int iter = 0;
  double clean_success = 0.0;
  double entropy = 0.0;
  LossTerms losses;
  double kappa = 0.0;
  std::optional<double> score;
  double trades = 0.0;
  double sa_kl = 0.0;
  double hinge = 0.0;
  double macer_weight = 0.0;
  std::int64_t env_steps = 0;

  nlohmann::json to_json() const;
  bool operator==(const IterationLog& o) const { return to_json() == o.to_json(); }
};

struct TrainResult {
  net::NetParams params;
  std::vector<IterationLog> log;
};

using LogSink = std::function<void(const IterationLog&)>;
// Called with the parameters after each outer iteration's updates.
using ParamHook = std::function<void(int iter, const net::NetParams&)>;

// Plain shared-parameter PPO from `init`.
TrainResult train_ppo(const net::NetParams& init, const env::EnvConfig& env_cfg, const PPOConfig& cfg,
                      int iterations, std::uint64_t seed, const LogSink& sink = {},
                      const ParamHook& after_iteration = {});

// Seeds used by the training loops; kept here so every trainer draws the
// same episodes and shuffles for a given (seed, iteration).
std::uint64_t rollout_seed(std::uint64_t seed, int iteration);
std::uint64_t shuffle_seed(std::uint64_t seed, int iteration);

}  // namespace robmapf::ppo
