#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "robmapf/eval_harness.hpp"
#include "robmapf/policy_net.hpp"
#include "robmapf/ppo.hpp"
#include "robmapf/rng.hpp"

namespace robmapf::robust {

struct AdvConfig {
  double alpha_adv = 0.30;   // adversarial fraction of each minibatch
  double eps_train = 0.15;   // training-time attack and SA-KL budget
  double beta = 0.80;        // smoothness (TRADES) weight
  double eps_smooth = 0.08;  // smoothness noise radius
  int inner_steps = 5;       // SA-KL inner PGD steps
  double kappa_max = 0.80;
  double warmup_frac = 0.05;
  double ramp_frac = 0.15;
  int eval_period = 4;       // robust selector period, in outer iterations
  int eval_episodes = 8;     // selector episodes per cell
  int iterations = 600;
  int train_pgd_steps = 10;  // PGD steps of the training-time attack
};

struct MacerConfig {
  double lambda = 0.05;
  double sigma = 0.10;
  double margin = 0.20;
  int samples = 4;
  double entropy_coef = 0.05;
  double lr = 5e-5;
  std::int64_t env_steps = 50000;
  double warmup_frac = 0.20;
  double alpha_adv = 0.40;
  double entropy_floor = 0.2;  // entropy monitor threshold, nats
};

void validate(const AdvConfig& cfg);
void validate(const MacerConfig& cfg);

// 0 during warm-up, linear ramp to kappa_max, then constant.
double kappa_schedule(int n, int total, double warmup_frac, double ramp_frac, double kappa_max);

// KL(teacher || student) over the action distributions, per row.
net::Vector kl_rows(const net::PolicyBatch& teacher, const net::PolicyBatch& student);

struct PerturbedKl {
  net::ObsBatch perturbed;
  net::PolicyBatch teacher;  // stop-gradient pi(.|o)
  net::Vector kl;          // per row, at `perturbed`
  double mean() const { return kl.size() == 0 ? 0.0 : static_cast<double>(kl.mean()); }
};

// Worst-case KL inside the budget, approximated by `inner_steps` sign-gradient
// ascent steps of size 2 eps / inner_steps from a uniform start in the ball.
PerturbedKl sa_kl_term(const net::NetParams& params, const net::ObsBatch& clean, double eps_train, int inner_steps,
                       Rng& rng);

// One uniform perturbation in [-eps_s, eps_s] per pixel, kept inside [0, 1].
PerturbedKl trades_term(const net::NetParams& params, const net::ObsBatch& clean, double eps_smooth, Rng& rng);

// Hinge of the smoothed-margin radius at given top / runner-up frequencies.
// Frequencies are clamped to [1e-4, 1 - 1e-4]; the margin is floored at 0.
double hinge_value(double p_top, double p_runner_up, double sigma, double margin);
inline constexpr double kFrequencyClamp = 1e-4;

struct HingeResult {
  net::Vector hinge;          // per observation
  std::vector<int> clean_top; // A*(o)
  std::vector<int> smoothed_top;
  std::vector<double> hard_top_freq;
  double mean() const { return hinge.size() == 0 ? 0.0 : static_cast<double>(hinge.mean()); }
};

// MACER hinge per observation. When `grads` is non-null the gradient of
// weight * mean(hinge) is accumulated into it.
HingeResult macer_hinge(const net::NetParams& params, const net::ObsBatch& obs, const MacerConfig& cfg, Rng& rng,
                        net::NetGrads* grads = nullptr, double weight = 1.0);

// Validation pool disjoint from training instances and the reporting pool.
eval::SeedPool validation_seeds();

// Mean success over {FGSM, PGD} x eps in {0.10, 0.20}.
double robust_score(const net::NetParams& policy, const env::EnvConfig& env_cfg, int episodes_per_cell, int jobs,
                    const eval::SeedPool& pool = validation_seeds());

struct AdvRunOptions {
  int iterations = 0;                              // stop after this many outer iterations
  std::optional<std::int64_t> env_step_budget;     // or once rollouts used this many env steps
  std::optional<double> fixed_kappa;               // replaces kappa_schedule
  std::optional<MacerConfig> macer;                // adds the proximal hinge step
  int jobs = 1;                                    // selector evaluation parallelism
  bool select = true;                              // run the robust selector
};

struct SelectorEntry {
  int iter = 0;
  double score = 0.0;
};

inline constexpr std::size_t kNoEntry = static_cast<std::size_t>(-1);

// Index of the highest score; the earliest wins ties. Empty input gives kNoEntry.
std::size_t best_entry(std::span<const SelectorEntry> scores);

struct AdvTrainResult {
  net::NetParams best;
  net::NetParams final_params;
  int best_iter = -1;
  double best_score = -1.0;
  std::vector<SelectorEntry> scores;
  std::vector<ppo::IterationLog> log;
  bool entropy_collapsed = false;  // some iteration fell below the entropy floor
  std::int64_t env_steps = 0;
};

// Outer Adv-PPO loop: clean rollouts, per-minibatch attacked inputs from the
// frozen baseline, PPO + value - entropy + beta TRADES + kappa SA-KL, and a
// selector that retains the highest robust score.
AdvTrainResult train_advppo(const net::NetParams& init, const net::NetParams& baseline, const env::EnvConfig& env_cfg,
                            const AdvConfig& adv, const ppo::PPOConfig& ppo_cfg, std::uint64_t seed,
                            const AdvRunOptions& options, const ppo::LogSink& sink = {});

// Plain PPO that scores clean validation success every `select_every`
// iterations and retains the best checkpoint (0 keeps the final one).
AdvTrainResult train_baseline(const net::NetParams& init, const env::EnvConfig& env_cfg, const ppo::PPOConfig& ppo_cfg,
                              int iterations, std::uint64_t seed, int select_every, int select_episodes, int jobs = 1,
                              const ppo::LogSink& sink = {});

// Continues from an Adv-PPO checkpoint with the fine-tune overrides (learning
// rate, entropy coefficient, adversarial fraction, kappa at its ceiling) and
// a MACER step after every Adv-PPO step, until the env-step budget is spent.
AdvTrainResult finetune_macer(const net::NetParams& start, const net::NetParams& baseline,
                              const env::EnvConfig& env_cfg, const MacerConfig& macer, const AdvConfig& adv,
                              const ppo::PPOConfig& ppo_cfg, std::uint64_t seed, int jobs = 1,
                              const ppo::LogSink& sink = {});

// The configs finetune_macer actually trains with.
ppo::PPOConfig finetune_ppo_config(const ppo::PPOConfig& ppo_cfg, const MacerConfig& macer);
AdvConfig finetune_adv_config(const AdvConfig& adv, const MacerConfig& macer);

}  // namespace robmapf::robust
