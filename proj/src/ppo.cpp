#include "robmapf/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace robmapf::ppo {

void validate(const PPOConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("ppo." + field + ": " + why);
  };
  if (!(c.lr > 0.0)) fail("lr", "must be > 0");
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) fail("gamma", "must be in (0, 1]");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) fail("gae_lambda", "must be in [0, 1]");
  if (!(c.value_coef >= 0.0)) fail("value_coef", "must be >= 0");
  if (!(c.entropy_coef >= 0.0)) fail("entropy_coef", "must be >= 0");
  if (!(c.clip > 0.0)) fail("clip", "must be > 0");
  if (c.epochs < 1) fail("epochs", "must be >= 1");
  if (c.minibatches < 1) fail("minibatches", "must be >= 1");
  if (c.episodes < 0) fail("episodes", "must be >= 0");
  if (!(c.max_grad_norm > 0.0)) fail("max_grad_norm", "must be > 0");
}

double TrajectoryBatch::mean_success() const {
  if (episode_success.empty()) return 0.0;
  return std::accumulate(episode_success.begin(), episode_success.end(), 0.0) /
         static_cast<double>(episode_success.size());
}

std::uint64_t rollout_seed(std::uint64_t seed, int iteration) {
  return stream_seed(seed, static_cast<std::uint64_t>(iteration), 0x726f6c6c);
}

std::uint64_t shuffle_seed(std::uint64_t seed, int iteration) {
  return stream_seed(seed, static_cast<std::uint64_t>(iteration), 0x73687566);
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(std::span<const double> rewards,
                                                                 std::span<const double> values,
                                                                 std::span<const std::uint8_t> dones,
                                                                 double gamma, double gae_lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("compute_gae: length mismatch");
  std::vector<double> adv(n), ret(n);
  double next_adv = 0.0;
  double next_value = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * gae_lambda * live * next_adv;
    adv[k] = next_adv;
    ret[k] = next_adv + values[k];
    next_value = values[k];
  }
  return {adv, ret};
}

namespace {

int sample_action(const net::PolicyBatch& out, Eigen::Index row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = 0;
  for (int a = 0; a < env::kNumActions; ++a) {
    const double p = out.probs(row, a);
    if (p <= 0.0) continue;
    last = a;
    acc += p;
    if (u < acc) return a;
  }
  return last;
}

}  // namespace

TrajectoryBatch rollout(const net::NetParams& params, const env::EnvConfig& env_cfg, std::uint64_t seed,
                        int episodes, double gamma, double gae_lambda) {
  TrajectoryBatch batch;
  if (episodes <= 0) {
    batch.obs.resize(0, env::kObsSize);
    return batch;
  }
  std::vector<env::EpisodeState> states;
  states.reserve(static_cast<std::size_t>(episodes));
  // The high bit keeps training instances apart from the small-integer
  // validation and evaluation seed pools.
  for (int e = 0; e < episodes; ++e)
    states.push_back(env::generate_instance(stream_seed(seed, static_cast<std::uint64_t>(e)) | (1ULL << 63), env_cfg));
  Rng rng(stream_seed(seed, 0x61637473));

  std::vector<env::Observation> obs_rows;
  std::vector<float> logp, value, reward;
  double entropy_sum = 0.0;

  struct Slot { int episode; int agent; };
  std::vector<Slot> slots;
  std::vector<env::Observation> step_obs;
  while (true) {
    slots.clear();
    step_obs.clear();
    for (int e = 0; e < episodes; ++e) {
      const auto& s = states[static_cast<std::size_t>(e)];
      if (s.terminal()) continue;
      for (int i = 0; i < s.num_agents(); ++i) {
        if (s.agents[static_cast<std::size_t>(i)].reached) continue;
        slots.push_back({e, i});
        step_obs.push_back(env::observe(s, i));
      }
    }
    if (slots.empty()) break;
    const net::PolicyBatch out = net::forward(params, net::to_batch(step_obs));

    std::vector<std::vector<env::Action>> actions(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e)
      actions[static_cast<std::size_t>(e)].assign(states[static_cast<std::size_t>(e)].agents.size(), env::Action::Wait);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      const int a = sample_action(out, row, rng);
      actions[static_cast<std::size_t>(slots[k].episode)][static_cast<std::size_t>(slots[k].agent)] =
          static_cast<env::Action>(a);
      obs_rows.push_back(step_obs[k]);
      batch.actions.push_back(a);
      logp.push_back(out.log_probs(row, a));
      value.push_back(out.values(row));
      batch.episode.push_back(slots[k].episode);
      batch.agent.push_back(slots[k].agent);
      batch.step.push_back(states[static_cast<std::size_t>(slots[k].episode)].t);
      entropy_sum += out.entropy(row);
    }
    std::vector<env::StepOutcome> outcomes(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
      auto& s = states[static_cast<std::size_t>(e)];
      if (s.terminal()) continue;
      outcomes[static_cast<std::size_t>(e)] = env::step(s, actions[static_cast<std::size_t>(e)]);
      batch.env_steps += 1;
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto& s = states[static_cast<std::size_t>(slots[k].episode)];
      const auto& o = outcomes[static_cast<std::size_t>(slots[k].episode)];
      reward.push_back(o.rewards[static_cast<std::size_t>(slots[k].agent)]);
      const bool done = s.agents[static_cast<std::size_t>(slots[k].agent)].reached || s.terminal();
      batch.dones.push_back(done ? 1 : 0);
    }
  }
  for (const auto& s : states) batch.episode_success.push_back(env::success_rate(s));

  const std::size_t n = batch.actions.size();
  batch.obs = net::to_batch(obs_rows);
  batch.old_log_probs = Eigen::Map<const net::Vector>(logp.data(), static_cast<Eigen::Index>(n));
  batch.values = Eigen::Map<const net::Vector>(value.data(), static_cast<Eigen::Index>(n));
  batch.rewards = Eigen::Map<const net::Vector>(reward.data(), static_cast<Eigen::Index>(n));
  batch.mean_entropy = n == 0 ? 0.0 : entropy_sum / static_cast<double>(n);

  // Per-agent trajectories in time order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> tracks;
  for (std::size_t k = 0; k < n; ++k) tracks[{batch.episode[k], batch.agent[k]}].push_back(k);
  batch.advantages.resize(static_cast<Eigen::Index>(n));
  batch.returns.resize(static_cast<Eigen::Index>(n));
  for (const auto& [key, idx] : tracks) {
    std::vector<double> r, v;
    std::vector<std::uint8_t> d;
    for (std::size_t k : idx) {
      r.push_back(batch.rewards(static_cast<Eigen::Index>(k)));
      v.push_back(batch.values(static_cast<Eigen::Index>(k)));
      d.push_back(batch.dones[k]);
    }
    const auto [adv, ret] = compute_gae(r, v, d, gamma, gae_lambda);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      batch.advantages(static_cast<Eigen::Index>(idx[j])) = static_cast<float>(adv[j]);
      batch.returns(static_cast<Eigen::Index>(idx[j])) = static_cast<float>(ret[j]);
    }
  }
  return batch;
}

Minibatch gather(const TrajectoryBatch& batch, std::span<const std::size_t> indices) {
  Minibatch mb;
  const auto n = static_cast<Eigen::Index>(indices.size());
  mb.obs.resize(n, env::kObsSize);
  mb.old_log_probs.resize(n);
  mb.advantages.resize(n);
  mb.returns.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    mb.obs.row(i) = batch.obs.row(k);
    mb.actions.push_back(batch.actions[static_cast<std::size_t>(k)]);
    mb.old_log_probs(i) = batch.old_log_probs(k);
    mb.advantages(i) = batch.advantages(k);
    mb.returns(i) = batch.returns(k);
  }
  return mb;
}

std::vector<std::vector<std::size_t>> epoch_minibatches(std::size_t n, int minibatches, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  const std::size_t m = static_cast<std::size_t>(std::max(1, minibatches));
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t lo = n * j / m, hi = n * (j + 1) / m;
    if (hi > lo) out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

LossTerms ppo_logit_gradients(const net::PolicyBatch& out, const Minibatch& mb, const PPOConfig& cfg,
                              net::RowMatrix& dlogits, net::Vector& dvalues) {
  const Eigen::Index n = mb.size();
  if (n == 0) throw std::invalid_argument("ppo loss needs a nonempty minibatch");
  dlogits = net::RowMatrix::Zero(n, env::kNumActions);
  dvalues = net::Vector::Zero(n);

  std::vector<double> adv(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) adv[static_cast<std::size_t>(i)] = mb.advantages(i);
  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
    for (double& a : adv) a = (a - mean) / sd;
  }

  LossTerms t;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = mb.actions[static_cast<std::size_t>(i)];
    const double a_hat = adv[static_cast<std::size_t>(i)];
    const double log_ratio = static_cast<double>(out.log_probs(i, a)) - mb.old_log_probs(i);
    const double ratio = std::exp(log_ratio);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped_obj = ratio * a_hat;
    const double clipped_obj = clipped * a_hat;
    t.policy -= std::min(unclipped_obj, clipped_obj) * inv_n;
    t.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    const bool outside = ratio < 1.0 - cfg.clip || ratio > 1.0 + cfg.clip;
    if (outside) t.clip_fraction += inv_n;
    // The gradient flows through the ratio unless the clipped term is the
    // binding minimum.
    const bool grad_flows = !outside || unclipped_obj <= clipped_obj;
    const double d_logp = grad_flows ? -a_hat * ratio * inv_n : 0.0;

    const double v = out.values(i);
    const double err = v - mb.returns(i);
    t.value += err * err * inv_n;
    dvalues(i) = static_cast<float>(2.0 * cfg.value_coef * err * inv_n);

    const double h = out.entropy(i);
    t.entropy += h * inv_n;
    for (int j = 0; j < env::kNumActions; ++j) {
      const double p = out.probs(i, j);
      const double lp = out.log_probs(i, j);
      const double d_surrogate = d_logp * ((j == a ? 1.0 : 0.0) - p);
      // d(-c_H * H)/dz_j = c_H * p_j * (log p_j + H)
      const double d_entropy = cfg.entropy_coef * p * (lp + h) * inv_n;
      dlogits(i, j) = static_cast<float>(d_surrogate + d_entropy);
    }
  }
  t.total = t.policy + cfg.value_coef * t.value - cfg.entropy_coef * t.entropy;
  return t;
}

LossTerms ppo_loss(const net::NetParams& params, const Minibatch& mb, const PPOConfig& cfg, net::NetGrads* grads) {
  net::ForwardTrace trace;
  const net::PolicyBatch out = net::forward(params, mb.obs, grads != nullptr ? &trace : nullptr);
  net::RowMatrix dlogits;
  net::Vector dvalues;
  const LossTerms t = ppo_logit_gradients(out, mb, cfg, dlogits, dvalues);
  if (grads != nullptr) net::backward(trace, dlogits, &dvalues, grads, nullptr);
  return t;
}

double clip_grad_norm(net::NetGrads& grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads.flat()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  const double coef = max_norm / (norm + 1e-6);
  if (coef < 1.0)
    for (float& g : grads.flat()) g = static_cast<float>(g * coef);
  return norm;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net::parameter_count(), 0.0f),
      v_(net::parameter_count(), 0.0f) {}

void Adam::step(net::NetParams& params, const net::NetGrads& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto g = grads.flat();
  auto p = params.flat();
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr_ / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0f - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0f - b2) * g[i] * g[i];
    p[i] -= step * m_[i] / (std::sqrt(v_[i]) * inv_sqrt_bc2 + eps);
  }
}

nlohmann::json IterationLog::to_json() const {
  nlohmann::json j;
  j["iter"] = iter;
  j["clean_success"] = clean_success;
  j["entropy"] = entropy;
  j["losses"] = {{"total", losses.total},         {"policy", losses.policy},
                 {"value", losses.value},         {"entropy", losses.entropy},
                 {"approx_kl", losses.approx_kl}, {"clip_fraction", losses.clip_fraction}};
  j["kappa"] = kappa;
  j["score"] = score ? nlohmann::json(*score) : nlohmann::json(nullptr);
  j["trades"] = trades;
  j["sa_kl"] = sa_kl;
  j["hinge"] = hinge;
  j["macer_weight"] = macer_weight;
  j["env_steps"] = env_steps;
  return j;
}

namespace {

void accumulate(LossTerms& sum, const LossTerms& t) {
  sum.total += t.total;
  sum.policy += t.policy;
  sum.value += t.value;
  sum.entropy += t.entropy;
  sum.approx_kl += t.approx_kl;
  sum.clip_fraction += t.clip_fraction;
}

void scale(LossTerms& t, double s) {
  t.total *= s;
  t.policy *= s;
  t.value *= s;
  t.entropy *= s;
  t.approx_kl *= s;
  t.clip_fraction *= s;
}

}  // namespace

TrainResult train_ppo(const net::NetParams& init, const env::EnvConfig& env_cfg, const PPOConfig& cfg,
                      int iterations, std::uint64_t seed, const LogSink& sink, const ParamHook& after_iteration) {
  validate(cfg);
  TrainResult result{init, {}};
  Adam adam(cfg.lr);
  std::int64_t env_steps = 0;
  for (int it = 0; it < iterations; ++it) {
    const TrajectoryBatch batch =
        rollout(result.params, env_cfg, rollout_seed(seed, it), cfg.episodes, cfg.gamma, cfg.gae_lambda);
    env_steps += batch.env_steps;
    Rng shuffle(shuffle_seed(seed, it));
    LossTerms sum;
    int updates = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (const auto& idx : epoch_minibatches(batch.size(), cfg.minibatches, shuffle)) {
        const Minibatch mb = gather(batch, idx);
        net::NetGrads grads;
        accumulate(sum, ppo_loss(result.params, mb, cfg, &grads));
        clip_grad_norm(grads, cfg.max_grad_norm);
        adam.step(result.params, grads);
        ++updates;
      }
    }
    if (updates > 0) scale(sum, 1.0 / updates);
    IterationLog entry;
    entry.iter = it;
    entry.clean_success = batch.mean_success();
    entry.entropy = batch.mean_entropy;
    entry.losses = sum;
    entry.env_steps = env_steps;
    if (after_iteration) after_iteration(it, result.params);
    result.log.push_back(entry);
    if (sink) sink(entry);
  }
  return result;
}

}  // namespace robmapf::ppo
