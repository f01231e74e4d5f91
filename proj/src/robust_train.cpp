#include "robmapf/robust_train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "robmapf/attacks.hpp"
#include "robmapf/smoothing_cert.hpp"

namespace robmapf::robust {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Stream keys for the per-iteration randomness of the adversarial update.
constexpr std::uint64_t kMaskKey = 0x6d61736b;
constexpr std::uint64_t kAttackKey = 0x61747461;
constexpr std::uint64_t kTradesKey = 0x74726164;
constexpr std::uint64_t kSaKlKey = 0x73616b6c;
constexpr std::uint64_t kMacerKey = 0x6d616365;

net::ObsBatch uniform_in_ball(const net::ObsBatch& clean, double eps, Rng& rng) {
  net::ObsBatch x = clean;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += static_cast<float>(rng.uniform(-eps, eps));
  return attack::clip_to_ball(clean, x, eps);
}

net::PolicyBatch slice(const net::PolicyBatch& out, Eigen::Index start, Eigen::Index rows) {
  net::PolicyBatch s;
  s.logits = out.logits.middleRows(start, rows);
  s.probs = out.probs.middleRows(start, rows);
  s.log_probs = out.log_probs.middleRows(start, rows);
  s.values = out.values.segment(start, rows);
  return s;
}

// d KL(teacher || student) / d student-logits = q - p, per row.
void add_kl_gradient(const net::PolicyBatch& teacher, const net::PolicyBatch& student, double coef,
                     net::RowMatrix& dlogits, Eigen::Index start) {
  const auto c = static_cast<float>(coef);
  dlogits.middleRows(start, teacher.size()) = c * (student.probs - teacher.probs);
}

void accumulate(ppo::LossTerms& sum, const ppo::LossTerms& t) {
  sum.total += t.total;
  sum.policy += t.policy;
  sum.value += t.value;
  sum.entropy += t.entropy;
  sum.approx_kl += t.approx_kl;
  sum.clip_fraction += t.clip_fraction;
}

void scale(ppo::LossTerms& t, double s) {
  t.total *= s;
  t.policy *= s;
  t.value *= s;
  t.entropy *= s;
  t.approx_kl *= s;
  t.clip_fraction *= s;
}

struct UpdateStats {
  ppo::LossTerms losses;
  double trades = 0.0;
  double sa_kl = 0.0;
  double hinge = 0.0;
};

// All epochs and minibatches of one outer iteration.
UpdateStats adversarial_update(net::NetParams& params, ppo::Adam& adam, const net::NetParams& baseline,
                               const ppo::TrajectoryBatch& batch, int iter, double kappa, const AdvConfig& adv,
                               const ppo::PPOConfig& cfg, const MacerConfig* macer, double macer_weight,
                               std::uint64_t seed) {
  const auto it = static_cast<std::uint64_t>(iter);
  Rng shuffle(ppo::shuffle_seed(seed, iter));
  Rng mask_rng(stream_seed(seed, it, kMaskKey));
  Rng attack_rng(stream_seed(seed, it, kAttackKey));
  Rng trades_rng(stream_seed(seed, it, kTradesKey));
  Rng sa_rng(stream_seed(seed, it, kSaKlKey));
  Rng macer_rng(stream_seed(seed, it, kMacerKey));

  const net::NetParams theta_old = params;
  const bool use_pgd = iter % 2 == 1;
  const attack::AttackSpec train_attack = use_pgd ? attack::AttackSpec::pgd(adv.eps_train, adv.train_pgd_steps, 1)
                                                  : attack::AttackSpec::fgsm(adv.eps_train);

  UpdateStats stats;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : ppo::epoch_minibatches(batch.size(), cfg.minibatches, shuffle)) {
      ppo::Minibatch mb = ppo::gather(batch, idx);
      const Eigen::Index rows = mb.size();
      if (rows == 0) continue;
      const net::ObsBatch clean = mb.obs;

      if (adv.alpha_adv > 0.0) {
        std::vector<Eigen::Index> masked;
        for (Eigen::Index b = 0; b < rows; ++b)
          if (mask_rng.bernoulli(adv.alpha_adv)) masked.push_back(b);
        if (!masked.empty()) {
          net::ObsBatch sub(static_cast<Eigen::Index>(masked.size()), env::kObsSize);
          for (std::size_t i = 0; i < masked.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = clean.row(masked[i]);
          const net::ObsBatch attacked = attack::apply(train_attack, baseline, sub, attack_rng);
          const net::PolicyBatch old_out = net::forward(theta_old, attacked);
          for (std::size_t i = 0; i < masked.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            mb.obs.row(masked[i]) = attacked.row(r);
            mb.old_log_probs(masked[i]) = old_out.log_probs(r, mb.actions[masked[i]]);
          }
        }
      }

      const bool use_trades = adv.beta > 0.0;
      const bool use_sa = kappa > 0.0;
      net::PolicyBatch teacher;
      if (use_trades || use_sa) teacher = net::forward(params, clean);

      net::ObsBatch trades_x, sa_x;
      if (use_trades) trades_x = uniform_in_ball(clean, adv.eps_smooth, trades_rng);
      if (use_sa) sa_x = sa_kl_term(params, clean, adv.eps_train, adv.inner_steps, sa_rng).perturbed;

      const int blocks = 1 + (use_trades ? 1 : 0) + (use_sa ? 1 : 0);
      net::NetGrads grads;
      net::ForwardTrace trace;
      if (blocks == 1) {
        const net::PolicyBatch out = net::forward(params, mb.obs, &trace);
        net::RowMatrix dlogits;
        net::Vector dvalues;
        accumulate(stats.losses, ppo::ppo_logit_gradients(out, mb, cfg, dlogits, dvalues));
        net::backward(trace, dlogits, &dvalues, &grads, nullptr);
      } else {
        net::ObsBatch x(rows * blocks, env::kObsSize);
        x.topRows(rows) = mb.obs;
        Eigen::Index at = rows;
        const Eigen::Index trades_at = use_trades ? at : -1;
        if (use_trades) {
          x.middleRows(at, rows) = trades_x;
          at += rows;
        }
        const Eigen::Index sa_at = use_sa ? at : -1;
        if (use_sa) x.middleRows(at, rows) = sa_x;

        const net::PolicyBatch out = net::forward(params, x, &trace);
        net::RowMatrix dl;
        net::Vector dv;
        accumulate(stats.losses, ppo::ppo_logit_gradients(slice(out, 0, rows), mb, cfg, dl, dv));
        net::RowMatrix dlogits = net::RowMatrix::Zero(rows * blocks, env::kNumActions);
        net::Vector dvalues = net::Vector::Zero(rows * blocks);
        dlogits.topRows(rows) = dl;
        dvalues.head(rows) = dv;
        const double inv = 1.0 / static_cast<double>(rows);
        if (use_trades) {
          const net::PolicyBatch s = slice(out, trades_at, rows);
          stats.trades += kl_rows(teacher, s).mean();
          add_kl_gradient(teacher, s, adv.beta * inv, dlogits, trades_at);
        }
        if (use_sa) {
          const net::PolicyBatch s = slice(out, sa_at, rows);
          stats.sa_kl += kl_rows(teacher, s).mean();
          add_kl_gradient(teacher, s, kappa * inv, dlogits, sa_at);
        }
        net::backward(trace, dlogits, &dvalues, &grads, nullptr);
      }
      ppo::clip_grad_norm(grads, cfg.max_grad_norm);
      adam.step(params, grads);

      if (macer != nullptr && macer_weight > 0.0) {
        net::NetGrads hinge_grads;
        stats.hinge += macer_hinge(params, clean, *macer, macer_rng, &hinge_grads, macer_weight).mean();
        ppo::clip_grad_norm(hinge_grads, cfg.max_grad_norm);
        adam.step(params, hinge_grads);
      }
      ++updates;
    }
  }
  if (updates > 0) {
    scale(stats.losses, 1.0 / updates);
    stats.trades /= updates;
    stats.sa_kl /= updates;
    stats.hinge /= updates;
  }
  return stats;
}

}  // namespace

void validate(const AdvConfig& c) {
  require(c.alpha_adv >= 0.0 && c.alpha_adv <= 1.0, "adv.alpha_adv: must lie in [0, 1]");
  require(c.eps_train >= 0.0 && c.eps_train <= 1.0, "adv.eps_train: must lie in [0, 1]");
  require(c.beta >= 0.0, "adv.beta: must be >= 0");
  require(c.eps_smooth >= 0.0 && c.eps_smooth <= 1.0, "adv.eps_smooth: must lie in [0, 1]");
  require(c.inner_steps >= 1, "adv.inner_steps: must be >= 1");
  require(c.kappa_max >= 0.0, "adv.kappa_max: must be >= 0");
  require(c.warmup_frac >= 0.0 && c.ramp_frac >= 0.0, "adv.warmup_frac: fractions must be >= 0");
  require(c.warmup_frac + c.ramp_frac <= 1.0, "adv.ramp_frac: warmup_frac + ramp_frac must be <= 1");
  require(c.eval_period >= 1, "adv.eval_period: must be >= 1");
  require(c.eval_episodes >= 1, "adv.eval_episodes: must be >= 1");
  require(c.iterations >= 0, "adv.iterations: must be >= 0");
  require(c.train_pgd_steps >= 1, "adv.train_pgd_steps: must be >= 1");
}

void validate(const MacerConfig& c) {
  require(c.lambda >= 0.0, "macer.lambda: must be >= 0");
  require(c.sigma > 0.0 && c.sigma <= 1.0, "macer.sigma: must lie in (0, 1]");
  require(c.margin >= 0.0, "macer.margin: must be >= 0");
  require(c.samples >= 1, "macer.samples: must be >= 1");
  require(c.entropy_coef >= 0.0, "macer.entropy_coef: must be >= 0");
  require(c.lr > 0.0, "macer.lr: must be > 0");
  require(c.env_steps >= 0, "macer.env_steps: must be >= 0");
  require(c.warmup_frac >= 0.0 && c.warmup_frac <= 1.0, "macer.warmup_frac: must lie in [0, 1]");
  require(c.alpha_adv >= 0.0 && c.alpha_adv <= 1.0, "macer.alpha_adv: must lie in [0, 1]");
  require(c.entropy_floor >= 0.0, "macer.entropy_floor: must be >= 0");
}

double kappa_schedule(int n, int total, double warmup_frac, double ramp_frac, double kappa_max) {
  if (total <= 0) return kappa_max;
  const double x = static_cast<double>(n) / total;
  if (x < warmup_frac) return 0.0;
  if (ramp_frac <= 0.0) return kappa_max;
  return kappa_max * std::min(1.0, (x - warmup_frac) / ramp_frac);
}

net::Vector kl_rows(const net::PolicyBatch& teacher, const net::PolicyBatch& student) {
  if (teacher.size() != student.size()) throw std::invalid_argument("kl_rows: batch size mismatch");
  net::Vector kl(teacher.size());
  for (Eigen::Index b = 0; b < teacher.size(); ++b) {
    double s = 0.0;
    for (int a = 0; a < env::kNumActions; ++a) {
      const double p = teacher.probs(b, a);
      if (p > 0.0) s += p * (static_cast<double>(teacher.log_probs(b, a)) - student.log_probs(b, a));
    }
    kl(b) = static_cast<float>(std::max(0.0, s));
  }
  return kl;
}

PerturbedKl sa_kl_term(const net::NetParams& params, const net::ObsBatch& clean, double eps_train, int inner_steps,
                       Rng& rng) {
  if (inner_steps < 1) throw std::invalid_argument("sa_kl_term: inner_steps must be >= 1");
  PerturbedKl r;
  r.teacher = net::forward(params, clean);
  if (eps_train <= 0.0 || clean.rows() == 0) {
    r.perturbed = clean;
  } else {
    const auto loss = net::InputLoss::kl_from(r.teacher.probs);
    const double step = 2.0 * eps_train / inner_steps;
    net::ObsBatch x = uniform_in_ball(clean, eps_train, rng);
    for (int k = 0; k < inner_steps; ++k) {
      const net::InputGradient g = net::input_gradient(params, x, loss);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const float d = g.grad.data()[i];
        x.data()[i] += static_cast<float>(step * ((d > 0.0f) - (d < 0.0f)));
      }
      x = attack::clip_to_ball(clean, x, eps_train);
    }
    r.perturbed = std::move(x);
  }
  r.kl = kl_rows(r.teacher, net::forward(params, r.perturbed));
  return r;
}

PerturbedKl trades_term(const net::NetParams& params, const net::ObsBatch& clean, double eps_smooth, Rng& rng) {
  PerturbedKl r;
  r.teacher = net::forward(params, clean);
  r.perturbed = eps_smooth > 0.0 ? uniform_in_ball(clean, eps_smooth, rng) : clean;
  r.kl = kl_rows(r.teacher, net::forward(params, r.perturbed));
  return r;
}

double hinge_value(double p_top, double p_runner_up, double sigma, double margin) {
  const double pa = std::clamp(p_top, kFrequencyClamp, 1.0 - kFrequencyClamp);
  const double pb = std::clamp(p_runner_up, kFrequencyClamp, 1.0 - kFrequencyClamp);
  const double m = std::max(0.0, 0.5 * sigma * (cert::normal_quantile(pa) - cert::normal_quantile(pb)));
  return std::max(0.0, margin - m);
}

HingeResult macer_hinge(const net::NetParams& params, const net::ObsBatch& obs, const MacerConfig& cfg, Rng& rng,
                        net::NetGrads* grads, double weight) {
  const Eigen::Index rows = obs.rows();
  const int k = cfg.samples;
  HingeResult r;
  r.hinge = net::Vector::Zero(rows);
  r.clean_top.resize(static_cast<std::size_t>(rows));
  r.smoothed_top.resize(static_cast<std::size_t>(rows));
  r.hard_top_freq.resize(static_cast<std::size_t>(rows));
  if (rows == 0) return r;

  const net::PolicyBatch clean = net::forward(params, obs);
  net::ObsBatch noisy(rows * k, env::kObsSize);
  for (Eigen::Index b = 0; b < rows; ++b)
    for (int s = 0; s < k; ++s)
      for (int i = 0; i < env::kObsSize; ++i)
        noisy(b * k + s, i) = static_cast<float>(obs(b, i) + cfg.sigma * rng.normal());

  net::ForwardTrace trace;
  const net::PolicyBatch out = net::forward(params, noisy, grads != nullptr ? &trace : nullptr);
  net::RowMatrix dlogits = net::RowMatrix::Zero(rows * k, env::kNumActions);
  bool any_grad = false;

  for (Eigen::Index b = 0; b < rows; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const int top = clean.argmax(b);
    std::array<int, env::kNumActions> counts{};
    std::array<double, env::kNumActions> soft{};
    for (int s = 0; s < k; ++s) {
      ++counts[static_cast<std::size_t>(out.argmax(b * k + s))];
      for (int a = 0; a < env::kNumActions; ++a) soft[static_cast<std::size_t>(a)] += out.probs(b * k + s, a);
    }
    for (double& v : soft) v /= k;

    int smoothed = top;
    for (int a = 0; a < env::kNumActions; ++a)
      if (counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(smoothed)]) smoothed = a;
    int runner = -1;
    for (int a = 0; a < env::kNumActions; ++a) {
      if (a == top) continue;
      const auto ua = static_cast<std::size_t>(a);
      if (runner < 0) {
        runner = a;
        continue;
      }
      const auto ur = static_cast<std::size_t>(runner);
      if (counts[ua] > counts[ur] || (counts[ua] == counts[ur] && soft[ua] > soft[ur])) runner = a;
    }
    r.clean_top[ub] = top;
    r.smoothed_top[ub] = smoothed;
    r.hard_top_freq[ub] = static_cast<double>(counts[static_cast<std::size_t>(top)]) / k;
    if (smoothed != top) continue;

    const double pa_raw = soft[static_cast<std::size_t>(top)];
    const double pb_raw = soft[static_cast<std::size_t>(runner)];
    const double pa = std::clamp(pa_raw, kFrequencyClamp, 1.0 - kFrequencyClamp);
    const double pb = std::clamp(pb_raw, kFrequencyClamp, 1.0 - kFrequencyClamp);
    const double za = cert::normal_quantile(pa);
    const double zb = cert::normal_quantile(pb);
    const double m = 0.5 * cfg.sigma * (za - zb);
    const double h = std::max(0.0, cfg.margin - std::max(0.0, m));
    r.hinge(b) = static_cast<float>(h);

    if (grads == nullptr || h <= 0.0 || m <= 0.0) continue;
    // dh/dp for the soft frequencies; zero where the clamp is active.
    const double da = (pa_raw == pa) ? -0.5 * cfg.sigma / cert::normal_pdf(za) : 0.0;
    const double db = (pb_raw == pb) ? 0.5 * cfg.sigma / cert::normal_pdf(zb) : 0.0;
    const double coef = weight / static_cast<double>(rows) / k;
    for (int s = 0; s < k; ++s) {
      const Eigen::Index row = b * k + s;
      for (int j = 0; j < env::kNumActions; ++j) {
        const double pj = out.probs(row, j);
        const double dpa = out.probs(row, top) * ((j == top ? 1.0 : 0.0) - pj);
        const double dpb = out.probs(row, runner) * ((j == runner ? 1.0 : 0.0) - pj);
        dlogits(row, j) += static_cast<float>(coef * (da * dpa + db * dpb));
      }
    }
    any_grad = true;
  }
  if (grads != nullptr && any_grad) net::backward(trace, dlogits, nullptr, grads, nullptr);
  return r;
}

eval::SeedPool validation_seeds() { return eval::SeedPool{20000, 13, 7}; }

double robust_score(const net::NetParams& policy, const env::EnvConfig& env_cfg, int episodes_per_cell, int jobs,
                    const eval::SeedPool& pool) {
  const std::array<attack::AttackSpec, 4> cells = {attack::AttackSpec::fgsm(0.10), attack::AttackSpec::fgsm(0.20),
                                                   attack::AttackSpec::pgd(0.10), attack::AttackSpec::pgd(0.20)};
  double sum = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c)
    sum += eval::run_cell(policy, cells[c], static_cast<int>(c), env_cfg, episodes_per_cell, pool, jobs).mean;
  return sum / static_cast<double>(cells.size());
}

AdvTrainResult train_baseline(const net::NetParams& init, const env::EnvConfig& env_cfg, const ppo::PPOConfig& ppo_cfg,
                              int iterations, std::uint64_t seed, int select_every, int select_episodes, int jobs,
                              const ppo::LogSink& sink) {
  if (select_every < 0) throw std::invalid_argument("select_every must be >= 0");
  if (select_every > 0 && select_episodes < 1) throw std::invalid_argument("select_episodes must be >= 1");
  AdvTrainResult result;
  result.best = init;
  std::optional<double> pending;
  const auto hook = [&](int it, const net::NetParams& params) {
    if (select_every == 0 || (it + 1) % select_every != 0) return;
    const double score = eval::run_cell(params, attack::AttackSpec::none(), eval::kCleanCellIndex, env_cfg,
                                        select_episodes, validation_seeds(), jobs)
                             .mean;
    pending = score;
    result.scores.push_back({it, score});
    if (best_entry(result.scores) == result.scores.size() - 1) {
      result.best = params;
      result.best_iter = it;
      result.best_score = score;
    }
  };
  const auto log = [&](const ppo::IterationLog& e) {
    ppo::IterationLog entry = e;
    entry.score = pending;
    pending.reset();
    result.log.push_back(entry);
    if (sink) sink(entry);
  };
  auto run = ppo::train_ppo(init, env_cfg, ppo_cfg, iterations, seed, log, hook);
  result.final_params = std::move(run.params);
  if (result.scores.empty()) {
    result.best = result.final_params;
    result.best_iter = iterations - 1;
  }
  result.env_steps = result.log.empty() ? 0 : result.log.back().env_steps;
  return result;
}

std::size_t best_entry(std::span<const SelectorEntry> scores) {
  std::size_t best = kNoEntry;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (best == kNoEntry || scores[i].score > scores[best].score) best = i;
  return best;
}

AdvTrainResult train_advppo(const net::NetParams& init, const net::NetParams& baseline, const env::EnvConfig& env_cfg,
                            const AdvConfig& adv, const ppo::PPOConfig& ppo_cfg, std::uint64_t seed,
                            const AdvRunOptions& options, const ppo::LogSink& sink) {
  validate(adv);
  ppo::validate(ppo_cfg);
  env::validate(env_cfg);
  if (options.macer) validate(*options.macer);
  if (!options.env_step_budget && options.iterations < 0)
    throw std::invalid_argument("train_advppo: iterations must be >= 0");

  AdvTrainResult result;
  result.final_params = init;
  result.best = init;
  net::NetParams& params = result.final_params;
  ppo::Adam adam(ppo_cfg.lr);
  const MacerConfig* macer = options.macer ? &*options.macer : nullptr;

  int it = 0;
  const auto finished = [&] {
    if (options.env_step_budget) return result.env_steps >= *options.env_step_budget;
    return it >= options.iterations;
  };

  while (!finished()) {
    const ppo::TrajectoryBatch batch = ppo::rollout(params, env_cfg, ppo::rollout_seed(seed, it), ppo_cfg.episodes,
                                                    ppo_cfg.gamma, ppo_cfg.gae_lambda);
    const std::int64_t steps_before = result.env_steps;
    result.env_steps += batch.env_steps;
    const double kappa = options.fixed_kappa
                             ? *options.fixed_kappa
                             : kappa_schedule(it, options.iterations, adv.warmup_frac, adv.ramp_frac, adv.kappa_max);
    double macer_weight = 0.0;
    if (macer != nullptr) {
      const double budget = options.env_step_budget ? static_cast<double>(*options.env_step_budget) : 0.0;
      macer_weight = static_cast<double>(steps_before) < macer->warmup_frac * budget ? 0.0 : macer->lambda;
    }

    const UpdateStats stats =
        adversarial_update(params, adam, baseline, batch, it, kappa, adv, ppo_cfg, macer, macer_weight, seed);

    ppo::IterationLog entry;
    entry.iter = it;
    entry.clean_success = batch.mean_success();
    entry.entropy = batch.mean_entropy;
    entry.losses = stats.losses;
    entry.kappa = kappa;
    entry.trades = stats.trades;
    entry.sa_kl = stats.sa_kl;
    entry.hinge = stats.hinge;
    entry.macer_weight = macer_weight;
    entry.env_steps = result.env_steps;
    if (macer != nullptr && batch.mean_entropy < macer->entropy_floor) result.entropy_collapsed = true;

    ++it;
    if (options.select && (it % adv.eval_period == 0 || finished())) {
      const double score = robust_score(params, env_cfg, adv.eval_episodes, options.jobs);
      entry.score = score;
      result.scores.push_back({entry.iter, score});
      if (best_entry(result.scores) == result.scores.size() - 1) {
        result.best_score = score;
        result.best_iter = entry.iter;
        result.best = params;
      }
    }
    result.log.push_back(entry);
    if (sink) sink(entry);
  }
  if (!options.select) {
    result.best = params;
    result.best_iter = it - 1;
  }
  return result;
}

ppo::PPOConfig finetune_ppo_config(const ppo::PPOConfig& ppo_cfg, const MacerConfig& macer) {
  ppo::PPOConfig c = ppo_cfg;
  c.lr = macer.lr;
  c.entropy_coef = macer.entropy_coef;
  return c;
}

AdvConfig finetune_adv_config(const AdvConfig& adv, const MacerConfig& macer) {
  AdvConfig c = adv;
  c.alpha_adv = macer.alpha_adv;
  return c;
}

AdvTrainResult finetune_macer(const net::NetParams& start, const net::NetParams& baseline,
                              const env::EnvConfig& env_cfg, const MacerConfig& macer, const AdvConfig& adv,
                              const ppo::PPOConfig& ppo_cfg, std::uint64_t seed, int jobs, const ppo::LogSink& sink) {
  validate(macer);
  AdvRunOptions options;
  options.env_step_budget = macer.env_steps;
  options.fixed_kappa = adv.kappa_max;
  options.macer = macer;
  options.jobs = jobs;
  return train_advppo(start, baseline, env_cfg, finetune_adv_config(adv, macer), finetune_ppo_config(ppo_cfg, macer),
                      seed, options, sink);
}

}  // namespace robmapf::robust
