#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "robmapf/robust_train.hpp"
#include "robmapf/rng.hpp"
#include "robmapf/smoothing_cert.hpp"

using namespace robmapf;

namespace {

net::ObsBatch binary_obs(int rows, std::uint64_t seed) {
  Rng rng(seed);
  net::ObsBatch x(rows, env::kObsSize);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.bernoulli(0.3));
  return x;
}

net::NetParams sharp_params(std::uint64_t seed, float scale = 50.0f) {
  auto p = net::init_params(seed);
  for (float& v : p.view(net::Tensor::ActorWeight).reshaped()) v *= scale;
  return p;
}

net::NetParams constant_net(int action) {
  net::NetParams p;
  p.view(net::Tensor::ActorBias)(0, action) = 2.0f;
  return p;
}

// Argmax is Wait on a clean all-zero input and Up under almost any Gaussian noise.
net::NetParams noise_flipper() {
  net::NetParams p;
  p.view(net::Tensor::Conv1Weight)(0, 4 * env::kObsChannels + 0) = 10.0f;
  p.view(net::Tensor::Conv2Weight)(0, 4 * net::kConv1Filters + 0) = 1.0f;
  auto trunk = p.view(net::Tensor::TrunkWeight);
  for (int cell = 0; cell < env::kObsCells; ++cell) trunk(0, cell * net::kConv2Filters) = 1.0f;
  p.view(net::Tensor::ActorWeight)(1, 0) = 10.0f;
  p.view(net::Tensor::ActorBias)(0, 0) = 1.0f;
  return p;
}

robust::AdvConfig degenerate_adv() {
  robust::AdvConfig a;
  a.alpha_adv = 0.0;
  a.beta = 0.0;
  a.kappa_max = 0.0;
  return a;
}

}  // namespace

TEST(Kappa, ScheduleExamples) {
  EXPECT_EQ(robust::kappa_schedule(4, 100, 0.05, 0.15, 0.8), 0.0);
  EXPECT_NEAR(robust::kappa_schedule(12, 100, 0.05, 0.15, 0.8), 0.8 * 0.07 / 0.15, 1e-12);
  EXPECT_DOUBLE_EQ(robust::kappa_schedule(20, 100, 0.05, 0.15, 0.8), 0.8);
  EXPECT_DOUBLE_EQ(robust::kappa_schedule(99, 100, 0.05, 0.15, 0.8), 0.8);
}

TEST(Kappa, ScheduleIsMonotone) {
  double prev = 0.0;
  for (int n = 0; n <= 200; ++n) {
    const double k = robust::kappa_schedule(n, 200, 0.05, 0.15, 0.8);
    EXPECT_GE(k, prev);
    EXPECT_LE(k, 0.8);
    prev = k;
  }
}

TEST(KlRows, MatchesDirectSum) {
  const auto p = sharp_params(1, 5.0f);
  const auto a = net::forward(p, binary_obs(4, 1)), b = net::forward(p, binary_obs(4, 2));
  const auto kl = robust::kl_rows(a, b);
  for (int r = 0; r < 4; ++r) {
    double ref = 0.0;
    for (int j = 0; j < env::kNumActions; ++j) ref += a.probs(r, j) * (a.log_probs(r, j) - b.log_probs(r, j));
    EXPECT_NEAR(kl(r), ref, 1e-6);
  }
  EXPECT_LT(robust::kl_rows(a, a).cwiseAbs().maxCoeff(), 1e-7f);
}

TEST(SaKl, ZeroBudgetIsZero) {
  Rng rng(1);
  const auto x = binary_obs(8, 3);
  const auto r = robust::sa_kl_term(sharp_params(2), x, 0.0, 5, rng);
  EXPECT_EQ(r.perturbed, x);
  EXPECT_EQ(r.mean(), 0.0);
}

TEST(SaKl, ConstantNetworkIsZero) {
  Rng rng(1);
  const auto r = robust::sa_kl_term(constant_net(3), binary_obs(8, 3), 0.2, 5, rng);
  EXPECT_LT(r.kl.cwiseAbs().maxCoeff(), 1e-7f);
}

TEST(SaKl, PerturbationStaysInBall) {
  Rng rng(2);
  const auto x = binary_obs(16, 4);
  const auto r = robust::sa_kl_term(sharp_params(3), x, 0.15, 5, rng);
  EXPECT_LE((r.perturbed - x).cwiseAbs().maxCoeff(), 0.15f + 1e-6f);
  EXPECT_GE(r.perturbed.minCoeff(), 0.0f);
  EXPECT_LE(r.perturbed.maxCoeff(), 1.0f);
}

TEST(SaKl, MoreInnerStepsFindLargerKl) {
  const auto& p = fixtures::trained_policy();
  const auto x = fixtures::visited_states(p, 500, 11);
  Rng r1(5), r5(5);
  const auto k1 = robust::sa_kl_term(p, x, 0.15, 1, r1);
  const auto k5 = robust::sa_kl_term(p, x, 0.15, 5, r5);
  int wins = 0;
  for (Eigen::Index b = 0; b < x.rows(); ++b) wins += k5.kl(b) >= k1.kl(b);
  EXPECT_GE(wins, 450);
}

TEST(Trades, ZeroRadiusAndConstantNetworkGiveZero) {
  Rng rng(1);
  EXPECT_EQ(robust::trades_term(sharp_params(1), binary_obs(8, 1), 0.0, rng).mean(), 0.0);
  EXPECT_LT(robust::trades_term(constant_net(1), binary_obs(8, 1), 0.08, rng).kl.cwiseAbs().maxCoeff(), 1e-7f);
}

TEST(Trades, NonnegativeOnManyDraws) {
  Rng rng(3);
  const auto r = robust::trades_term(sharp_params(4), binary_obs(10000, 2), 0.08, rng);
  EXPECT_GE(r.kl.minCoeff(), 0.0f);
  EXPECT_LE((r.perturbed - binary_obs(10000, 2)).cwiseAbs().maxCoeff(), 0.08f + 1e-6f);
}

TEST(Hinge, ValueExamples) {
  EXPECT_NEAR(robust::hinge_value(0.75, 0.25, 0.1, 0.2), 0.2 - 0.05 * 2.0 * 0.6744897501960817, 1e-9);
  EXPECT_NEAR(robust::hinge_value(0.75, 0.25, 0.1, 0.2), 0.13255, 1e-5);
  EXPECT_EQ(robust::hinge_value(1.0, 0.0, 0.1, 0.2), 0.0);
  EXPECT_EQ(robust::hinge_value(1.0 - 1e-4, 1e-4, 0.1, 0.2), 0.0);
  // Runner-up ahead of the top: the margin floors at zero, the hinge at gamma.
  EXPECT_DOUBLE_EQ(robust::hinge_value(0.3, 0.6, 0.1, 0.2), 0.2);
}

TEST(Hinge, MaskedWhenSmoothedArgmaxDiffers) {
  const auto p = noise_flipper();
  const net::ObsBatch x = net::ObsBatch::Zero(6, env::kObsSize);
  robust::MacerConfig cfg;
  cfg.samples = 8;
  Rng rng(4);
  net::NetGrads g;
  const auto h = robust::macer_hinge(p, x, cfg, rng, &g);
  for (int b = 0; b < 6; ++b) {
    EXPECT_EQ(h.clean_top[static_cast<std::size_t>(b)], 0);
    EXPECT_EQ(h.smoothed_top[static_cast<std::size_t>(b)], 1);
    EXPECT_EQ(h.hinge(b), 0.0f);
  }
  for (float v : g.flat()) EXPECT_EQ(v, 0.0f);
}

TEST(Hinge, ConfidentConstantNetworkHasNoHinge) {
  net::NetParams p;
  p.view(net::Tensor::ActorBias)(0, 2) = 30.0f;
  Rng rng(1);
  const auto h = robust::macer_hinge(p, binary_obs(4, 1), {}, rng);
  EXPECT_EQ(h.mean(), 0.0);
}

TEST(Hinge, GradientMatchesFiniteDifferenceOfSoftHinge) {
  // Distinct favourite and runner-up keep every row on a smooth branch.
  auto p = sharp_params(7, 3.0f);
  p.view(net::Tensor::ActorBias)(0, 2) = 2.0f;
  p.view(net::Tensor::ActorBias)(0, 4) = 1.0f;
  const auto x = binary_obs(8, 9);
  robust::MacerConfig cfg;
  cfg.samples = 4;
  Rng rng(21);
  net::NetGrads g;
  const auto h = robust::macer_hinge(p, x, cfg, rng, &g);
  ASSERT_GT(h.mean(), 0.0);
  const auto at = [&](const net::NetParams& q) {
    Rng r(21);
    return robust::macer_hinge(q, x, cfg, r).mean();
  };
  int checked = 0;
  for (auto t : {net::Tensor::ActorBias, net::Tensor::ActorWeight, net::Tensor::TrunkBias}) {
    const auto& ti = net::info(t);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t idx = ti.offset + (k * 37) % ti.size;
      auto plus = p, minus = p;
      plus.flat()[idx] += 2e-3f;
      minus.flat()[idx] -= 2e-3f;
      const double fd = (at(plus) - at(minus)) / 4e-3;
      EXPECT_NEAR(g.flat()[idx], fd, 2e-3 + 2e-2 * std::abs(fd)) << ti.name << " " << idx;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 12);
}

TEST(Selector, PicksHighestScore) {
  const std::vector<robust::SelectorEntry> s{{3, 0.2}, {7, 0.5}, {11, 0.4}};
  EXPECT_EQ(robust::best_entry(s), 1u);
  const std::vector<robust::SelectorEntry> tie{{0, 0.5}, {1, 0.5}};
  EXPECT_EQ(robust::best_entry(tie), 0u);
  EXPECT_EQ(robust::best_entry({}), robust::kNoEntry);
}

TEST(RobustScore, WaitingPolicyScoresZero) {
  EXPECT_EQ(robust::robust_score(constant_net(static_cast<int>(env::Action::Wait)), {}, 3, 1), 0.0);
}

TEST(RobustScore, IsMeanOfFourGradientCells) {
  const auto& p = fixtures::trained_policy();
  const auto pool = robust::validation_seeds();
  double sum = 0.0;
  int c = 0;
  for (const auto& spec : {attack::AttackSpec::fgsm(0.10), attack::AttackSpec::fgsm(0.20), attack::AttackSpec::pgd(0.10),
                           attack::AttackSpec::pgd(0.20)})
    sum += eval::run_cell(p, spec, c++, {}, 4, pool, 1).mean;
  EXPECT_DOUBLE_EQ(robust::robust_score(p, {}, 4, 1), sum / 4.0);
}

TEST(RobustScore, ValidationPoolIsDisjointFromReporting) {
  const auto v = robust::validation_seeds();
  const eval::SeedPool report;
  EXPECT_LT(v.episode_seed(1000, 3), report.episode_seed(0, 0));
}

TEST(AdvPpo, DegenerateConfigReproducesPlainPpo) {
  const auto init = net::init_params(4);
  const ppo::PPOConfig cfg;
  robust::AdvRunOptions opt;
  opt.iterations = 3;
  opt.select = false;
  const auto adv = robust::train_advppo(init, init, {}, degenerate_adv(), cfg, 17, opt);
  const auto plain = ppo::train_ppo(init, {}, cfg, 3, 17);
  EXPECT_EQ(adv.final_params, plain.params);
  ASSERT_EQ(adv.log.size(), plain.log.size());
  for (std::size_t i = 0; i < plain.log.size(); ++i) {
    EXPECT_EQ(adv.log[i].losses.total, plain.log[i].losses.total);
    EXPECT_EQ(adv.log[i].losses.policy, plain.log[i].losses.policy);
    EXPECT_EQ(adv.log[i].env_steps, plain.log[i].env_steps);
  }
}

TEST(AdvPpo, RobustTermsChangeTheUpdate) {
  const auto init = net::init_params(4);
  robust::AdvRunOptions opt;
  opt.iterations = 1;
  opt.select = false;
  const auto adv = robust::train_advppo(init, init, {}, {}, {}, 17, opt);
  const auto plain = ppo::train_ppo(init, {}, {}, 1, 17);
  EXPECT_NE(adv.final_params, plain.params);
  EXPECT_GE(adv.log[0].trades, 0.0);
}

TEST(AdvPpo, SelectorRetainsBestScoredCheckpoint) {
  const auto init = net::init_params(5);
  robust::AdvConfig a = degenerate_adv();
  a.eval_period = 1;
  a.eval_episodes = 2;
  robust::AdvRunOptions opt;
  opt.iterations = 3;
  const auto r = robust::train_advppo(init, init, {}, a, {}, 3, opt);
  ASSERT_EQ(r.scores.size(), 3u);
  const auto best = robust::best_entry(r.scores);
  EXPECT_EQ(r.best_iter, r.scores[best].iter);
  EXPECT_DOUBLE_EQ(r.best_score, r.scores[best].score);
  EXPECT_DOUBLE_EQ(robust::robust_score(r.best, {}, 2, 1), r.best_score);
}

TEST(Baseline, SelectionKeepsBestCleanCheckpoint) {
  const auto init = net::init_params(6);
  const auto plain = ppo::train_ppo(init, {}, {}, 4, 8);
  const auto r = robust::train_baseline(init, {}, {}, 4, 8, 2, 3);
  EXPECT_EQ(r.final_params, plain.params);
  ASSERT_EQ(r.scores.size(), 2u);
  EXPECT_EQ(r.scores[0].iter, 1);
  const auto best = robust::best_entry(r.scores);
  EXPECT_EQ(r.best_iter, r.scores[best].iter);
  const auto check = eval::run_cell(r.best, attack::AttackSpec::none(), eval::kCleanCellIndex, {}, 3,
                                    robust::validation_seeds(), 1);
  EXPECT_EQ(check.mean, r.best_score);
  EXPECT_TRUE(r.log[1].score.has_value());
  EXPECT_FALSE(r.log[0].score.has_value());

  const auto off = robust::train_baseline(init, {}, {}, 4, 8, 0, 1);
  EXPECT_EQ(off.best, plain.params);
  EXPECT_TRUE(off.scores.empty());
  EXPECT_THROW(robust::train_baseline(init, {}, {}, 1, 8, -1, 1), std::invalid_argument);
}

TEST(Macer, ZeroWeightReproducesContinuedAdvPpo) {
  const auto& base = fixtures::trained_policy();
  robust::MacerConfig m;
  m.lambda = 0.0;
  m.env_steps = 1200;
  robust::AdvConfig a;
  a.eval_period = 2;
  a.eval_episodes = 1;
  const auto ft = robust::finetune_macer(base, base, {}, m, a, {}, 9);

  robust::AdvRunOptions opt;
  opt.env_step_budget = m.env_steps;
  opt.fixed_kappa = a.kappa_max;
  const auto cont = robust::train_advppo(base, base, {}, robust::finetune_adv_config(a, m),
                                         robust::finetune_ppo_config({}, m), 9, opt);
  EXPECT_EQ(ft.final_params, cont.final_params);
  EXPECT_EQ(ft.best, cont.best);
  ASSERT_EQ(ft.log.size(), cont.log.size());
  for (std::size_t i = 0; i < ft.log.size(); ++i) EXPECT_EQ(ft.log[i].losses.total, cont.log[i].losses.total);
  EXPECT_GE(ft.env_steps, m.env_steps);
}

TEST(Macer, WarmupHoldsWeightAtZero) {
  const auto& base = fixtures::trained_policy();
  robust::MacerConfig m;
  m.env_steps = 1500;
  m.warmup_frac = 0.5;
  m.lambda = 0.1;
  robust::AdvConfig a;
  a.eval_period = 100;
  a.eval_episodes = 1;
  const auto ft = robust::finetune_macer(base, base, {}, m, a, {}, 2);
  std::int64_t before = 0;
  bool saw_on = false;
  for (const auto& e : ft.log) {
    EXPECT_EQ(e.macer_weight, static_cast<double>(before) < 750.0 ? 0.0 : 0.1);
    saw_on = saw_on || e.macer_weight > 0.0;
    EXPECT_EQ(e.kappa, a.kappa_max);
    before = e.env_steps;
  }
  EXPECT_TRUE(saw_on);
}

TEST(Configs, FinetuneOverrides) {
  robust::MacerConfig m;
  const auto p = robust::finetune_ppo_config({}, m);
  EXPECT_EQ(p.lr, m.lr);
  EXPECT_EQ(p.entropy_coef, m.entropy_coef);
  EXPECT_EQ(robust::finetune_adv_config({}, m).alpha_adv, m.alpha_adv);
}

TEST(Configs, RejectInvalidValues) {
  robust::AdvConfig a;
  a.alpha_adv = 1.5;
  EXPECT_THROW(robust::validate(a), std::invalid_argument);
  a = {};
  a.inner_steps = 0;
  EXPECT_THROW(robust::validate(a), std::invalid_argument);
  robust::MacerConfig m;
  m.sigma = 0.0;
  EXPECT_THROW(robust::validate(m), std::invalid_argument);
  m = {};
  m.lambda = -1.0;
  EXPECT_THROW(robust::validate(m), std::invalid_argument);
}
