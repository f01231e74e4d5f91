#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "robmapf/policy_net.hpp"
#include "robmapf/rng.hpp"

using namespace robmapf;

namespace {

net::ObsBatch random_obs(int rows, std::uint64_t seed, bool binary = false) {
  Rng rng(seed);
  net::ObsBatch x(rows, env::kObsSize);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = binary ? static_cast<float>(rng.bernoulli(0.3)) : static_cast<float>(rng.uniform());
  return x;
}

net::NetParams constant_net(std::vector<float> bias) {
  net::NetParams p;
  for (int a = 0; a < env::kNumActions; ++a) p.view(net::Tensor::ActorBias)(0, a) = bias[static_cast<std::size_t>(a)];
  return p;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("robmapf_test_" + name);
}

}  // namespace

TEST(PolicyNet, ParameterCount) {
  EXPECT_EQ(net::parameter_count(), 225094u);
  std::size_t offset = 0;
  for (const auto& t : net::tensor_layout()) {
    EXPECT_EQ(t.offset, offset);
    offset += t.size;
  }
}

TEST(PolicyNet, InitIsSeedDeterministic) {
  EXPECT_EQ(net::init_params(3), net::init_params(3));
  EXPECT_NE(net::init_params(3), net::init_params(4));
}

TEST(PolicyNet, InitIsNearUniformOnZeroInput) {
  const auto out = net::forward(net::init_params(11), net::ObsBatch::Zero(1, env::kObsSize));
  for (int a = 0; a < env::kNumActions; ++a) EXPECT_NEAR(out.probs(0, a), 0.2, 0.05);
}

TEST(PolicyNet, UniformEntropyIsLogFive) {
  const auto out = net::forward(net::NetParams{}, random_obs(1, 1));
  EXPECT_NEAR(out.entropy(0), std::log(5.0), 1e-6);
}

TEST(PolicyNet, SoftmaxRowsSumToOne) {
  auto p = net::init_params(5);
  for (float& v : p.view(net::Tensor::ActorWeight).reshaped()) v *= 300.0f;
  const auto out = net::forward(p, random_obs(64, 2));
  for (Eigen::Index b = 0; b < out.size(); ++b) {
    EXPECT_NEAR(out.probs.row(b).sum(), 1.0, 1e-6);
    EXPECT_GE(out.entropy(b), 0.0);
    EXPECT_LE(out.entropy(b), std::log(5.0) + 1e-6);
  }
}

TEST(PolicyNet, ForwardIsRepeatable) {
  const auto p = net::init_params(1);
  const auto x = random_obs(8, 3);
  const auto a = net::forward(p, x), b = net::forward(p, x);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.values, b.values);
}

TEST(PolicyNet, BatchMatchesSingleForwards) {
  const auto p = net::init_params(1);
  const auto x = random_obs(10, 4, true);
  const auto batch = net::forward(p, x);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const auto one = net::forward(p, x.row(b));
    for (int a = 0; a < env::kNumActions; ++a) EXPECT_NEAR(one.logits(0, a), batch.logits(b, a), 1e-5);
    EXPECT_NEAR(one.values(0), batch.values(b), 1e-5);
  }
}

TEST(PolicyNet, PermutingBatchPermutesOutputs) {
  const auto p = net::init_params(2);
  const auto x = random_obs(6, 5);
  net::ObsBatch y(6, env::kObsSize);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const auto ox = net::forward(p, x), oy = net::forward(p, y);
  for (int i = 0; i < 6; ++i)
    for (int a = 0; a < env::kNumActions; ++a)
      EXPECT_NEAR(oy.logits(i, a), ox.logits(perm[static_cast<std::size_t>(i)], a), 1e-5);
}

TEST(PolicyNet, MatchesDoubleReference) {
  auto p = net::init_params(9);
  for (float& v : p.view(net::Tensor::ActorWeight).reshaped()) v *= 50.0f;
  const auto x = random_obs(3, 6);
  const auto out = net::forward(p, x);
  const std::vector<double> theta(p.flat().begin(), p.flat().end());
  for (int b = 0; b < 3; ++b) {
    const std::vector<double> xb(x.row(b).data(), x.row(b).data() + env::kObsSize);
    const auto ref = oracle::ref_forward(theta, xb);
    for (int a = 0; a < env::kNumActions; ++a) EXPECT_NEAR(out.logits(b, a), ref.logits[static_cast<std::size_t>(a)], 1e-4);
    EXPECT_NEAR(out.values(b), ref.value, 1e-4);
  }
}

TEST(PolicyNet, ZeroUpstreamGivesZeroGrads) {
  const auto p = net::init_params(1);
  net::ForwardTrace trace;
  net::forward(p, random_obs(4, 1), &trace);
  const auto g = net::backward_params(trace, net::RowMatrix::Zero(4, 5), net::Vector::Zero(4));
  for (float v : g.flat()) EXPECT_EQ(v, 0.0f);
}

TEST(PolicyNet, SumOfLogitsGivesOnesOnActorBias) {
  const auto p = net::init_params(1);
  net::ForwardTrace trace;
  net::forward(p, random_obs(1, 1), &trace);
  const auto g = net::backward_params(trace, net::RowMatrix::Ones(1, 5), net::Vector::Zero(1));
  for (int a = 0; a < env::kNumActions; ++a) EXPECT_EQ(g.view(net::Tensor::ActorBias)(0, a), 1.0f);
  EXPECT_EQ(g.view(net::Tensor::CriticBias)(0, 0), 0.0f);
}

TEST(PolicyNet, TraceCannotBeReused) {
  const auto p = net::init_params(1);
  net::ForwardTrace trace;
  net::forward(p, random_obs(2, 1), &trace);
  net::backward_params(trace, net::RowMatrix::Zero(2, 5), net::Vector::Zero(2));
  EXPECT_TRUE(trace.consumed());
  EXPECT_THROW(net::backward_params(trace, net::RowMatrix::Zero(2, 5), net::Vector::Zero(2)), net::NetError);
}

TEST(PolicyNet, BackwardRejectsShapeMismatch) {
  const auto p = net::init_params(1);
  net::ForwardTrace trace;
  net::forward(p, random_obs(2, 1), &trace);
  EXPECT_THROW(net::backward_params(trace, net::RowMatrix::Zero(3, 5), net::Vector::Zero(2)), net::NetError);
}

TEST(PolicyNet, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = gradcheck::check(seed);
    EXPECT_LT(r.max_param_rel, 1e-3) << "seed " << seed;
    EXPECT_LT(r.max_input_rel, 1e-3) << "seed " << seed;
    EXPECT_GT(r.checked, 20);
  }
}

TEST(PolicyNet, InputGradientZeroForConstantNetwork) {
  const auto p = constant_net({0.5f, -0.2f, 0.1f, 0.0f, 0.3f});
  const auto g = net::input_gradient(p, random_obs(3, 2), net::InputLoss::cross_entropy({0, 1, 2}));
  EXPECT_EQ(g.grad.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(PolicyNet, KlGradientVanishesAtReference) {
  const auto p = net::init_params(4);
  const auto x = random_obs(3, 2);
  const auto ref = net::forward(p, x).probs;
  const auto g = net::input_gradient(p, x, net::InputLoss::kl_from(ref));
  EXPECT_LT(g.grad.cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_LT(g.loss.cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(PolicyNet, InputGradientMatchesFiniteDifferences) {
  auto p = net::init_params(8);
  for (float& v : p.view(net::Tensor::ActorWeight).reshaped()) v *= 50.0f;
  const auto x = random_obs(1, 9);
  const auto loss = net::InputLoss::cross_entropy({2});
  const auto g = net::input_gradient(p, x, loss);
  const std::vector<double> theta(p.flat().begin(), p.flat().end());
  std::vector<double> xd(x.data(), x.data() + env::kObsSize);
  const auto base = oracle::ref_forward(theta, xd);
  Rng rng(1);
  int checked = 0;
  for (int k = 0; k < 10; ++k) {
    const auto i = static_cast<std::size_t>(rng.below(env::kObsSize));
    auto xp = xd, xm = xd;
    xp[i] += 1e-3;
    xm[i] -= 1e-3;
    const auto rp = oracle::ref_forward(theta, xp), rm = oracle::ref_forward(theta, xm);
    if (!oracle::same_pattern(rp, base) || !oracle::same_pattern(rm, base)) continue;
    const double fd = (-oracle::log_softmax(rp.logits)[2] + oracle::log_softmax(rm.logits)[2]) / 2e-3;
    EXPECT_LT(gradcheck::rel_error(g.grad(0, static_cast<Eigen::Index>(i)), fd), 1e-3);
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(PolicyNet, CheckpointRoundTripIsByteIdentical) {
  const auto p = net::init_params(42);
  const auto a = temp_path("a.ckpt"), b = temp_path("b.ckpt");
  net::save_checkpoint(p, a);
  const auto q = net::load_checkpoint(a);
  net::save_checkpoint(q, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  const auto x = random_obs(4, 7);
  EXPECT_EQ(net::forward(p, x).logits, net::forward(q, x).logits);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(PolicyNet, CorruptCheckpointsAreRejected) {
  const auto bytes = net::serialize(net::init_params(1));
  EXPECT_NO_THROW(net::deserialize(bytes));
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  EXPECT_THROW(net::deserialize(truncated), net::NetError);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  EXPECT_THROW(net::deserialize(flipped), net::NetError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(net::deserialize(extra), net::NetError);
  EXPECT_THROW(net::load_checkpoint(temp_path("missing.ckpt")), net::NetError);
}
