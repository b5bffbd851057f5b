// Copyright 2026 The cubemanip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cubemanip/sac.hpp"

namespace cubemanip {
namespace {

// Central differences of `loss` with respect to every entry of `params`.
VectorXd numeric_gradient(VectorXd& params, const std::function<double()>& loss, double h = 1e-6) {
  VectorXd g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void expect_gradients_match(const VectorXd& analytic, const VectorXd& numeric) {
  ASSERT_EQ(analytic.size(), numeric.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]);
    EXPECT_TRUE(err <= 1e-4 * std::abs(numeric[i]) || err <= 1e-9)
        << "param " << i << " analytic " << analytic[i] << " numeric " << numeric[i];
  }
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = N(rng);
  }
  return m;
}

Batch random_batch(int state_dim, int action_dim, int n, Rng& rng) {
  std::uniform_real_distribution<double> A(-0.9, 0.9), D(0.0, 1.0);
  Batch b{random_matrix(state_dim, n, rng), MatrixXd(action_dim, n), random_matrix(state_dim, n, rng), VectorXd(n),
          VectorXd(n)};
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < action_dim; ++i) b.a(i, j) = A(rng);
    b.r[j] = D(rng);
    b.done[j] = D(rng) < 0.3 ? 1.0 : 0.0;
  }
  return b;
}

TEST(Reward, ValueAtZeroDistanceIsExact) {
  EXPECT_EQ(reward(Vec3(0.1, 0.2, 0.3), Vec3(0.1, 0.2, 0.3)), 0.001);
  EXPECT_NEAR(reward(Vec3::Zero(), Vec3(std::sqrt(std::log(2.0) / 300.0), 0, 0)), 0.0005, 1e-15);
  EXPECT_NEAR(reward(Vec3::Zero(), Vec3(1, 0, 0)) / std::exp(-300.0), 0.001, 1e-15);
}

TEST(Reward, MonotoneDecreasingInDistance) {
  double prev = reward(Vec3::Zero(), Vec3::Zero());
  for (int i = 1; i <= 100; ++i) {
    const double r = reward(Vec3::Zero(), Vec3(0.002 * i, 0, 0));
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Reward, InvariantUnderRigidTransforms) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> N(0.0, 0.1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(N(rng), N(rng), N(rng)), b(N(rng), N(rng), N(rng));
    const Pose T{Vec3(N(rng), N(rng), N(rng)), UnitQuat::from_axis_angle(Vec3(N(rng), N(rng), 1.0), 10 * N(rng))};
    EXPECT_NEAR(reward(a, b), reward(transform_point(T, a), transform_point(T, b)), 1e-15);
  }
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  for (Activation act : {Activation::kTanh, Activation::kRelu}) {
    Rng rng(42);
    Mlp net({2, 4, 2}, act);
    net.init(rng);
    const MatrixXd x = random_matrix(2, 5, rng);
    const MatrixXd target = random_matrix(2, 5, rng);
    auto loss = [&] { return 0.5 * (net.forward(x) - target).squaredNorm(); };
    Mlp::Cache cache;
    const MatrixXd y = net.forward(x, &cache);
    VectorXd g;
    const MatrixXd dx = net.backward(cache, y - target, g);
    expect_gradients_match(g, numeric_gradient(net.params, loss));
    // Input gradient, one column at a time.
    MatrixXd xm = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double keep = xm(i, j);
        xm(i, j) = keep + 1e-6;
        const double up = 0.5 * (net.forward(xm) - target).squaredNorm();
        xm(i, j) = keep - 1e-6;
        const double down = 0.5 * (net.forward(xm) - target).squaredNorm();
        xm(i, j) = keep;
        EXPECT_NEAR(dx(i, j), (up - down) / 2e-6, 1e-7);
      }
    }
  }
}

struct TinySac {
  GaussianPolicy pi{2, 1, {4}, Activation::kTanh};
  TwinCritic qc{2, 1, {4}, Activation::kTanh};
  TinySac() {
    Rng rng(43);
    pi.trunk.init(rng);
    qc.q1.init(rng);
    qc.q2.init(rng);
    qc.target1.init(rng);
    qc.target2.init(rng);
  }
};

TEST(SacGradients, CriticLossMatchesFiniteDifferences) {
  TinySac t;
  Rng rng(44);
  const Batch b = random_batch(2, 1, 8, rng);
  const VectorXd y = random_matrix(8, 1, rng);
  const CriticGrad cg = critic_loss_and_grad(t.qc, b, y);
  auto loss = [&] { return critic_loss_and_grad(t.qc, b, y).loss; };
  expect_gradients_match(cg.g1, numeric_gradient(t.qc.q1.params, loss));
  expect_gradients_match(cg.g2, numeric_gradient(t.qc.q2.params, loss));
}

TEST(SacGradients, ActorLossMatchesFiniteDifferences) {
  TinySac t;
  Rng rng(45);
  const MatrixXd states = random_matrix(2, 8, rng);
  const MatrixXd noise = random_matrix(1, 8, rng);
  for (double alpha : {0.0, 0.05, 0.7}) {
    const ActorGrad ag = actor_loss_and_grad(t.pi, t.qc, states, noise, alpha);
    auto loss = [&] { return actor_loss_and_grad(t.pi, t.qc, states, noise, alpha).loss; };
    expect_gradients_match(ag.g, numeric_gradient(t.pi.trunk.params, loss));
  }
}

TEST(SacGradients, ClampedLogStdHasNoGradient) {
  TinySac t;
  // Push the log-std output bias far below the clamp.
  const Eigen::Index bias_logstd = t.pi.trunk.num_params() - 1;
  t.pi.trunk.params[bias_logstd] = -20.0;
  Rng rng(46);
  const MatrixXd states = random_matrix(2, 4, rng, 0.1);
  const ActorGrad ag = actor_loss_and_grad(t.pi, t.qc, states, random_matrix(1, 4, rng), 0.1);
  EXPECT_EQ(ag.g[bias_logstd], 0.0);
}

GaussianPolicy constant_policy(double mean, double log_std) {
  GaussianPolicy pi(1, 1, {2}, Activation::kTanh);
  pi.trunk.params.setZero();
  const Eigen::Index n = pi.trunk.num_params();
  pi.trunk.params[n - 2] = mean;
  pi.trunk.params[n - 1] = log_std;
  return pi;
}

TEST(SquashedGaussian, DensityIntegratesToOne) {
  for (auto [mean, log_std] : {std::pair{0.0, 0.0}, std::pair{0.5, std::log(0.3)}, std::pair{-1.0, std::log(0.8)}}) {
    const GaussianPolicy pi = constant_policy(mean, log_std);
    const VectorXd s = VectorXd::Zero(1);
    // Midpoint rule in the pre-squash variable u, a = tanh(u), da = (1 - a^2) du.
    const int n = 200000;
    const double lo = -12.0, hi = 12.0, du = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = lo + (i + 0.5) * du;
      const double a = std::tanh(u);
      if (std::abs(a) >= kActionClip) continue;
      VectorXd av(1);
      av[0] = a;
      total += std::exp(log_prob_squashed(pi, s, av)) * (1.0 - a * a) * du;
    }
    EXPECT_NEAR(total, 1.0, 1e-4) << "mean " << mean;
  }
}

TEST(SquashedGaussian, ModeAndSymmetry) {
  const GaussianPolicy narrow = constant_policy(0.4, std::log(0.01));
  const VectorXd s = VectorXd::Zero(1);
  VectorXd at(1), off(1);
  at[0] = std::tanh(0.4);
  off[0] = std::tanh(0.45);
  EXPECT_GT(log_prob_squashed(narrow, s, at), log_prob_squashed(narrow, s, off));
  const GaussianPolicy centered = constant_policy(0.0, 0.0);
  VectorXd p(1), m(1);
  p[0] = 0.37;
  m[0] = -0.37;
  EXPECT_DOUBLE_EQ(log_prob_squashed(centered, s, p), log_prob_squashed(centered, s, m));
  VectorXd edge(1);
  edge[0] = 1.0;
  EXPECT_TRUE(std::isfinite(log_prob_squashed(centered, s, edge)));
}

TEST(SquashedGaussian, SampledLogProbMatchesDensity) {
  const GaussianPolicy pi = constant_policy(0.2, std::log(0.5));
  Rng rng(47);
  const MatrixXd states = MatrixXd::Zero(1, 50);
  const SquashedSample smp = squashed_sample(pi, states, random_matrix(1, 50, rng));
  for (int j = 0; j < 50; ++j) {
    VectorXd a(1);
    a[0] = smp.a(0, j);
    EXPECT_NEAR(smp.log_prob[j], log_prob_squashed(pi, VectorXd::Zero(1), a), 1e-8);
  }
}

TEST(SampleAction, ZeroNetworkGivesZeroAction) {
  GaussianPolicy pi(3, 2, {4}, Activation::kRelu);
  Rng rng(1);
  EXPECT_EQ(sample_action(pi, VectorXd::Ones(3), true, rng), VectorXd::Zero(2));
  EXPECT_THROW(sample_action(pi, VectorXd::Ones(2), true, rng), std::invalid_argument);
}

TEST(SampleAction, SeededSamplesReproduce) {
  const GaussianPolicy pi = constant_policy(0.1, -0.5);
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_action(pi, VectorXd::Zero(1), false, a), sample_action(pi, VectorXd::Zero(1), false, b));
}

TEST(SampleAction, PreSquashSpreadMatchesStd) {
  const double log_std = std::log(0.4);
  const GaussianPolicy pi = constant_policy(0.3, log_std);
  Rng rng(48);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = std::atanh(sample_action(pi, VectorXd::Zero(1), false, rng)[0]);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd / std::exp(log_std), 1.0, 0.02);
  EXPECT_NEAR(mean, 0.3, 0.01);
}

TEST(SampleAction, WidePolicyHasHigherEntropy) {
  Rng rng(49);
  const MatrixXd states = MatrixXd::Zero(1, 10000);
  const MatrixXd noise = random_matrix(1, 10000, rng);
  const double wide = -squashed_sample(constant_policy(0.0, 0.0), states, noise).log_prob.mean();
  const double narrow = -squashed_sample(constant_policy(0.0, std::log(0.05)), states, noise).log_prob.mean();
  EXPECT_GT(wide, narrow);
}

TEST(ReplayBuffer, WrapsAroundAndDropsOldest) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) {
    buf.push({VectorXd::Constant(1, i), VectorXd::Zero(1), static_cast<double>(i), VectorXd::Zero(1), false});
    EXPECT_LE(buf.size(), 3u);
  }
  std::vector<double> seen;
  for (std::size_t i = 0; i < buf.size(); ++i) seen.push_back(buf.at(i).r);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, (std::vector<double>{2.0, 3.0, 4.0}));
  EXPECT_THROW(buf.push({VectorXd::Zero(1), VectorXd::Zero(1), NAN, VectorXd::Zero(1), false}), std::invalid_argument);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, SamplesUniformly) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push({VectorXd::Zero(1), VectorXd::Zero(1), 0.0, VectorXd::Zero(1), false});
  Rng rng(50);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (std::size_t i : buf.sample_indices(n, rng)) ++counts[i];
  double chi2 = 0.0;
  for (int c : counts) chi2 += std::pow(c - n / 10.0, 2) / (n / 10.0);
  EXPECT_LT(chi2, 27.9);  // 99.9th percentile, 9 degrees of freedom
}

TEST(CriticTargets, ReduceToRewardWithoutDiscountOrEntropy) {
  TinySac t;
  Rng rng(51);
  const Batch b = random_batch(2, 1, 16, rng);
  SacConfig cfg;
  cfg.gamma = 0.0;
  cfg.alpha = 0.0;
  EXPECT_EQ(critic_targets(t.pi, t.qc, b, random_matrix(1, 16, rng), cfg), b.r);
}

TEST(CriticTargets, UseTargetNetworksOnly) {
  TinySac t;
  Rng rng(52);
  const Batch b = random_batch(2, 1, 16, rng);
  const MatrixXd noise = random_matrix(1, 16, rng);
  const SacConfig cfg;
  const VectorXd y = critic_targets(t.pi, t.qc, b, noise, cfg);
  t.qc.q1.params.array() += 0.5;
  t.qc.q2.params.array() -= 0.5;
  EXPECT_EQ(critic_targets(t.pi, t.qc, b, noise, cfg), y);
  t.qc.target1.params.array() += 0.5;
  EXPECT_NE(critic_targets(t.pi, t.qc, b, noise, cfg), y);
}

TEST(SoftUpdate, FullRateCopiesAndZeroRateKeeps) {
  Rng rng(53);
  Mlp a({3, 5, 1}, Activation::kRelu), b({3, 5, 1}, Activation::kRelu);
  a.init(rng);
  b.init(rng);
  const VectorXd keep = b.params;
  soft_update(b, a, 0.0);
  EXPECT_EQ(b.params, keep);
  soft_update(b, a, 1.0);
  EXPECT_EQ(b.params, a.params);
  Mlp c({3, 4, 1}, Activation::kRelu);
  EXPECT_THROW(soft_update(c, a, 0.5), std::invalid_argument);
}

SacConfig small_config() {
  SacConfig cfg;
  cfg.hidden = {8, 8};
  cfg.batch_size = 16;
  cfg.seed = 99;
  return cfg;
}

TEST(SacAgent, ZeroLearningRateChangesNothing) {
  SacConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  SacAgent agent(3, 2, cfg);
  Rng rng(54);
  const Batch b = random_batch(3, 2, 16, rng);
  const GaussianPolicy pi0 = agent.policy();
  const TwinCritic q0 = agent.critics();
  agent.update(b);
  EXPECT_EQ(agent.policy().trunk.params, pi0.trunk.params);
  EXPECT_EQ(agent.critics().q1.params, q0.q1.params);
  EXPECT_EQ(agent.critics().q2.params, q0.q2.params);
  EXPECT_EQ(agent.critics().target1.params, q0.target1.params);
  EXPECT_EQ(agent.critics().target2.params, q0.target2.params);
}

TEST(SacAgent, UpdatesAreDeterministicPerSeed) {
  Rng rng(55);
  const Batch b = random_batch(3, 2, 16, rng);
  SacAgent x(3, 2, small_config()), y(3, 2, small_config());
  for (int i = 0; i < 5; ++i) {
    const LossReport lx = x.update(b), ly = y.update(b);
    EXPECT_EQ(lx.critic_loss, ly.critic_loss);
    EXPECT_EQ(lx.actor_loss, ly.actor_loss);
  }
  EXPECT_EQ(x.policy().trunk.params, y.policy().trunk.params);
}

TEST(SacAgent, CriticFitsConstantRewards) {
  SacConfig cfg = small_config();
  cfg.learning_rate = 3e-3;
  SacAgent agent(3, 2, cfg);
  Rng rng(56);
  Batch b = random_batch(3, 2, 16, rng);
  b.r.setConstant(0.7);
  b.done.setOnes();
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 500; ++i) {
    const LossReport l = agent.update(b);
    if (i == 0) first = l.critic_loss;
    last = l.critic_loss;
  }
  EXPECT_LT(last, 1e-2 * first);
}

TEST(SacAgent, NonFiniteBatchAborts) {
  SacAgent agent(3, 2, small_config());
  Rng rng(57);
  Batch b = random_batch(3, 2, 16, rng);
  b.s(0, 3) = NAN;
  EXPECT_THROW(agent.update(b), std::runtime_error);
}

TEST(SacConfig, Validation) {
  SacConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SacConfig{};
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SacConfig{};
  c.hidden = {64, 0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace cubemanip
