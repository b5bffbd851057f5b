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
#include <sstream>
#include <vector>

#include "cubemanip/env.hpp"

namespace cubemanip {
namespace {

VectorXd zero_action() { return VectorXd::Zero(kActionDim); }

// Short windows keep the closed-loop tests fast.
EnvParams short_params() {
  EnvParams p;
  p.env.waypoint_duration = 0.5;
  p.env.num_waypoints = 2;
  return p;
}

TEST(Env, ObservationRoundTrip) {
  Observation o;
  o.cube_position = Vec3(0.1, -0.2, 0.03);
  o.cube_orientation = UnitQuat::from_axis_angle(Vec3(1, 2, 3).normalized(), 0.7);
  o.goal = Vec3(0.0, 0.05, 0.1);
  o.tips = {Vec3(1, 2, 3), Vec3(4, 5, 6), Vec3(7, 8, 9)};
  const VectorXd v = o.to_vector();
  ASSERT_EQ(v.size(), kObsDim);
  EXPECT_EQ(Observation::from_vector(v).to_vector(), v);
  EXPECT_EQ(v[10 + 3 * 2 + 1], 8.0);
  EXPECT_THROW(Observation::from_vector(VectorXd::Zero(18)), std::invalid_argument);
  VectorXd bad = v;
  bad[2] = std::nan("");
  EXPECT_THROW(Observation::from_vector(bad), std::invalid_argument);
}

TEST(Env, GoalSamplesRespectBounds) {
  EnvConfig cfg;
  const double arena = SimConfig{}.arena_radius;
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const GoalTrajectory g = sample_goal_trajectory(rng, cfg, arena);
    ASSERT_EQ(static_cast<int>(g.size()), cfg.num_waypoints);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec3& p = g[k].position;
      EXPECT_LE(std::hypot(p.x(), p.y()), cfg.goal_radius_fraction * arena + 1e-12);
      EXPECT_GE(p.z(), cfg.goal_min_height);
      EXPECT_LE(p.z(), cfg.goal_max_height);
      EXPECT_EQ(g[k].duration, cfg.waypoint_duration);
      if (k > 0) {
        EXPECT_LE((p - g[k - 1].position).norm(), cfg.max_step + 1e-12);
      }
    }
  }
}

TEST(Env, GoalRadiusIsAreaUniform) {
  // Half of the samples fall inside radius R / sqrt(2).
  EnvConfig cfg;
  cfg.num_waypoints = 1;
  const double arena = SimConfig{}.arena_radius;
  const double R = cfg.goal_radius_fraction * arena;
  Rng rng(3);
  const int n = 20000;
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = sample_goal_trajectory(rng, cfg, arena)[0].position;
    if (std::hypot(p.x(), p.y()) < R / std::sqrt(2.0)) ++inside;
  }
  EXPECT_NEAR(static_cast<double>(inside) / n, 0.5, 4 * std::sqrt(0.25 / n));
}

TEST(Env, GoalFileRoundTripAndErrors) {
  Rng rng(9);
  const GoalTrajectory g = sample_goal_trajectory(rng, EnvConfig{}, SimConfig{}.arena_radius);
  std::stringstream ss;
  ss << "# header\n";
  write_goal_trajectory(ss, g);
  const GoalTrajectory back = read_goal_trajectory(ss);
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_EQ(back[k].position, g[k].position);
    EXPECT_EQ(back[k].duration, g[k].duration);
  }
  std::istringstream short_line("0.1 0.2 0.3\n");
  EXPECT_THROW(read_goal_trajectory(short_line), std::invalid_argument);
  std::istringstream extra("0.1 0.2 0.3 6 7\n");
  EXPECT_THROW(read_goal_trajectory(extra), std::invalid_argument);
  std::istringstream neg("0.1 0.2 0.3 -1\n");
  EXPECT_THROW(read_goal_trajectory(neg), std::invalid_argument);
  std::istringstream empty("# nothing\n\n");
  EXPECT_THROW(read_goal_trajectory(empty), std::invalid_argument);
  try {
    std::istringstream bad("0 0 0.1 6\n0 0 x 6\n");
    read_goal_trajectory(bad, "g.txt");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("g.txt:2"), std::string::npos);
  }
}

TEST(Env, ActionToContactsClampsAndMaps) {
  VectorXd a(kActionDim);
  a << 0.5, -0.25, 3.0, -7.0, 0.0, 1.0;
  const std::array<FaceId, kNumFingers> faces{FaceId::kPosX, FaceId::kNegY, FaceId::kPosY};
  const ContactTriple c = action_to_contacts(a, faces);
  EXPECT_EQ(c[0].face, FaceId::kPosX);
  EXPECT_EQ(c[0].u, 0.5);
  EXPECT_EQ(c[0].v, -0.25);
  EXPECT_EQ(c[1].u, 1.0);
  EXPECT_EQ(c[1].v, -1.0);
  EXPECT_EQ(c[2].face, FaceId::kPosY);
  EXPECT_EQ(c[2].v, 1.0);
  EXPECT_THROW(action_to_contacts(VectorXd::Zero(5), faces), std::invalid_argument);
}

TEST(Env, ResetIsDeterministicAndInsideInitDisk) {
  Env a(EnvParams{}), b(EnvParams{});
  for (std::uint64_t s : {1u, 2u, 77u}) {
    const VectorXd oa = a.reset(s).to_vector();
    EXPECT_EQ(oa, b.reset(s).to_vector());
    EXPECT_LE(std::hypot(oa[0], oa[1]), EnvParams{}.env.init_radius + 1e-12);
    EXPECT_EQ(a.goals().size(), 4u);
  }
  EXPECT_NE(a.reset(1).to_vector(), a.reset(2).to_vector());
}

TEST(Env, EpisodeIsDeterministic) {
  auto run = [](std::uint64_t seed) {
    Env env(short_params());
    env.reset(seed);
    std::vector<double> rewards;
    while (!env.done()) rewards.push_back(env.step(zero_action()).reward);
    rewards.push_back(env.world().cube_pose.position.z());
    return rewards;
  };
  EXPECT_EQ(run(4), run(4));
}

TEST(Env, RewardsAndWindowBookkeeping) {
  const EnvParams p = short_params();
  Env env(p);
  env.reset(8);
  const int ticks = static_cast<int>(std::lround(p.env.waypoint_duration / p.env.control_period));
  double total = 0.0;
  int steps = 0;
  while (!env.done()) {
    const StepResult r = env.step(zero_action());
    EXPECT_FALSE(r.failed);
    EXPECT_GE(r.reward, 0.0);
    EXPECT_LE(r.reward, ticks * p.env.reward.scale + 1e-12);
    total += r.reward;
    ++steps;
  }
  EXPECT_EQ(steps, p.env.num_waypoints);
  EXPECT_EQ(env.primitive_log().size(), static_cast<std::size_t>(1 + steps * ticks));
  EXPECT_GT(total, 0.0);
  EXPECT_THROW(env.step(zero_action()), std::logic_error);
}

TEST(Env, TraceRewardsSumToStepReward) {
  const EnvParams p = short_params();
  Env env(p);
  double traced = 0.0;
  int records = 0;
  env.set_trace([&](const TraceRecord& r) {
    traced += r.reward;
    ++records;
  });
  env.reset(12);
  double total = 0.0;
  while (!env.done()) total += env.step(zero_action()).reward;
  EXPECT_DOUBLE_EQ(traced, total);
  const int expected = p.env.num_waypoints *
                       static_cast<int>(std::lround(p.env.waypoint_duration / p.sim.dt));
  EXPECT_EQ(records, expected);
}

TEST(Env, FixedGoalsAreUsed) {
  GoalTrajectory g{{Vec3(0.01, 0.02, 0.06), 0.5}, {Vec3(-0.02, 0.0, 0.08), 0.3}};
  Env env(short_params());
  const Observation o = env.reset(3, g);
  EXPECT_EQ(o.goal, g[0].position);
  const StepResult r = env.step(zero_action());
  EXPECT_EQ(r.obs.goal, g[1].position);
  EXPECT_EQ(env.primitive_log().size(), 51u);
  env.step(zero_action());
  EXPECT_EQ(env.primitive_log().size(), 81u);
  EXPECT_TRUE(env.done());
}

TEST(Env, RandomizationDrawsWithinRanges) {
  EnvParams p;
  p.randomization.enabled = true;
  Env env(p);
  double mass_lo = 10, mass_hi = 0;
  for (std::uint64_t s = 0; s < 300; ++s) {
    env.reset(s);
    const EpisodePhysics& ph = env.physics();
    EXPECT_TRUE(p.randomization.mass.contains(ph.mass_scale));
    EXPECT_TRUE(p.randomization.friction.contains(ph.friction_scale));
    EXPECT_TRUE(p.randomization.tip_stiffness.contains(ph.tip_stiffness_scale));
    EXPECT_NEAR(env.plant().cube().mass, CubeGeometry{}.mass * ph.mass_scale, 1e-15);
    mass_lo = std::min(mass_lo, ph.mass_scale);
    mass_hi = std::max(mass_hi, ph.mass_scale);
  }
  EXPECT_LT(mass_lo, 0.85);
  EXPECT_GT(mass_hi, 1.2);
  env.reset(1);
  const VectorXd o1 = env.observe().to_vector();
  const VectorXd o2 = env.observe().to_vector();
  EXPECT_NE(o1, o2);
  EXPECT_LT((o1 - o2).norm(), 0.05);
}

TEST(Env, NominalEnvHasUnitPhysicsAndNoNoise) {
  Env env(EnvParams{});
  env.reset(1);
  EXPECT_EQ(env.physics().mass_scale, 1.0);
  EXPECT_EQ(env.observe().to_vector(), env.observe().to_vector());
}

TEST(Env, DivergenceEndsEpisodeAsFailure) {
  EnvParams p = short_params();
  p.sim.max_joint_speed = 1e-9;
  Env env(p);
  env.reset(2);
  const StepResult r = env.step(zero_action());
  EXPECT_TRUE(r.failed);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.failure.empty());
}

TEST(Env, RejectsBadUse) {
  Env env(EnvParams{});
  EXPECT_THROW(env.step(zero_action()), std::logic_error);
  env.reset(1);
  EXPECT_THROW(env.step(VectorXd::Zero(4)), std::invalid_argument);
  VectorXd nan = zero_action();
  nan[0] = std::nan("");
  EXPECT_THROW(env.step(nan), std::invalid_argument);
  EnvParams p;
  p.env.control_period = 0.0025;
  EXPECT_THROW(Env{p}, std::invalid_argument);
  p = EnvParams{};
  p.randomization.mass = {0.3, 1.0};
  EXPECT_THROW(Env{p}, std::invalid_argument);
}

}  // namespace
}  // namespace cubemanip
