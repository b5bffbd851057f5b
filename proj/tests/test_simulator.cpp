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

#include <algorithm>
#include <array>
#include <cmath>

#include "cubemanip/simulator.hpp"

namespace cubemanip {
namespace {

Simulator default_sim(SimConfig cfg = {}) { return Simulator(cfg, CubeGeometry{}, RobotConfig{}); }

// Gravity compensation plus PD around the home posture.
JointVector hold_home(const Simulator& sim, const WorldState& s) {
  JointVector tau;
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerJoints q = finger_slice(s.joints.q, f);
    const FingerJoints qd = finger_slice(s.joints.qdot, f);
    tau.segment<3>(3 * f) = gravity_torque(sim.fingers()[f], q, sim.config().gravity) +
                            5.0 * (sim.robot().home - q) - 0.2 * qd;
  }
  return tau;
}

TEST(Simulator, RestingCubeStaysPut) {
  const Simulator sim = default_sim();
  WorldState s = sim.initial_state(0.03, -0.02, 0.4);
  const Vec3 start = s.cube_pose.position;
  for (int i = 0; i < 5000; ++i) s = sim.step(s, hold_home(sim, s));
  EXPECT_LT((s.cube_pose.position - start).norm(), 1e-3);
  EXPECT_LT(s.cube_pose.orientation.log().norm() - 0.4, 1e-3);
}

TEST(Simulator, BallisticDropFollowsParabola) {
  SimConfig cfg;
  cfg.floor_enabled = false;
  const Simulator sim = default_sim(cfg);
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  s.cube_pose.position.z() = 2.0;
  const double z0 = s.cube_pose.position.z();
  const double g = 9.81;
  double worst = 0.0;
  for (int i = 1; i <= 600; ++i) {
    s = sim.step(s, hold_home(sim, s));
    const double t = i * cfg.dt;
    worst = std::max(worst, std::abs(s.cube_pose.position.z() - (z0 - 0.5 * g * t * t)));
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_NEAR(s.cube_linvel.z(), -g * 0.6, 1e-9);
}

TEST(Simulator, FreeFlightConservesEnergy) {
  SimConfig cfg;
  cfg.floor_enabled = false;
  RobotConfig rc;
  rc.joint_damping = 0.0;
  const Simulator sim(cfg, CubeGeometry{}, rc);
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  s.cube_pose.position.z() = 1.0;
  s.cube_linvel = Vec3(0.3, -0.2, 1.0);
  s.cube_angvel = Vec3(2.0, -1.0, 3.0);
  // Hold the fingers with gravity compensation only: they keep their energy.
  const double e0 = sim.mechanical_energy(s);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    JointVector tau;
    for (int f = 0; f < kNumFingers; ++f) {
      tau.segment<3>(3 * f) = gravity_torque(sim.fingers()[f], finger_slice(s.joints.q, f), cfg.gravity);
    }
    s = sim.step(s, tau);
    worst = std::max(worst, std::abs(sim.mechanical_energy(s) - e0));
  }
  EXPECT_LT(worst / std::abs(e0), 1e-3);
}

TEST(Simulator, PassiveSystemDoesNotGainEnergy) {
  // Unactuated fingers settle onto a resting cube.
  const Simulator sim = default_sim();
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  const JointVector zero = JointVector::Zero();
  double prev = sim.mechanical_energy(s);
  double worst = 0.0;
  for (int i = 0; i < 3000; ++i) {
    s = sim.step(s, zero);
    const double e = sim.mechanical_energy(s);
    worst = std::max(worst, e - prev);
    prev = e;
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Simulator, DroppedCubeGainsEnergyOnlyAtImpact) {
  // A stiff penalty contact integrated with a fixed step may release a little
  // stored energy during one step of a hard impact; the drop still dissipates.
  const Simulator sim = default_sim();
  for (double height : {0.03, 0.05, 0.1}) {
    WorldState s = sim.initial_state(0.0, 0.0, 0.0);
    s.cube_pose.position.z() += height;
    s.cube_linvel = Vec3(0.05, 0.0, 0.0);
    s.cube_angvel = Vec3(1.0, 2.0, 0.5);
    const double e0 = sim.mechanical_energy(s);
    double prev = e0;
    int gaining = 0;
    for (int i = 0; i < 3000; ++i) {
      s = sim.step(s, JointVector::Zero());
      const double e = sim.mechanical_energy(s);
      if (e > prev + 1e-6) {
        ++gaining;
        EXPECT_LT(e - prev, 0.1 * (e0 - sim.mechanical_energy(sim.initial_state(0.0, 0.0, 0.0)))) << height;
      }
      prev = e;
    }
    EXPECT_LE(gaining, 1) << height;
    EXPECT_LT(prev, e0) << height;
  }
}

TEST(Simulator, TorquesAreClamped) {
  const Simulator sim = default_sim();
  JointVector tau = JointVector::Constant(50.0);
  tau[3] = -50.0;
  tau[4] = 0.25;
  const JointVector c = sim.clamp_torques(tau);
  EXPECT_DOUBLE_EQ(c.maxCoeff(), sim.robot().torque_limit);
  EXPECT_DOUBLE_EQ(c[3], -sim.robot().torque_limit);
  EXPECT_DOUBLE_EQ(c[4], 0.25);
  // Saturated commands produce the same motion as their clamped versions.
  const WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  const WorldState a = sim.step(s, tau), b = sim.step(s, c);
  EXPECT_EQ(a.joints.q, b.joints.q);
  EXPECT_EQ(a.joints.qdot, b.joints.qdot);
}

TEST(Simulator, JointLimitsAreRespected) {
  const Simulator sim = default_sim();
  WorldState s = sim.initial_state(0.1, 0.1, 0.0);
  for (int i = 0; i < 2000; ++i) s = sim.step(s, JointVector::Constant(1.0));
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerJoints q = finger_slice(s.joints.q, f);
    EXPECT_TRUE(((q - sim.fingers()[f].joint_lower).array() >= 0).all());
    EXPECT_TRUE(((sim.fingers()[f].joint_upper - q).array() >= 0).all());
  }
}

TEST(Simulator, TipContactPushesAlongTheFaceNormal) {
  SimConfig cfg;
  cfg.floor_enabled = false;
  cfg.gravity = Vec3::Zero();
  const Simulator sim = default_sim(cfg);
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  s.cube_pose.position = Vec3(0.0, 0.0, 0.1);
  // Place finger 0's tip 2 mm into the +X face via IK.
  const double h = sim.cube().half_edge();
  const Vec3 target(h + sim.config().tip_radius - 0.002, 0.0, 0.1);
  const IkResult ik = ik_tip(sim.fingers()[0], target, sim.robot().home);
  ASSERT_TRUE(ik.ok());
  s.joints.q.segment<3>(0) = ik.q;
  const auto report = sim.tip_contact_report(s);
  ASSERT_TRUE(report[0].in_contact);
  EXPECT_NEAR(report[0].penetration, 0.002, 1e-4);
  EXPECT_LT((report[0].normal - Vec3::UnitX()).norm(), 1e-9);
  EXPECT_NEAR(report[0].force.x(), -cfg.tip_stiffness * report[0].penetration, 1e-9);
  EXPECT_FALSE(report[1].in_contact);
  EXPECT_EQ(sim.tips_touching(s, 0.0), 1);
  // The cube accelerates away from the tip.
  const WorldState n = sim.step(s, JointVector::Zero());
  EXPECT_LT(n.cube_linvel.x(), 0.0);
}

TEST(Simulator, TipFrictionStaysInsideTheCone) {
  const Simulator sim = default_sim();
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  // Press finger 0 into the cube while dragging it sideways.
  const double h = sim.cube().half_edge();
  const IkResult ik = ik_tip(sim.fingers()[0], Vec3(h + 0.015, 0.0, h), sim.robot().home);
  ASSERT_TRUE(ik.ok());
  s.joints.q.segment<3>(0) = ik.q;
  const double mu = sim.cube().friction_coeff;
  for (int i = 0; i < 300; ++i) {
    JointVector tau = JointVector::Zero();
    tau.segment<3>(0) = gravity_torque(sim.fingers()[0], finger_slice(s.joints.q, 0), sim.config().gravity) +
                        tip_jacobian(sim.fingers()[0], finger_slice(s.joints.q, 0)).transpose() * Vec3(-2.0, 1.0, 0.0);
    s = sim.step(s, tau);
    const TipContact c = sim.tip_contact_report(s)[0];
    if (!c.in_contact) continue;
    const double fn = -c.force.dot(c.normal);
    const Vec3 ft = c.force + fn * c.normal;
    EXPECT_LE(ft.norm(), mu * fn + 1e-9);
  }
}

TEST(Simulator, RejectsNonFiniteInputAndDivergence) {
  const Simulator sim = default_sim();
  WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  JointVector tau = JointVector::Zero();
  tau[2] = NAN;
  EXPECT_THROW(sim.step(s, tau), SimulationError);
  s.cube_linvel = Vec3(100.0, 0.0, 0.0);
  EXPECT_THROW(sim.step(s, JointVector::Zero()), SimulationError);
  SimConfig bad;
  bad.dt = 0.0;
  EXPECT_THROW(default_sim(bad), std::invalid_argument);
}

TEST(Simulator, GraspLossNeedsTwoTouchingTips) {
  const Simulator sim = default_sim();
  const WorldState s = sim.initial_state(0.0, 0.0, 0.0);
  const std::array<ContactSpec, 3> specs{};
  EXPECT_TRUE(is_grasp_lost(sim, s, specs));
}

}  // namespace
}  // namespace cubemanip
