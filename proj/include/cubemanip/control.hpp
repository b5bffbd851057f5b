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

#pragma once

// Joint-level PD + inverse-dynamics control and the three-primitive state
// machine (select contacts -> reach -> lift, back to select on a drop).

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include "cubemanip/geom.hpp"
#include "cubemanip/grasp.hpp"
#include "cubemanip/kinematics.hpp"
#include "cubemanip/simulator.hpp"
#include "cubemanip/trajectory.hpp"

namespace cubemanip {

using ContactTriple = std::array<ContactSpec, kNumFingers>;

enum class Primitive { kSelectContacts = 0, kReach = 1, kLift = 2 };

inline constexpr std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kSelectContacts: return "select";
    case Primitive::kReach: return "reach";
    case Primitive::kLift: return "lift";
  }
  return "?";
}

// Each finger gets the side face whose outward normal points most nearly at
// its base (horizontal components only). Side faces are the four whose world
// normals are closest to horizontal, so top and bottom are never used. Ties
// keep the earlier face in kAllFaces order.
inline std::array<FaceId, kNumFingers> assign_faces(const Pose& cube_pose,
                                                    const std::array<FingerModel, kNumFingers>& fingers) {
  std::array<FaceId, 6> order = kAllFaces;
  std::stable_sort(order.begin(), order.end(), [&](FaceId a, FaceId b) {
    return std::abs(face_normal_world(cube_pose, a).z()) < std::abs(face_normal_world(cube_pose, b).z());
  });
  std::array<FaceId, kNumFingers> out{};
  for (int f = 0; f < kNumFingers; ++f) {
    Vec3 dir = fingers[f].base_pose.position - cube_pose.position;
    dir.z() = 0.0;
    dir.normalize();
    double best = -2.0;
    for (FaceId face : kAllFaces) {
      if (std::find(order.begin(), order.begin() + 4, face) == order.begin() + 4) continue;
      Vec3 n = face_normal_world(cube_pose, face);
      n.z() = 0.0;
      const double score = n.normalized().dot(dir);
      if (score > best) {
        best = score;
        out[f] = face;
      }
    }
  }
  return out;
}

inline ContactTriple face_center_contacts(const std::array<FaceId, kNumFingers>& faces) {
  ContactTriple c;
  for (int f = 0; f < kNumFingers; ++f) c[f] = ContactSpec{faces[f], 0.0, 0.0};
  return c;
}

struct GainSet {
  JointVector kp_joint = JointVector::Constant(10.0);
  JointVector kd_joint = JointVector::Constant(0.3);
  CubeTrackingGains cube;

  void validate() const {
    if ((kp_joint.array() < 0).any() || (kd_joint.array() < 0).any() || cube.kp_lin < 0 || cube.kd_lin < 0 ||
        cube.kp_ang < 0 || cube.kd_ang < 0) {
      throw std::invalid_argument("GainSet: gains must be >= 0");
    }
  }
};

struct ControlConfig {
  GainSet gains;
  double reach_duration = 1.5;   // s per reach segment
  double standoff = 0.02;        // m along the face normal
  double contact_tolerance = 0.005;
  double reach_timeout = 1.0;    // s allowed after the closing segment ends
  double lift_duration = 2.0;    // s to move the cube to a new waypoint
  double grip_depth = 0.002;     // m the tip target sits inside the face
  double qp_mu = 0.6;            // friction used by the force QP
  double f_max = 5.0;            // N per tip
  double w_reg = 1e-2;
  double f_ref = 0.3;
  double drop_tolerance = 0.03;  // m below the reference counts as a drop
  int loss_debounce = 3;         // consecutive ticks before a drop is declared
  bool gravity_compensation = true;

  void validate() const {
    gains.validate();
    if (!(reach_duration > 0) || !(lift_duration > 0) || !(standoff >= 0) || !(contact_tolerance > 0) ||
        !(reach_timeout >= 0) || !(qp_mu > 0) || !(f_max > 0) || !(w_reg >= 0) || !(f_ref >= 0) ||
        !(drop_tolerance > 0) || loss_debounce < 1) {
      throw std::invalid_argument("ControlConfig: invalid value");
    }
  }
};

// tau = Kp (q_des - q) + Kd (qdot_des - qdot) + J^T f_tip + g(q), clamped.
inline JointVector joint_pd_id(const JointState& joints, const JointVector& q_des, const JointVector& qdot_des,
                               const std::array<Vec3, kNumFingers>& tip_forces,
                               const std::array<FingerModel, kNumFingers>& models, const GainSet& gains,
                               const Vec3& gravity, bool gravity_compensation, double torque_limit) {
  JointVector tau = gains.kp_joint.cwiseProduct(q_des - joints.q) + gains.kd_joint.cwiseProduct(qdot_des - joints.qdot);
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerJoints q = finger_slice(joints.q, f);
    tau.segment<3>(3 * f) += tip_jacobian(models[f], q).transpose() * tip_forces[f];
    if (gravity_compensation) tau.segment<3>(3 * f) += gravity_torque(models[f], q, gravity);
  }
  return tau.cwiseMax(-torque_limit).cwiseMin(torque_limit);
}

struct ControllerState {
  Primitive primitive = Primitive::kSelectContacts;
  std::optional<ContactTriple> contacts;
  std::array<TimedPath3, kNumFingers> finger_paths;  // active reach segment
  int reach_segment = 0;
  int replans = 0;
  bool failed = false;
  double phase_clock = 0.0;
  JointVector q_des = JointVector::Zero();
  bool q_des_valid = false;
  // Lift bookkeeping.
  TimedPath3 cube_path;
  UnitQuat ref_orientation;
  Vec3 lift_goal = Vec3::Zero();
  int lost_ticks = 0;
  QpWarmStart qp_warm;
};

struct TickDiagnostics {
  Primitive primitive = Primitive::kSelectContacts;
  bool qp_solved = true;
  bool ik_ok = true;
  int qp_iterations = 0;
  bool grasp_lost = false;
  double reference_error = 0.0;  // cube distance to its reference (Lift only)
};

struct TickResult {
  JointVector torques = JointVector::Zero();
  ControllerState state;
  TickDiagnostics diag;
};

class Controller {
 public:
  // `model` is the controller's nominal view of the world; the simulated
  // plant may differ (domain randomization).
  Controller(Simulator model, ControlConfig cfg, double control_dt)
      : model_(std::move(model)), cfg_(std::move(cfg)), dt_(control_dt) {
    cfg_.validate();
    if (!(dt_ > 0)) throw std::invalid_argument("Controller: control period must be > 0");
  }

  const ControlConfig& config() const { return cfg_; }
  const Simulator& model() const { return model_; }
  double period() const { return dt_; }

  // Tip-center target for a contact, in the cube frame.
  Vec3 tip_target_local(const ContactSpec& c) const {
    return contact_point_local(model_.cube(), c) +
           (model_.config().tip_radius - cfg_.grip_depth) * face_normal_local(c.face);
  }

  TickResult tick(const ControllerState& in, const WorldState& world, const Vec3& goal,
                  const std::optional<ContactTriple>& decision) const {
    TickResult out;
    out.state = in;
    ControllerState& st = out.state;
    if (!st.q_des_valid) {
      st.q_des = world.joints.q;
      st.q_des_valid = true;
    }
    JointVector qdot_des = JointVector::Zero();
    std::array<Vec3, kNumFingers> tip_forces{};
    tip_forces.fill(Vec3::Zero());

    if (st.primitive == Primitive::kSelectContacts && decision) {
      for (const auto& c : *decision) c.validate();
      st.contacts = decision;
      st.replans = 0;
      st.failed = false;
      plan_reach(st, world, 0);
      st.primitive = Primitive::kReach;
    }

    if (st.primitive == Primitive::kReach && !st.failed) {
      if (st.reach_segment == 0 && st.phase_clock >= cfg_.reach_duration) plan_reach(st, world, 1);
      const auto tips = model_.tip_positions(world.joints);
      bool all_close = st.reach_segment == 1;
      for (int f = 0; f < kNumFingers; ++f) {
        const Vec3 target = transform_point(world.cube_pose, tip_target_local((*st.contacts)[f]));
        if ((tips[f] - target).norm() >= cfg_.contact_tolerance) all_close = false;
      }
      if (all_close) {
        begin_lift(st, world, goal);
      } else {
        bool ik_ok = track_finger_paths(st, qdot_des);
        const bool timed_out = st.reach_segment == 1 && st.phase_clock > cfg_.reach_duration + cfg_.reach_timeout;
        if (!ik_ok || timed_out) {
          out.diag.ik_ok = ik_ok;
          if (st.replans < 1) {
            ++st.replans;
            plan_reach(st, world, 0);
          } else {
            st.failed = true;
          }
        }
      }
    }

    if (st.primitive == Primitive::kLift) {
      if ((goal - st.lift_goal).norm() > 1e-12) {
        const Vec3 from = st.cube_path.sample(st.phase_clock).position;
        st.cube_path = point_to_point(from, goal, cfg_.lift_duration);
        st.lift_goal = goal;
        st.phase_clock = 0.0;
      }
      const PathSample ref = st.cube_path.sample(st.phase_clock);
      CubeReference cref;
      cref.pose = Pose{ref.position, st.ref_orientation};
      cref.linvel = ref.velocity;
      cref.linacc = ref.acceleration;
      out.diag.reference_error = (world.cube_pose.position - ref.position).norm();

      std::array<Vec3, kNumFingers> points, normals;
      for (int f = 0; f < kNumFingers; ++f) {
        const ContactSpec& c = (*st.contacts)[f];
        points[f] = transform_point(world.cube_pose, contact_point_local(model_.cube(), c));
        normals[f] = -face_normal_world(world.cube_pose, c.face);
        const Vec3 tip_des = transform_point(cref.pose, tip_target_local(c));
        const FingerModel& m = model_.fingers()[f];
        const IkResult ik = ik_tip(m, tip_des, finger_slice(st.q_des, f));
        if (!ik.ok()) out.diag.ik_ok = false;
        st.q_des.segment<3>(3 * f) = ik.q;
        qdot_des.segment<3>(3 * f) = joint_velocity(m, ik.q, ref.velocity);
      }
      const WrenchTarget w = desired_wrench(world.cube_pose, world.cube_linvel, world.cube_angvel, cref,
                                            model_.cube(), cfg_.gains.cube, model_.config().gravity);
      ContactQpOptions qo;
      qo.w_reg = cfg_.w_reg;
      qo.f_ref = cfg_.f_ref;
      const ContactForces cf = solve_contact_forces(grasp_matrix(points, world.cube_pose.position), normals, w,
                                                    FrictionPyramid{cfg_.qp_mu, true}, cfg_.f_max, qo, &st.qp_warm);
      out.diag.qp_solved = cf.ok();
      out.diag.qp_iterations = cf.iterations;
      for (int f = 0; f < kNumFingers; ++f) tip_forces[f] = cf.forces[f];

      const double min_height = ref.position.z() - cfg_.drop_tolerance;
      const bool lost = is_grasp_lost(model_, world, *st.contacts, min_height);
      st.lost_ticks = lost ? st.lost_ticks + 1 : 0;
      if (st.lost_ticks >= cfg_.loss_debounce) {
        out.diag.grasp_lost = true;
        st.primitive = Primitive::kSelectContacts;
        st.contacts.reset();
        st.lost_ticks = 0;
        st.q_des = world.joints.q;
        tip_forces.fill(Vec3::Zero());
        qdot_des.setZero();
      }
    }

    out.torques = joint_pd_id(world.joints, st.q_des, qdot_des, tip_forces, model_.fingers(), cfg_.gains,
                              model_.config().gravity, cfg_.gravity_compensation, model_.robot().torque_limit);
    st.phase_clock += dt_;
    out.diag.primitive = st.primitive;
    return out;
  }

 private:
  static FingerJoints joint_velocity(const FingerModel& m, const FingerJoints& q, const Vec3& v) {
    const Mat3 J = tip_jacobian(m, q);
    return J.transpose() * (J * J.transpose() + 1e-4 * Mat3::Identity()).ldlt().solve(v);
  }

  // Segment 0 runs from the current tips to the standoff points, segment 1
  // closes in along the face normals.
  void plan_reach(ControllerState& st, const WorldState& world, int segment) const {
    const auto tips = model_.tip_positions(world.joints);
    for (int f = 0; f < kNumFingers; ++f) {
      const ContactSpec& c = (*st.contacts)[f];
      const Vec3 target = transform_point(world.cube_pose, tip_target_local(c));
      const Vec3 standoff = target + (cfg_.standoff + cfg_.grip_depth) * face_normal_world(world.cube_pose, c.face);
      st.finger_paths[f] = segment == 0 ? point_to_point(tips[f], standoff, cfg_.reach_duration)
                                        : point_to_point(st.finger_paths[f].end, target, cfg_.reach_duration);
    }
    st.reach_segment = segment;
    st.phase_clock = 0.0;
    st.q_des = world.joints.q;
  }

  bool track_finger_paths(ControllerState& st, JointVector& qdot_des) const {
    bool ok = true;
    for (int f = 0; f < kNumFingers; ++f) {
      const PathSample s = st.finger_paths[f].sample(st.phase_clock);
      const FingerModel& m = model_.fingers()[f];
      const IkResult ik = ik_tip(m, s.position, finger_slice(st.q_des, f));
      if (!ik.ok()) ok = false;
      st.q_des.segment<3>(3 * f) = ik.q;
      qdot_des.segment<3>(3 * f) = joint_velocity(m, ik.q, s.velocity);
    }
    return ok;
  }

  void begin_lift(ControllerState& st, const WorldState& world, const Vec3& goal) const {
    st.primitive = Primitive::kLift;
    st.ref_orientation = world.cube_pose.orientation;
    st.cube_path = point_to_point(world.cube_pose.position, goal, cfg_.lift_duration);
    st.lift_goal = goal;
    st.phase_clock = 0.0;
    st.lost_ticks = 0;
  }

  Simulator model_;
  ControlConfig cfg_;
  double dt_;
};

}  // namespace cubemanip
