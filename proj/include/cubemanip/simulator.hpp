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

// Penalty-contact rigid-body simulation of one cube and three fingers.
//
// Contacts are spring-dampers along the normal. Tangential friction is a
// spring anchored where the contact began; when the spring force exceeds
// mu * f_n the anchor slides so the force sits on the Coulomb bound.
// Fingertips are spheres; finger links never collide.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubemanip/geom.hpp"
#include "cubemanip/kinematics.hpp"

namespace cubemanip {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double dt = 1e-3;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  bool floor_enabled = true;
  double floor_stiffness = 1500.0;  // N/m per cube corner
  double floor_damping = 4.0;       // N s/m per cube corner
  double tip_stiffness = 2000.0;
  double tip_damping = 5.0;
  double tip_radius = 0.0175;
  double arena_radius = 0.19;
  // Fingertip-floor contacts are frictionless.
  double tip_floor_stiffness = 2000.0;
  double tip_floor_damping = 5.0;
  double max_cube_speed = 10.0;        // m/s
  double max_cube_angular_speed = 400.0;  // rad/s
  double max_joint_speed = 200.0;      // rad/s

  void validate() const {
    if (!(dt > 0.0 && dt <= 0.01)) throw std::invalid_argument("SimConfig: dt must lie in (0, 0.01]");
    if (!gravity.allFinite()) throw std::invalid_argument("SimConfig: non-finite gravity");
    if (!(floor_stiffness > 0.0) || !(tip_stiffness > 0.0) || !(tip_floor_stiffness > 0.0)) {
      throw std::invalid_argument("SimConfig: stiffnesses must be > 0");
    }
    if (!(floor_damping >= 0.0) || !(tip_damping >= 0.0) || !(tip_floor_damping >= 0.0)) {
      throw std::invalid_argument("SimConfig: damping must be >= 0");
    }
    if (!(tip_radius > 0.0)) throw std::invalid_argument("SimConfig: tip_radius must be > 0");
    if (!(arena_radius > 0.0)) throw std::invalid_argument("SimConfig: arena_radius must be > 0");
  }
};

struct JointState {
  JointVector q = JointVector::Zero();
  JointVector qdot = JointVector::Zero();
};

// Friction anchors persist between steps; nullopt means "not in contact".
struct ContactMemory {
  std::array<std::optional<Vec3>, kNumFingers> tip_anchor_local;
  std::array<std::optional<Vec3>, 8> corner_anchor_world;
};

struct WorldState {
  Pose cube_pose;
  Vec3 cube_linvel = Vec3::Zero();
  Vec3 cube_angvel = Vec3::Zero();  // world frame
  JointState joints;
  double time = 0.0;
  ContactMemory contacts;
};

struct TipContact {
  bool in_contact = false;
  double penetration = 0.0;       // > 0 when the sphere overlaps the cube
  Vec3 point = Vec3::Zero();      // closest cube-surface point, world
  Vec3 normal = Vec3::UnitZ();    // outward cube normal, world
  Vec3 force = Vec3::Zero();      // force applied by the tip on the cube
};

// Closest point of an axis-aligned box (half extent `half`) to `p`, with the
// outward normal and signed distance (negative inside).
struct BoxProjection {
  Vec3 point;
  Vec3 normal;
  double distance;
};

inline BoxProjection project_to_box(const Vec3& p, double half) {
  const Vec3 clamped = p.cwiseMax(-half).cwiseMin(half);
  const Vec3 d = p - clamped;
  const double dist = d.norm();
  if (dist > 1e-12) return {clamped, d / dist, dist};
  // Inside: push out through the nearest face.
  int axis = 0;
  double best = half - std::abs(p[0]);
  for (int i = 1; i < 3; ++i) {
    const double gap = half - std::abs(p[i]);
    if (gap < best) {
      best = gap;
      axis = i;
    }
  }
  Vec3 n = Vec3::Zero();
  n[axis] = p[axis] >= 0.0 ? 1.0 : -1.0;
  Vec3 surf = p;
  surf[axis] = n[axis] * half;
  return {surf, n, -best};
}

class Simulator {
 public:
  Simulator(SimConfig cfg, CubeGeometry geom, RobotConfig robot)
      : cfg_(std::move(cfg)), geom_(std::move(geom)), robot_(std::move(robot)), fingers_(make_fingers(robot_)) {
    cfg_.validate();
    geom_.validate();
  }

  const SimConfig& config() const { return cfg_; }
  const CubeGeometry& cube() const { return geom_; }
  const RobotConfig& robot() const { return robot_; }
  const std::array<FingerModel, kNumFingers>& fingers() const { return fingers_; }

  // Cube resting flat on the floor at (x, y) with the given yaw; joints home.
  WorldState initial_state(double x, double y, double yaw) const {
    WorldState s;
    const double sag = geom_.mass * std::abs(cfg_.gravity.z()) / (4.0 * cfg_.floor_stiffness);
    s.cube_pose.position = Vec3(x, y, geom_.half_edge() - (cfg_.floor_enabled ? sag : 0.0));
    s.cube_pose.orientation = UnitQuat::from_yaw(yaw);
    for (int f = 0; f < kNumFingers; ++f) s.joints.q.segment<3>(3 * f) = robot_.home;
    return s;
  }

  std::array<Vec3, kNumFingers> tip_positions(const JointState& js) const {
    std::array<Vec3, kNumFingers> tips;
    for (int f = 0; f < kNumFingers; ++f) tips[f] = fk_tip(fingers_[f], finger_slice(js.q, f));
    return tips;
  }

  JointVector clamp_torques(const JointVector& tau) const {
    return tau.cwiseMax(-robot_.torque_limit).cwiseMin(robot_.torque_limit);
  }

  // Per-tip contact geometry and the force each tip currently applies.
  std::array<TipContact, kNumFingers> tip_contact_report(const WorldState& s) const {
    std::array<TipContact, kNumFingers> out;
    ContactMemory scratch = s.contacts;
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerFrames fr = finger_frames(fingers_[f], finger_slice(s.joints.q, f));
      const Vec3 tip_vel = point_jacobian(fr, fr.tip, 2) * finger_slice(s.joints.qdot, f);
      out[f] = tip_cube_contact(s, fr.tip, tip_vel, scratch.tip_anchor_local[f]);
    }
    return out;
  }

  // Number of fingers whose tip lies within `slack` of the cube surface.
  int tips_touching(const WorldState& s, double slack) const {
    int n = 0;
    for (const Vec3& tip : tip_positions(s.joints)) {
      const BoxProjection bp = project_to_box(inverse_transform_point(s.cube_pose, tip), geom_.half_edge());
      if (bp.distance - cfg_.tip_radius <= slack) ++n;
    }
    return n;
  }

  WorldState step(const WorldState& s, const JointVector& torques) const {
    if (!torques.allFinite() || !s.joints.q.allFinite() || !s.joints.qdot.allFinite() ||
        !s.cube_pose.position.allFinite() || !s.cube_linvel.allFinite() || !s.cube_angvel.allFinite() ||
        !s.cube_pose.orientation.is_finite()) {
      throw SimulationError("step: non-finite input");
    }
    const double dt = cfg_.dt;
    const JointVector tau_cmd = clamp_torques(torques);
    WorldState next = s;

    Vec3 cube_force = Vec3::Zero();
    Vec3 cube_torque = Vec3::Zero();
    const Vec3 com = s.cube_pose.position;

    // Fingertips against the cube and the floor.
    std::array<FingerFrames, kNumFingers> frames;
    std::array<Mat3, kNumFingers> jac;
    std::array<Vec3, kNumFingers> tip_force;  // force on each tip
    for (int f = 0; f < kNumFingers; ++f) {
      frames[f] = finger_frames(fingers_[f], finger_slice(s.joints.q, f));
      jac[f] = point_jacobian(frames[f], frames[f].tip, 2);
      const Vec3 tip = frames[f].tip;
      const Vec3 tip_vel = jac[f] * finger_slice(s.joints.qdot, f);
      const TipContact c = tip_cube_contact(s, tip, tip_vel, next.contacts.tip_anchor_local[f]);
      tip_force[f] = -c.force;
      if (c.in_contact) {
        cube_force += c.force;
        cube_torque += (c.point - com).cross(c.force);
      }
      if (cfg_.floor_enabled) {
        const double pen = cfg_.tip_radius - tip.z();
        if (pen > 0.0) {
          const double vz = (jac[f] * finger_slice(s.joints.qdot, f)).z();
          tip_force[f].z() += std::max(0.0, cfg_.tip_floor_stiffness * pen - cfg_.tip_floor_damping * vz);
        }
      }
    }

    // Cube corners against the floor.
    if (cfg_.floor_enabled) {
      const double h = geom_.half_edge();
      const double mu = geom_.friction_coeff;
      for (int k = 0; k < 8; ++k) {
        const Vec3 local((k & 1) ? h : -h, (k & 2) ? h : -h, (k & 4) ? h : -h);
        const Vec3 p = transform_point(s.cube_pose, local);
        auto& anchor = next.contacts.corner_anchor_world[k];
        if (p.z() >= 0.0) {
          anchor.reset();
          continue;
        }
        const Vec3 v = s.cube_linvel + s.cube_angvel.cross(p - com);
        const double fn = std::max(0.0, -cfg_.floor_stiffness * p.z() - cfg_.floor_damping * v.z());
        if (!anchor) anchor = Vec3(p.x(), p.y(), 0.0);
        Vec3 disp = p - *anchor;
        disp.z() = 0.0;
        Vec3 vt = v;
        vt.z() = 0.0;
        Vec3 ft = -cfg_.floor_stiffness * disp - cfg_.floor_damping * vt;
        const double limit = mu * fn;
        if (ft.norm() > limit) {
          ft *= limit / ft.norm();
          Vec3 a = p + ft / cfg_.floor_stiffness;
          a.z() = 0.0;
          anchor = a;
        }
        const Vec3 force = ft + Vec3(0.0, 0.0, fn);
        cube_force += force;
        cube_torque += (p - com).cross(force);
      }
    }

    // Cube: semi-implicit Euler, with the constant gravity term integrated
    // exactly so free flight follows the closed-form parabola.
    const Vec3 g = cfg_.gravity;
    next.cube_linvel = s.cube_linvel + dt * (cube_force / geom_.mass + g);
    next.cube_pose.position = s.cube_pose.position + dt * next.cube_linvel - 0.5 * dt * dt * g;
    const Mat3 R = s.cube_pose.orientation.matrix();
    const Mat3 I_world = R * geom_.inertia_diag.asDiagonal() * R.transpose();
    const Vec3 w = s.cube_angvel;
    const Vec3 wdot = I_world.ldlt().solve(cube_torque - w.cross(I_world * w));
    next.cube_angvel = w + dt * wdot;
    next.cube_pose.orientation = UnitQuat::exp(dt * next.cube_angvel) * s.cube_pose.orientation;

    // Fingers: M(q) qdd = tau - g(q) - b qdot + J^T f_tip.
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerModel& m = fingers_[f];
      const FingerJoints q = finger_slice(s.joints.q, f);
      const FingerJoints qd = finger_slice(s.joints.qdot, f);
      const FingerJoints rhs = tau_cmd.segment<3>(3 * f) - gravity_torque(m, q, g) - robot_.joint_damping * qd +
                               jac[f].transpose() * tip_force[f];
      const FingerJoints qdd = mass_matrix(m, q).ldlt().solve(rhs);
      FingerJoints qd_new = qd + dt * qdd;
      FingerJoints q_new = q + dt * qd_new;
      for (int j = 0; j < 3; ++j) {
        if (q_new[j] < m.joint_lower[j]) {
          q_new[j] = m.joint_lower[j];
          qd_new[j] = std::max(0.0, qd_new[j]);
        } else if (q_new[j] > m.joint_upper[j]) {
          q_new[j] = m.joint_upper[j];
          qd_new[j] = std::min(0.0, qd_new[j]);
        }
      }
      next.joints.q.segment<3>(3 * f) = q_new;
      next.joints.qdot.segment<3>(3 * f) = qd_new;
    }
    next.time = s.time + dt;

    if (!(next.cube_linvel.norm() <= cfg_.max_cube_speed) ||
        !(next.cube_angvel.norm() <= cfg_.max_cube_angular_speed) ||
        !(next.joints.qdot.cwiseAbs().maxCoeff() <= cfg_.max_joint_speed) ||
        !next.cube_pose.position.allFinite()) {
      throw SimulationError("step: simulation diverged at t=" + std::to_string(next.time));
    }
    return next;
  }

  // Kinetic plus gravitational energy of cube and fingers, plus the energy
  // stored in every penalty spring.
  double mechanical_energy(const WorldState& s) const {
    const Vec3 g = cfg_.gravity;
    double e = 0.5 * geom_.mass * s.cube_linvel.squaredNorm() - geom_.mass * g.dot(s.cube_pose.position);
    const Mat3 R = s.cube_pose.orientation.matrix();
    const Mat3 I_world = R * geom_.inertia_diag.asDiagonal() * R.transpose();
    e += 0.5 * s.cube_angvel.dot(I_world * s.cube_angvel);
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerModel& m = fingers_[f];
      const FingerJoints q = finger_slice(s.joints.q, f);
      const FingerJoints qd = finger_slice(s.joints.qdot, f);
      e += 0.5 * qd.dot(mass_matrix(m, q) * qd);
      const FingerFrames fr = finger_frames(m, q);
      for (int k = 0; k < 3; ++k) e -= m.link_masses[k] * g.dot(fr.link_com[k]);
      const BoxProjection bp =
          project_to_box(inverse_transform_point(s.cube_pose, fr.tip), geom_.half_edge());
      const double pen = cfg_.tip_radius - bp.distance;
      if (pen > 0.0) {
        e += 0.5 * cfg_.tip_stiffness * pen * pen;
        if (s.contacts.tip_anchor_local[f]) {
          const Vec3 n = s.cube_pose.orientation.rotate(bp.normal);
          const Vec3 disp = fr.tip - cfg_.tip_radius * n - transform_point(s.cube_pose, *s.contacts.tip_anchor_local[f]);
          e += 0.5 * cfg_.tip_stiffness * (disp - disp.dot(n) * n).squaredNorm();
        }
      }
      if (cfg_.floor_enabled && fr.tip.z() < cfg_.tip_radius) {
        const double p = cfg_.tip_radius - fr.tip.z();
        e += 0.5 * cfg_.tip_floor_stiffness * p * p;
      }
    }
    if (cfg_.floor_enabled) {
      const double h = geom_.half_edge();
      for (int k = 0; k < 8; ++k) {
        const Vec3 local((k & 1) ? h : -h, (k & 2) ? h : -h, (k & 4) ? h : -h);
        const Vec3 p = transform_point(s.cube_pose, local);
        if (p.z() >= 0.0) continue;
        e += 0.5 * cfg_.floor_stiffness * p.z() * p.z();
        if (s.contacts.corner_anchor_world[k]) {
          Vec3 d = p - *s.contacts.corner_anchor_world[k];
          d.z() = 0.0;
          e += 0.5 * cfg_.floor_stiffness * d.squaredNorm();
        }
      }
    }
    return e;
  }

 private:
  // Evaluates one tip against the cube and updates that tip's friction anchor.
  TipContact tip_cube_contact(const WorldState& s, const Vec3& tip, const Vec3& tip_vel,
                              std::optional<Vec3>& anchor_local) const {
    TipContact c;
    const Vec3 local = inverse_transform_point(s.cube_pose, tip);
    const BoxProjection bp = project_to_box(local, geom_.half_edge());
    c.normal = s.cube_pose.orientation.rotate(bp.normal);
    c.point = transform_point(s.cube_pose, bp.point);
    c.penetration = cfg_.tip_radius - bp.distance;
    if (c.penetration <= 0.0) {
      anchor_local.reset();
      return c;
    }
    c.in_contact = true;
    const Vec3 p = tip - cfg_.tip_radius * c.normal;
    const Vec3 v_rel = tip_vel - (s.cube_linvel + s.cube_angvel.cross(p - s.cube_pose.position));
    const double approach = -v_rel.dot(c.normal);
    const double fn = std::max(0.0, cfg_.tip_stiffness * c.penetration + cfg_.tip_damping * approach);
    if (!anchor_local) anchor_local = inverse_transform_point(s.cube_pose, p);
    const Vec3 anchor = transform_point(s.cube_pose, *anchor_local);
    Vec3 disp = p - anchor;
    disp -= disp.dot(c.normal) * c.normal;
    const Vec3 vt = v_rel - v_rel.dot(c.normal) * c.normal;
    Vec3 ft = cfg_.tip_stiffness * disp + cfg_.tip_damping * vt;
    const double limit = geom_.friction_coeff * fn;
    const double mag = ft.norm();
    if (mag > limit) {
      ft *= limit / mag;
      anchor_local = inverse_transform_point(s.cube_pose, p - ft / cfg_.tip_stiffness);
    }
    c.force = -fn * c.normal + ft;
    return c;
  }

  SimConfig cfg_;
  CubeGeometry geom_;
  RobotConfig robot_;
  std::array<FingerModel, kNumFingers> fingers_;
};

// Grasp is lost when fewer than two of the expected fingers still touch the
// cube, or the cube sits below `min_height` while it should be lifted.
inline bool is_grasp_lost(const Simulator& sim, const WorldState& s, std::span<const ContactSpec> expected,
                          std::optional<double> min_height = std::nullopt, double slack = 0.004) {
  const auto tips = sim.tip_positions(s.joints);
  int touching = 0;
  const int n = std::min<int>(static_cast<int>(expected.size()), kNumFingers);
  for (int f = 0; f < n; ++f) {
    const BoxProjection bp =
        project_to_box(inverse_transform_point(s.cube_pose, tips[f]), sim.cube().half_edge());
    if (bp.distance - sim.config().tip_radius <= slack) ++touching;
  }
  if (touching < 2) return true;
  return min_height && s.cube_pose.position.z() < *min_height;
}

}  // namespace cubemanip
