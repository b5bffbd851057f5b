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

// Kinematics of a 3-DoF finger and the three-finger rig.
//
// Chain, all in the base frame of the finger:
//   joint 0 rotates about axes[0] at the base origin,
//   a horizontal hip offset of link_lengths[0] along x leads to joint 1,
//   the upper link of link_lengths[1] along x leads to joint 2,
//   the lower link of link_lengths[2] hangs along -z (at q = 0) to the tip.
// Defaults use axes (z, y, y): a yaw joint followed by two pitch joints.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "cubemanip/geom.hpp"

namespace cubemanip {

inline constexpr int kNumFingers = 3;
inline constexpr int kJointsPerFinger = 3;
inline constexpr int kNumJoints = kNumFingers * kJointsPerFinger;

using FingerJoints = Eigen::Vector3d;
using JointVector = Eigen::Matrix<double, kNumJoints, 1>;

struct FingerModel {
  Pose base_pose;
  std::array<double, 3> link_lengths = {0.04, 0.16, 0.16};
  FingerJoints joint_lower = FingerJoints(-1.3, -0.8, -1.55);
  FingerJoints joint_upper = FingerJoints(1.3, 1.7, 1.5);
  std::array<Vec3, 3> axes = {Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitY()};
  // Point masses at link midpoints (hip, upper, lower) used for gravity
  // compensation and the joint-space inertia.
  std::array<double, 3> link_masses = {0.0, 0.2, 0.2};
  double armature = 0.003;  // kg m^2 added to each joint inertia

  void validate() const {
    for (int i = 0; i < 3; ++i) {
      if (!(link_lengths[i] >= 0.0) || (i > 0 && !(link_lengths[i] > 0.0))) {
        throw std::invalid_argument("FingerModel: link lengths must be > 0");
      }
      if (!(joint_lower[i] < joint_upper[i])) {
        throw std::invalid_argument("FingerModel: joint_lower must be < joint_upper");
      }
      if (std::abs(axes[i].norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("FingerModel: joint axes must be unit vectors");
      }
      if (!(link_masses[i] >= 0.0)) throw std::invalid_argument("FingerModel: negative link mass");
    }
    if (!(armature > 0.0)) throw std::invalid_argument("FingerModel: armature must be > 0");
  }

  double max_reach() const { return link_lengths[0] + link_lengths[1] + link_lengths[2]; }

  FingerJoints clamp(const FingerJoints& q) const {
    return q.cwiseMax(joint_lower).cwiseMin(joint_upper);
  }
};

// World-frame quantities of one finger configuration.
struct FingerFrames {
  std::array<Vec3, 3> joint_origin;
  std::array<Vec3, 3> joint_axis;
  std::array<Vec3, 3> link_com;
  Vec3 tip = Vec3::Zero();
};

inline FingerFrames finger_frames(const FingerModel& m, const FingerJoints& q) {
  FingerFrames f;
  const auto& l = m.link_lengths;
  Pose frame = m.base_pose;
  f.joint_origin[0] = frame.position;
  f.joint_axis[0] = frame.orientation.rotate(m.axes[0]);
  frame.orientation = frame.orientation * UnitQuat::from_axis_angle(m.axes[0], q[0]);
  f.link_com[0] = transform_point(frame, Vec3(0.5 * l[0], 0, 0));

  frame.position = transform_point(frame, Vec3(l[0], 0, 0));
  f.joint_origin[1] = frame.position;
  f.joint_axis[1] = frame.orientation.rotate(m.axes[1]);
  frame.orientation = frame.orientation * UnitQuat::from_axis_angle(m.axes[1], q[1]);
  f.link_com[1] = transform_point(frame, Vec3(0.5 * l[1], 0, 0));

  frame.position = transform_point(frame, Vec3(l[1], 0, 0));
  f.joint_origin[2] = frame.position;
  f.joint_axis[2] = frame.orientation.rotate(m.axes[2]);
  frame.orientation = frame.orientation * UnitQuat::from_axis_angle(m.axes[2], q[2]);
  f.link_com[2] = transform_point(frame, Vec3(0, 0, -0.5 * l[2]));
  f.tip = transform_point(frame, Vec3(0, 0, -l[2]));
  return f;
}

inline Vec3 fk_tip(const FingerModel& m, const FingerJoints& q) { return finger_frames(m, q).tip; }

// Jacobian of a point rigidly attached after joint `last_joint`.
inline Mat3 point_jacobian(const FingerFrames& f, const Vec3& p, int last_joint) {
  Mat3 J = Mat3::Zero();
  for (int i = 0; i <= last_joint; ++i) {
    J.col(i) = f.joint_axis[i].cross(p - f.joint_origin[i]);
  }
  return J;
}

inline Mat3 tip_jacobian(const FingerModel& m, const FingerJoints& q) {
  const FingerFrames f = finger_frames(m, q);
  return point_jacobian(f, f.tip, 2);
}

// Torque that holds the finger still against gravity (point-mass links).
inline FingerJoints gravity_torque(const FingerModel& m, const FingerJoints& q, const Vec3& gravity) {
  const FingerFrames f = finger_frames(m, q);
  FingerJoints tau = FingerJoints::Zero();
  for (int k = 0; k < 3; ++k) {
    if (m.link_masses[k] == 0.0) continue;
    tau -= point_jacobian(f, f.link_com[k], k).transpose() * (m.link_masses[k] * gravity);
  }
  return tau;
}

// Joint-space inertia of the point-mass chain plus armature.
inline Mat3 mass_matrix(const FingerModel& m, const FingerJoints& q) {
  const FingerFrames f = finger_frames(m, q);
  Mat3 M = m.armature * Mat3::Identity();
  for (int k = 0; k < 3; ++k) {
    if (m.link_masses[k] == 0.0) continue;
    const Mat3 J = point_jacobian(f, f.link_com[k], k);
    M += m.link_masses[k] * J.transpose() * J;
  }
  return M;
}

struct IkOptions {
  double damping = 1e-3;
  double max_step = 0.2;  // rad per iteration, per joint
  int max_iterations = 200;
  double tolerance = 1e-7;  // stop early below this tip error (m)
  double accept = 1e-4;     // converged if the final error is below this (m)
};

enum class IkStatus { kConverged, kNotConverged, kUnreachable };

struct IkResult {
  FingerJoints q = FingerJoints::Zero();
  double residual = 0.0;
  int iterations = 0;
  IkStatus status = IkStatus::kNotConverged;

  bool ok() const { return status == IkStatus::kConverged; }
};

namespace kin_detail {

// Damped least squares from one seed; `q` is the best iterate seen.
inline IkResult ik_dls(const FingerModel& m, const Vec3& target, const FingerJoints& seed, const IkOptions& opt) {
  IkResult best;
  FingerJoints q = m.clamp(seed);
  best.q = q;
  best.residual = (fk_tip(m, q) - target).norm();
  int it = 0;
  for (; it < opt.max_iterations && best.residual > opt.tolerance; ++it) {
    const FingerFrames f = finger_frames(m, q);
    const Vec3 err = target - f.tip;
    const Mat3 J = point_jacobian(f, f.tip, 2);
    const Mat3 JJt = J * J.transpose() + opt.damping * Mat3::Identity();
    FingerJoints dq = J.transpose() * JJt.ldlt().solve(err);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > opt.max_step) dq *= opt.max_step / biggest;
    q = m.clamp(q + dq);
    const double r = (fk_tip(m, q) - target).norm();
    if (r < best.residual) {
      best.residual = r;
      best.q = q;
    }
  }
  best.iterations = it;
  return best;
}

}  // namespace kin_detail

// Damped least squares on the tip position; every iterate is clamped to the
// joint limits. If the seed stalls, restarts put the hip at either angle
// that aligns the finger plane with the target. On failure `q` holds the
// best iterate seen.
inline IkResult ik_tip(const FingerModel& m, const Vec3& target, const FingerJoints& seed,
                       const IkOptions& opt = {}) {
  IkResult best;
  best.q = m.clamp(seed);
  if (!all_finite(target) || !seed.allFinite()) {
    best.status = IkStatus::kUnreachable;
    best.residual = std::numeric_limits<double>::infinity();
    return best;
  }
  if ((target - m.base_pose.position).norm() > m.max_reach()) {
    best.status = IkStatus::kUnreachable;
    best.residual = (fk_tip(m, best.q) - target).norm();
    return best;
  }
  best = kin_detail::ik_dls(m, target, seed, opt);
  if (best.residual > opt.accept) {
    const Vec3 local = inverse_transform_point(m.base_pose, target);
    const double hip = std::atan2(local.y(), local.x());
    const double flipped = hip > 0.0 ? hip - std::numbers::pi : hip + std::numbers::pi;
    const FingerJoints mid = 0.5 * (m.joint_lower + m.joint_upper);
    const std::array<FingerJoints, 4> restarts = {FingerJoints(hip, seed[1], seed[2]), FingerJoints(hip, mid[1], mid[2]),
                                                  FingerJoints(flipped, seed[1], seed[2]),
                                                  FingerJoints(flipped, mid[1], mid[2])};
    for (const FingerJoints& s : restarts) {
      if (best.residual <= opt.accept) break;
      const IkResult r = kin_detail::ik_dls(m, target, s, opt);
      const int used = best.iterations + r.iterations;
      if (r.residual < best.residual) best = r;
      best.iterations = used;
    }
  }
  best.status = best.residual <= opt.accept ? IkStatus::kConverged : IkStatus::kNotConverged;
  return best;
}

struct RobotConfig {
  double base_radius = 0.20;
  double base_height = 0.25;
  std::array<double, 3> link_lengths = {0.04, 0.16, 0.16};
  double link_mass = 0.2;
  double armature = 0.003;
  double joint_damping = 0.02;  // N m s / rad
  double torque_limit = 1.0;    // N m
  FingerJoints joint_lower = FingerJoints(-1.3, -0.8, -1.55);
  FingerJoints joint_upper = FingerJoints(1.3, 1.7, 1.5);
  // Tips parked at radius ~0.14 m, height ~0.2 m.
  FingerJoints home = FingerJoints(0.0, -0.2, 1.2);
};

// Bases on a circle at 0, 120 and 240 degrees, each finger's x axis
// pointing at the arena center.
inline std::array<FingerModel, kNumFingers> make_fingers(const RobotConfig& rc) {
  std::array<FingerModel, kNumFingers> out;
  for (int i = 0; i < kNumFingers; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / kNumFingers;
    FingerModel m;
    m.base_pose.position = Vec3(rc.base_radius * std::cos(phi), rc.base_radius * std::sin(phi), rc.base_height);
    m.base_pose.orientation = UnitQuat::from_yaw(phi + std::numbers::pi);
    m.link_lengths = rc.link_lengths;
    m.link_masses = {0.0, rc.link_mass, rc.link_mass};
    m.armature = rc.armature;
    m.joint_lower = rc.joint_lower;
    m.joint_upper = rc.joint_upper;
    m.validate();
    out[i] = m;
  }
  return out;
}

inline FingerJoints finger_slice(const JointVector& q, int finger) {
  return q.segment<3>(kJointsPerFinger * finger);
}

}  // namespace cubemanip
