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

// 3D vectors, unit quaternions, poses and the cube's face geometry.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cubemanip {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

// Unit quaternion stored as (w, x, y, z). Every constructor and product
// renormalizes, so the norm stays within 1e-9 of one.
class UnitQuat {
 public:
  UnitQuat() = default;
  UnitQuat(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {
    normalize();
  }

  static UnitQuat identity() { return {}; }

  // Rotation of `angle` radians about `axis` (need not be normalized).
  static UnitQuat from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (!(n > 0.0) || !std::isfinite(angle)) {
      throw std::invalid_argument("UnitQuat::from_axis_angle: degenerate axis or angle");
    }
    const Vec3 a = axis / n;
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), s * a.x(), s * a.y(), s * a.z()};
  }

  // Exponential map of a rotation vector (axis * angle).
  static UnitQuat exp(const Vec3& rotvec) {
    const double angle = rotvec.norm();
    if (angle < 1e-12) {
      return {1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z()};
    }
    return from_axis_angle(rotvec, angle);
  }

  static UnitQuat from_yaw(double yaw) { return from_axis_angle(Vec3::UnitZ(), yaw); }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  Vec3 vec() const { return {x_, y_, z_}; }

  double norm() const { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

  UnitQuat conjugate() const {
    UnitQuat q;
    q.w_ = w_;
    q.x_ = -x_;
    q.y_ = -y_;
    q.z_ = -z_;
    return q;
  }

  UnitQuat operator*(const UnitQuat& o) const {
    return {w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
            w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
            w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
            w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_};
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + w_ * t + u.cross(t);
  }

  Vec3 inverse_rotate(const Vec3& v) const { return conjugate().rotate(v); }

  Mat3 matrix() const {
    Mat3 r;
    r << 1 - 2 * (y_ * y_ + z_ * z_), 2 * (x_ * y_ - w_ * z_), 2 * (x_ * z_ + w_ * y_),  //
        2 * (x_ * y_ + w_ * z_), 1 - 2 * (x_ * x_ + z_ * z_), 2 * (y_ * z_ - w_ * x_),    //
        2 * (x_ * z_ - w_ * y_), 2 * (y_ * z_ + w_ * x_), 1 - 2 * (x_ * x_ + y_ * y_);
    return r;
  }

  // Rotation vector of this quaternion, angle in [0, pi].
  Vec3 log() const {
    const double sign = w_ < 0.0 ? -1.0 : 1.0;
    const Vec3 u = sign * vec();
    const double s = u.norm();
    if (s < 1e-12) return 2.0 * u;
    const double angle = 2.0 * std::atan2(s, sign * w_);
    return u * (angle / s);
  }

  bool is_finite() const {
    return std::isfinite(w_) && std::isfinite(x_) && std::isfinite(y_) && std::isfinite(z_);
  }

 private:
  void normalize() {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument("UnitQuat: zero or non-finite quaternion");
    }
    w_ /= n;
    x_ /= n;
    y_ /= n;
    z_ /= n;
  }

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  UnitQuat orientation;

  static Pose identity() { return {}; }

  Pose inverse() const {
    const UnitQuat inv = orientation.conjugate();
    return {-inv.rotate(position), inv};
  }

  Pose operator*(const Pose& o) const {
    return {position + orientation.rotate(o.position), orientation * o.orientation};
  }
};

inline Vec3 transform_point(const Pose& pose, const Vec3& local) {
  return pose.orientation.rotate(local) + pose.position;
}

inline Vec3 inverse_transform_point(const Pose& pose, const Vec3& world) {
  return pose.orientation.inverse_rotate(world - pose.position);
}

struct CubeGeometry {
  double edge_length = 0.065;
  double mass = 0.094;
  Vec3 inertia_diag = Vec3::Constant(0.094 * 0.065 * 0.065 / 6.0);
  double friction_coeff = 0.8;

  double half_edge() const { return 0.5 * edge_length; }

  // Solid-cube inertia for the given edge and mass.
  static CubeGeometry solid(double edge, double mass, double friction) {
    CubeGeometry g;
    g.edge_length = edge;
    g.mass = mass;
    g.inertia_diag = Vec3::Constant(mass * edge * edge / 6.0);
    g.friction_coeff = friction;
    g.validate();
    return g;
  }

  void validate() const {
    if (!(edge_length > 0.0) || !std::isfinite(edge_length)) {
      throw std::invalid_argument("CubeGeometry: edge_length must be > 0");
    }
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("CubeGeometry: mass must be > 0");
    }
    if (!(inertia_diag.array() > 0.0).all() || !inertia_diag.allFinite()) {
      throw std::invalid_argument("CubeGeometry: inertia components must be > 0");
    }
    if (!(friction_coeff > 0.0 && friction_coeff <= 2.0)) {
      throw std::invalid_argument("CubeGeometry: friction_coeff must lie in (0, 2]");
    }
  }
};

enum class FaceId : int { kPosX = 0, kNegX, kPosY, kNegY, kPosZ, kNegZ };

inline constexpr std::array<FaceId, 6> kAllFaces = {FaceId::kPosX, FaceId::kNegX, FaceId::kPosY,
                                                    FaceId::kNegY, FaceId::kPosZ, FaceId::kNegZ};

inline constexpr std::string_view face_name(FaceId f) {
  constexpr std::array<std::string_view, 6> names = {"+X", "-X", "+Y", "-Y", "+Z", "-Z"};
  return names[static_cast<int>(f)];
}

inline Vec3 face_normal_local(FaceId f) {
  switch (f) {
    case FaceId::kPosX: return Vec3::UnitX();
    case FaceId::kNegX: return -Vec3::UnitX();
    case FaceId::kPosY: return Vec3::UnitY();
    case FaceId::kNegY: return -Vec3::UnitY();
    case FaceId::kPosZ: return Vec3::UnitZ();
    case FaceId::kNegZ: return -Vec3::UnitZ();
  }
  throw std::invalid_argument("face_normal_local: bad face id");
}

// In-face axes (u, v). Side faces use the cube's z axis as v, so v is the
// contact height on a cube resting flat.
inline std::pair<Vec3, Vec3> face_tangents_local(FaceId f) {
  switch (f) {
    case FaceId::kPosX:
    case FaceId::kNegX: return {Vec3::UnitY(), Vec3::UnitZ()};
    case FaceId::kPosY:
    case FaceId::kNegY: return {Vec3::UnitX(), Vec3::UnitZ()};
    case FaceId::kPosZ:
    case FaceId::kNegZ: return {Vec3::UnitX(), Vec3::UnitY()};
  }
  throw std::invalid_argument("face_tangents_local: bad face id");
}

inline Vec3 face_normal_world(const Pose& pose, FaceId face) {
  return pose.orientation.rotate(face_normal_local(face));
}

// Fraction of the face (measured from the center, per axis) that is
// available for contacts.
inline constexpr double kContactRegionFraction = 0.6;

struct ContactSpec {
  FaceId face = FaceId::kPosX;
  double u = 0.0;
  double v = 0.0;

  void validate() const {
    if (!std::isfinite(u) || !std::isfinite(v)) {
      throw std::invalid_argument("ContactSpec: non-finite face coordinates");
    }
    if (std::abs(u) > 1.0 || std::abs(v) > 1.0) {
      throw std::invalid_argument("ContactSpec: face coordinates outside [-1, 1]");
    }
  }
};

// Point on `spec.face` offset from the face center by (u, v) scaled to the
// central contact region: uv = +-1 lands on the boundary of that region.
inline Vec3 contact_point_local(const CubeGeometry& geom, const ContactSpec& spec) {
  spec.validate();
  const double half = geom.half_edge();
  const double scale = 0.5 * kContactRegionFraction * geom.edge_length;
  const auto [tu, tv] = face_tangents_local(spec.face);
  return half * face_normal_local(spec.face) + scale * (spec.u * tu + spec.v * tv);
}

}  // namespace cubemanip
