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
#include <numbers>
#include <random>

#include "cubemanip/geom.hpp"

namespace cubemanip {
namespace {

// Rodrigues' formula, written out independently of UnitQuat.
Mat3 rodrigues(const Vec3& axis, double angle) {
  const Vec3 k = axis.normalized();
  Mat3 K;
  K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * K * K;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> N;
  return Vec3(N(rng), N(rng), N(rng)).normalized();
}

TEST(UnitQuat, MatchesRodriguesRotation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> A(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = random_unit(rng);
    const double angle = A(rng);
    const UnitQuat q = UnitQuat::from_axis_angle(axis, angle);
    const Mat3 R = rodrigues(axis, angle);
    EXPECT_LT((q.matrix() - R).cwiseAbs().maxCoeff(), 1e-12);
    const Vec3 v = random_unit(rng) * 0.3;
    EXPECT_LT((q.rotate(v) - R * v).norm(), 1e-12);
    EXPECT_LT((q.inverse_rotate(R * v) - v).norm(), 1e-12);
  }
}

TEST(UnitQuat, ProductComposesRotations) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const UnitQuat a = UnitQuat::from_axis_angle(random_unit(rng), 0.7 * i);
    const UnitQuat b = UnitQuat::from_axis_angle(random_unit(rng), -0.3 * i);
    EXPECT_LT(((a * b).matrix() - a.matrix() * b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR((a * b).norm(), 1.0, 1e-12);
  }
}

TEST(UnitQuat, ExpAndLogRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> A(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 r = random_unit(rng) * A(rng);
    EXPECT_LT((UnitQuat::exp(r).log() - r).norm(), 1e-10);
  }
  EXPECT_LT(UnitQuat::exp(Vec3::Zero()).log().norm(), 1e-15);
  EXPECT_LT(UnitQuat::exp(Vec3(1e-9, 0, 0)).log().x() - 1e-9, 1e-18);
}

TEST(UnitQuat, ConstructorNormalizesAndRejectsZero) {
  const UnitQuat q(2.0, 0.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(q.w(), 1.0);
  EXPECT_THROW(UnitQuat(0.0, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Pose, InverseAndComposition) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Pose a{random_unit(rng), UnitQuat::from_axis_angle(random_unit(rng), 0.1 * i)};
    const Pose b{random_unit(rng) * 0.2, UnitQuat::from_axis_angle(random_unit(rng), 0.05 * i)};
    const Vec3 p = random_unit(rng);
    EXPECT_LT((transform_point(a * b, p) - transform_point(a, transform_point(b, p))).norm(), 1e-12);
    EXPECT_LT((transform_point(a.inverse(), transform_point(a, p)) - p).norm(), 1e-12);
    EXPECT_LT((inverse_transform_point(a, transform_point(a, p)) - p).norm(), 1e-12);
  }
}

TEST(CubeGeometry, SolidInertiaAndValidation) {
  const CubeGeometry g = CubeGeometry::solid(0.1, 0.6, 0.5);
  EXPECT_NEAR(g.inertia_diag.x(), 0.6 * 0.01 / 6.0, 1e-15);
  EXPECT_THROW(CubeGeometry::solid(0.0, 0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(CubeGeometry::solid(0.1, -1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(CubeGeometry::solid(0.1, 0.1, 0.0), std::invalid_argument);
}

TEST(Faces, NormalsAndTangentsFormRightAngles) {
  for (FaceId f : kAllFaces) {
    const Vec3 n = face_normal_local(f);
    const auto [u, v] = face_tangents_local(f);
    EXPECT_DOUBLE_EQ(n.norm(), 1.0);
    EXPECT_DOUBLE_EQ(n.dot(u), 0.0);
    EXPECT_DOUBLE_EQ(n.dot(v), 0.0);
    EXPECT_DOUBLE_EQ(u.dot(v), 0.0);
  }
  EXPECT_EQ(face_name(FaceId::kNegY), "-Y");
}

TEST(Faces, ContactPointsStayInsideTheContactRegion) {
  const CubeGeometry g = CubeGeometry::solid(0.065, 0.094, 0.8);
  const double half = g.half_edge();
  for (FaceId f : kAllFaces) {
    const Vec3 center = contact_point_local(g, {f, 0.0, 0.0});
    EXPECT_LT((center - half * face_normal_local(f)).norm(), 1e-15);
    for (double u : {-1.0, -0.3, 1.0}) {
      for (double v : {-1.0, 0.5, 1.0}) {
        const Vec3 p = contact_point_local(g, {f, u, v});
        EXPECT_NEAR(p.dot(face_normal_local(f)), half, 1e-15);
        EXPECT_LE(p.cwiseAbs().maxCoeff(), half + 1e-15);
        EXPECT_NEAR((p - center).cwiseAbs().maxCoeff(),
                    kContactRegionFraction * half * std::max(std::abs(u), std::abs(v)), 1e-15);
      }
    }
  }
  EXPECT_THROW(contact_point_local(g, {FaceId::kPosX, 1.5, 0.0}), std::invalid_argument);
  EXPECT_THROW(contact_point_local(g, {FaceId::kPosX, 0.0, std::nan("")}), std::invalid_argument);
}

}  // namespace
}  // namespace cubemanip
