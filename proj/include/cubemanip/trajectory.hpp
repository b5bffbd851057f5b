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

// Rest-to-rest quintic time scaling and straight-line Cartesian segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "cubemanip/geom.hpp"

namespace cubemanip {

// s(t) = a[0] + a[1] t + ... + a[5] t^5 on [0, duration].
struct QuinticCoeffs {
  std::array<double, 6> a{};
  double duration = 1.0;
};

struct ScalarState {
  double s = 0.0;
  double sdot = 0.0;
  double sddot = 0.0;
};

// Coefficients for s(0)=sdot(0)=sddot(0)=sdot(T)=sddot(T)=0, s(T)=n.
inline QuinticCoeffs quintic_coeffs(double n, double T) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("quintic_coeffs: duration must be > 0");
  }
  if (!std::isfinite(n)) throw std::invalid_argument("quintic_coeffs: non-finite displacement");
  const double T3 = T * T * T;
  QuinticCoeffs c;
  c.duration = T;
  c.a = {0.0, 0.0, 0.0, 10.0 * n / T3, -15.0 * n / (T3 * T), 6.0 * n / (T3 * T * T)};
  return c;
}

// Queries outside [0, T] return the held endpoint state.
inline ScalarState eval_quintic(const QuinticCoeffs& c, double t) {
  t = std::clamp(t, 0.0, c.duration);
  const auto& a = c.a;
  ScalarState r;
  r.s = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5]))));
  r.sdot = a[1] + t * (2 * a[2] + t * (3 * a[3] + t * (4 * a[4] + t * 5 * a[5])));
  r.sddot = 2 * a[2] + t * (6 * a[3] + t * (12 * a[4] + t * 20 * a[5]));
  return r;
}

struct PathSample {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

// Straight segment from `start` to `end`. With `metric` the path parameter
// runs over [0, |end - start|]; otherwise over [0, 1].
struct TimedPath3 {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double duration = 1.0;
  QuinticCoeffs coeffs;
  bool metric = false;

  PathSample sample(double t) const {
    const ScalarState st = eval_quintic(coeffs, t);
    const Vec3 delta = end - start;
    Vec3 dir = delta;
    if (metric) {
      const double len = delta.norm();
      dir = len > 0.0 ? Vec3(delta / len) : Vec3::Zero();
    }
    return {start + st.s * dir, st.sdot * dir, st.sddot * dir};
  }
};

inline TimedPath3 point_to_point(const Vec3& p0, const Vec3& p1, double T, bool metric = false) {
  if (!all_finite(p0) || !all_finite(p1)) {
    throw std::invalid_argument("point_to_point: non-finite endpoint");
  }
  TimedPath3 path;
  path.start = p0;
  path.end = p1;
  path.duration = T;
  path.metric = metric;
  path.coeffs = quintic_coeffs(metric ? (p1 - p0).norm() : 1.0, T);
  return path;
}

}  // namespace cubemanip
