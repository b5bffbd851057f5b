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

// Contact-force distribution for a cube held by k fingertips.
//
// Forces are found by a small convex QP in the contacts' local frames
// (normal, tangent1, tangent2):
//
//   min  |f|^2 + w_reg * |f_n - f_ref|^2
//   s.t. G f = w                        (net wrench about the cube center)
//        0 <= f_n <= f_max
//        |f_t1|, |f_t2| <= c * f_n      (friction pyramid, c = mu or mu/sqrt2)
//
// The solver is ADMM in the OSQP form followed by an active-set polish that
// makes the returned point satisfy the active constraints to round-off.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "cubemanip/geom.hpp"

namespace cubemanip {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using GraspMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic>;

// Columns 3i..3i+2 map contact i's force to (force; (p_i - com) x force).
inline GraspMatrix grasp_matrix(std::span<const Vec3> contacts, const Vec3& com) {
  if (contacts.empty()) throw std::invalid_argument("grasp_matrix: need at least one contact");
  GraspMatrix G(6, 3 * static_cast<Eigen::Index>(contacts.size()));
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const auto c = 3 * static_cast<Eigen::Index>(i);
    G.block<3, 3>(0, c).setIdentity();
    G.block<3, 3>(3, c) = skew(contacts[i] - com);
  }
  return G;
}

struct WrenchTarget {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();

  Vector6 stacked() const {
    Vector6 w;
    w << force, torque;
    return w;
  }
};

struct CubeTrackingGains {
  double kp_lin = 200.0;  // 1/s^2
  double kd_lin = 28.0;   // 1/s
  double kp_ang = 20.0;   // 1/s^2
  double kd_ang = 2.0;    // 1/s
};

struct CubeReference {
  Pose pose;
  Vec3 linvel = Vec3::Zero();
  Vec3 linacc = Vec3::Zero();
  Vec3 angvel = Vec3::Zero();
};

// Wrench the tips must apply so the cube follows `ref`. The force includes
// gravity compensation; the angular law is scaled by the world inertia the
// same way the linear law is scaled by the mass.
inline WrenchTarget desired_wrench(const Pose& cube_pose, const Vec3& linvel, const Vec3& angvel,
                                   const CubeReference& ref, const CubeGeometry& geom,
                                   const CubeTrackingGains& gains, const Vec3& gravity) {
  WrenchTarget w;
  const Vec3 e_pos = ref.pose.position - cube_pose.position;
  const Vec3 e_vel = ref.linvel - linvel;
  w.force = geom.mass * (ref.linacc + gains.kp_lin * e_pos + gains.kd_lin * e_vel - gravity);
  const Vec3 e_rot = (ref.pose.orientation * cube_pose.orientation.conjugate()).log();
  const Vec3 e_angvel = ref.angvel - angvel;
  const Mat3 R = cube_pose.orientation.matrix();
  const Mat3 I_world = R * geom.inertia_diag.asDiagonal() * R.transpose();
  w.torque = I_world * (gains.kp_ang * e_rot + gains.kd_ang * e_angvel);
  return w;
}

struct FrictionPyramid {
  double mu = 0.8;
  bool inscribed = true;

  double tangent_bound() const { return inscribed ? mu / std::sqrt(2.0) : mu; }
};

struct ContactQpOptions {
  double w_reg = 1e-2;
  double f_ref = 0.3;  // N, preferred normal force
  int max_iterations = 2000;
  int quick_iterations = 40;  // first polish attempt happens after this many
  double eps = 1e-6;  // ADMM residual tolerance (inf-norm); polish refines
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_infeasible = 1e-5;  // tolerance of the primal infeasibility certificate
  int polish_rounds = 40;
  double feas_tol = 1e-8;  // constraint tolerance for accepting a point
  double penalty_weight = 1e4;  // weight on |Gf - w|^2 for the best-effort fallback
};

enum class ContactQpStatus { kSolved, kInfeasible };

// ADMM iterates carried between solves of nearly identical problems.
struct QpWarmStart {
  struct Iterate {
    Eigen::VectorXd x, z, y;
    double rho = 0.0;
  };
  Iterate strict, relaxed;
};

struct ContactForces {
  std::vector<Vec3> forces;        // world frame, applied by the tips on the cube
  std::vector<Vec3> local;         // (normal, tangent1, tangent2) per contact
  ContactQpStatus status = ContactQpStatus::kSolved;
  double equality_residual = 0.0;  // |G f - w|_2
  double max_violation = 0.0;      // worst inequality violation
  double objective = 0.0;
  int iterations = 0;

  bool ok() const { return status == ContactQpStatus::kSolved; }
};

// Tangent basis for an inward normal; deterministic in `n`.
inline std::pair<Vec3, Vec3> contact_tangents(const Vec3& n) {
  const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 t1 = helper.cross(n).normalized();
  return {t1, n.cross(t1)};
}

namespace detail {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

// min 0.5 x'Px + q'x  s.t.  l <= Ax <= u
struct BoxQp {
  MatX P;
  VecX q;
  MatX A;
  VecX l;
  VecX u;
};

struct QpPoint {
  VecX x;
  VecX z;
  VecX y;
  double rho = 0.0;
  int iterations = 0;
  bool infeasible = false;  // primal infeasibility certificate found
};

inline bool is_equality(const BoxQp& qp, Eigen::Index i) { return qp.l[i] == qp.u[i]; }

// dy certifies infeasibility when A^T dy ~ 0 while u^T dy+ + l^T dy- < 0.
inline bool certifies_infeasibility(const BoxQp& qp, const VecX& dy, double eps) {
  const double scale = dy.lpNorm<Eigen::Infinity>();
  if (!(scale > 1e-12)) return false;
  if ((qp.A.transpose() * dy).lpNorm<Eigen::Infinity>() > eps * scale) return false;
  double support = 0.0;
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    if (dy[i] > 0.0) {
      if (!std::isfinite(qp.u[i])) return false;
      support += qp.u[i] * dy[i];
    } else if (dy[i] < 0.0) {
      if (!std::isfinite(qp.l[i])) return false;
      support += qp.l[i] * dy[i];
    }
  }
  return support < -eps * scale;
}

inline QpPoint admm(const BoxQp& qp, const ContactQpOptions& opt, const QpPoint* start = nullptr) {
  const auto n = qp.P.rows();
  const auto m = qp.A.rows();
  const bool warm = start && start->x.size() == n && start->z.size() == m && start->y.size() == m && start->rho > 0;
  double rho_base = warm ? start->rho : opt.rho;
  VecX rho(m);
  auto set_rho = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      const bool loose = !std::isfinite(qp.l[i]) && !std::isfinite(qp.u[i]);
      rho[i] = loose ? 1e-6 : (is_equality(qp, i) ? 1e3 * rho_base : rho_base);
    }
  };
  set_rho();
  Eigen::LDLT<MatX> kkt(qp.P + opt.sigma * MatX::Identity(n, n) + qp.A.transpose() * rho.asDiagonal() * qp.A);
  VecX x = warm ? start->x : VecX::Zero(n);
  VecX z = warm ? start->z : VecX::Zero(m);
  VecX y = warm ? start->y : VecX::Zero(m);
  QpPoint out;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const VecX rhs = opt.sigma * x - qp.q + qp.A.transpose() * (rho.cwiseProduct(z) - y);
    const VecX xt = kkt.solve(rhs);
    const VecX zt = qp.A * xt;
    x = opt.alpha * xt + (1.0 - opt.alpha) * x;
    const VecX zr = opt.alpha * zt + (1.0 - opt.alpha) * z;
    const VecX z_new = (zr + y.cwiseQuotient(rho)).cwiseMax(qp.l).cwiseMin(qp.u);
    const VecX dy = rho.cwiseProduct(zr - z_new);
    y += dy;
    z = z_new;
    if (it % 10 != 9) continue;
    if (certifies_infeasibility(qp, dy, opt.eps_infeasible)) {
      out.infeasible = true;
      ++it;
      break;
    }
    const VecX Ax = qp.A * x;
    const VecX Px = qp.P * x;
    const VecX Aty = qp.A.transpose() * y;
    const double r_prim = (Ax - z).lpNorm<Eigen::Infinity>();
    const double r_dual = (Px + qp.q + Aty).lpNorm<Eigen::Infinity>();
    if (r_prim < opt.eps && r_dual < opt.eps) {
      ++it;
      break;
    }
    // Rebalance the penalty so primal and dual residuals shrink together.
    if (it % 50 == 49) {
      const double prim_scale = std::max({Ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>(), 1e-12});
      const double dual_scale = std::max(
          {Px.lpNorm<Eigen::Infinity>(), Aty.lpNorm<Eigen::Infinity>(), qp.q.lpNorm<Eigen::Infinity>(), 1e-12});
      const double ratio = std::sqrt((r_prim / prim_scale) / std::max(r_dual / dual_scale, 1e-300));
      const double proposed = std::clamp(rho_base * ratio, 1e-6, 1e6);
      if (proposed > 5.0 * rho_base || proposed < 0.2 * rho_base) {
        rho_base = proposed;
        set_rho();
        kkt.compute(qp.P + opt.sigma * MatX::Identity(n, n) + qp.A.transpose() * rho.asDiagonal() * qp.A);
      }
    }
  }
  out.x = x;
  out.z = z;
  out.y = y;
  out.rho = rho_base;
  out.iterations = it;
  return out;
}

// Equality-constrained minimizer of the QP with rows `act` held at `target`,
// via a null-space reduction that tolerates rank-deficient constraints.
// Returns false when the held rows are inconsistent.
inline bool solve_on_active_set(const BoxQp& qp, const std::vector<Eigen::Index>& act, const VecX& target,
                                VecX& x, VecX& y_act) {
  const auto n = qp.P.rows();
  const auto k = static_cast<Eigen::Index>(act.size());
  MatX Aa(k, n);
  VecX b(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    Aa.row(r) = qp.A.row(act[r]);
    b[r] = target[act[r]];
  }
  if (k == 0) {
    x = qp.P.ldlt().solve(-qp.q);
    y_act.resize(0);
    return true;
  }
  Eigen::JacobiSVD<MatX> svd(Aa, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double tol = 1e-10 * std::max(1.0, svd.singularValues()(0));
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > tol) ++rank;
  }
  const MatX& V = svd.matrixV();
  const MatX& U = svd.matrixU();
  VecX xp = VecX::Zero(n);
  for (Eigen::Index i = 0; i < rank; ++i) {
    xp += V.col(i) * (U.col(i).dot(b) / svd.singularValues()(i));
  }
  if ((Aa * xp - b).norm() > 1e-9 * (1.0 + b.norm())) return false;
  const MatX N = V.rightCols(n - rank);
  if (N.cols() > 0) {
    const MatX H = N.transpose() * qp.P * N;
    const VecX g = N.transpose() * (qp.P * xp + qp.q);
    x = xp - N * H.ldlt().solve(g);
  } else {
    x = xp;
  }
  // Multipliers from the stationarity condition P x + q + Aa' y = 0.
  const VecX grad = qp.P * x + qp.q;
  y_act = Aa.transpose().completeOrthogonalDecomposition().solve(-grad);
  return true;
}

struct PolishResult {
  VecX x;
  bool ok = false;
};

// Guess the active set from the ADMM dual, then repair it: add violated
// rows, drop rows whose multiplier has the wrong sign.
inline PolishResult polish(const BoxQp& qp, const QpPoint& pt, const ContactQpOptions& opt) {
  const auto m = qp.A.rows();
  // side: 0 inactive, -1 at lower bound, +1 at upper bound, 2 equality
  std::vector<int> side(m, 0);
  const VecX Ax = qp.A * pt.x;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (is_equality(qp, i)) {
      side[i] = 2;
    } else if (std::isfinite(qp.l[i]) && (pt.y[i] < -1e-7 || Ax[i] - qp.l[i] < 1e-7)) {
      side[i] = -1;
    } else if (std::isfinite(qp.u[i]) && (pt.y[i] > 1e-7 || qp.u[i] - Ax[i] < 1e-7)) {
      side[i] = 1;
    }
  }
  PolishResult out;
  std::set<std::vector<int>> visited;
  for (int round = 0; round < opt.polish_rounds; ++round) {
    if (!visited.insert(side).second) return out;  // cycling
    std::vector<Eigen::Index> act;
    VecX target = VecX::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[i] == 0) continue;
      act.push_back(i);
      target[i] = side[i] == 1 ? qp.u[i] : qp.l[i];
    }
    VecX x, ya;
    if (!solve_on_active_set(qp, act, target, x, ya)) {
      // Inconsistent active set: release the last non-equality row.
      bool released = false;
      for (auto it = act.rbegin(); it != act.rend(); ++it) {
        if (side[*it] != 2) {
          side[*it] = 0;
          released = true;
          break;
        }
      }
      if (!released) return out;
      continue;
    }
    // Wrong-sign multipliers.
    Eigen::Index drop = -1;
    double worst_sign = 1e-10;
    for (std::size_t r = 0; r < act.size(); ++r) {
      const Eigen::Index i = act[r];
      if (side[i] == 2) continue;
      const double wrong = side[i] == 1 ? -ya[r] : ya[r];
      if (wrong > worst_sign) {
        worst_sign = wrong;
        drop = i;
      }
    }
    // Violated inactive rows.
    const VecX Axn = qp.A * x;
    Eigen::Index add = -1;
    double worst_viol = opt.feas_tol * 0.1;
    int add_side = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[i] != 0) continue;
      const double lo = qp.l[i] - Axn[i];
      const double hi = Axn[i] - qp.u[i];
      if (lo > worst_viol) {
        worst_viol = lo;
        add = i;
        add_side = -1;
      }
      if (hi > worst_viol) {
        worst_viol = hi;
        add = i;
        add_side = 1;
      }
    }
    if (add >= 0) {
      side[add] = add_side;
      continue;
    }
    if (drop >= 0) {
      side[drop] = 0;
      continue;
    }
    out.x = x;
    out.ok = true;
    return out;
  }
  return out;
}

}  // namespace detail

// Solves for per-contact forces. `normals` point into the cube (the direction
// a tip can push). On infeasible instances the result is flagged
// kInfeasible and carries the best-effort forces of the relaxed problem in
// which G f = w is replaced by a heavily weighted penalty.
inline ContactForces solve_contact_forces(const GraspMatrix& G, std::span<const Vec3> normals, const WrenchTarget& w,
                                          const FrictionPyramid& pyr, double f_max,
                                          const ContactQpOptions& opt = {}, QpWarmStart* warm = nullptr) {
  using detail::MatX;
  using detail::VecX;
  const auto k = static_cast<Eigen::Index>(normals.size());
  if (k < 1 || G.cols() != 3 * k) throw std::invalid_argument("solve_contact_forces: size mismatch");
  if (!(pyr.mu > 0.0)) throw std::invalid_argument("solve_contact_forces: mu must be > 0");
  if (!(f_max > 0.0)) throw std::invalid_argument("solve_contact_forces: f_max must be > 0");
  for (const Vec3& n : normals) {
    if (std::abs(n.norm() - 1.0) > 1e-6) throw std::invalid_argument("solve_contact_forces: normals must be unit");
  }
  const Vector6 wv = w.stacked();
  if (!wv.allFinite()) throw std::invalid_argument("solve_contact_forces: non-finite wrench");

  const Eigen::Index n = 3 * k;
  // Local-to-world rotation, block diagonal.
  MatX R = MatX::Zero(n, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto [t1, t2] = contact_tangents(normals[i]);
    R.block<3, 1>(3 * i, 3 * i) = normals[i];
    R.block<3, 1>(3 * i, 3 * i + 1) = t1;
    R.block<3, 1>(3 * i, 3 * i + 2) = t2;
  }
  const MatX GR = G * R;
  const double c = pyr.tangent_bound();
  const double inf = std::numeric_limits<double>::infinity();

  detail::BoxQp qp;
  qp.P = 2.0 * MatX::Identity(n, n);
  qp.q = VecX::Zero(n);
  for (Eigen::Index i = 0; i < k; ++i) {
    qp.P(3 * i, 3 * i) += 2.0 * opt.w_reg;
    qp.q[3 * i] = -2.0 * opt.w_reg * opt.f_ref;
  }
  const Eigen::Index m_ineq = 5 * k;
  MatX Ai = MatX::Zero(m_ineq, n);
  VecX li(m_ineq), ui(m_ineq);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index r = 5 * i, col = 3 * i;
    Ai(r, col) = 1.0;
    li[r] = 0.0;
    ui[r] = f_max;
    for (int t = 0; t < 2; ++t) {
      // t_j - c f_n <= 0  and  t_j + c f_n >= 0
      Ai(r + 1 + 2 * t, col + 1 + t) = 1.0;
      Ai(r + 1 + 2 * t, col) = -c;
      li[r + 1 + 2 * t] = -inf;
      ui[r + 1 + 2 * t] = 0.0;
      Ai(r + 2 + 2 * t, col + 1 + t) = 1.0;
      Ai(r + 2 + 2 * t, col) = c;
      li[r + 2 + 2 * t] = 0.0;
      ui[r + 2 + 2 * t] = inf;
    }
  }

  auto evaluate = [&](const VecX& x, ContactForces& out) {
    const VecX fw = R * x;
    out.forces.resize(k);
    out.local.resize(k);
    out.objective = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      out.forces[i] = fw.segment<3>(3 * i);
      out.local[i] = x.segment<3>(3 * i);
      out.objective += out.forces[i].squaredNorm() + opt.w_reg * std::pow(x[3 * i] - opt.f_ref, 2);
    }
    out.equality_residual = (G * fw - wv).norm();
    const VecX a = Ai * x;
    out.max_violation = std::max(0.0, ((li - a).cwiseMax(a - ui)).maxCoeff());
  };

  // Strict problem: equalities as constraint rows.
  qp.A.resize(6 + m_ineq, n);
  qp.A << GR, Ai;
  qp.l.resize(6 + m_ineq);
  qp.u.resize(6 + m_ineq);
  qp.l << wv, li;
  qp.u << wv, ui;
  ContactForces out;
  QpWarmStart scratch;
  QpWarmStart& ws = warm ? *warm : scratch;
  if (!warm) ws = {};

  // Short ADMM run then polish; on failure, the full run continues from there.
  auto attempt = [&](const detail::BoxQp& prob, QpWarmStart::Iterate& it, auto&& accept) -> bool {
    ContactQpOptions quick = opt;
    quick.max_iterations = std::min(opt.quick_iterations, opt.max_iterations);
    detail::QpPoint pt{it.x, it.z, it.y, it.rho, 0, false};
    for (const ContactQpOptions* o : {static_cast<const ContactQpOptions*>(&quick), &opt}) {
      pt = detail::admm(prob, *o, &pt);
      out.iterations += pt.iterations;
      it = {pt.x, pt.z, pt.y, pt.rho};
      const detail::PolishResult pol = detail::polish(prob, pt, *o);
      if (pol.ok && accept(pol.x)) return true;
      if (pt.infeasible) return false;
    }
    return accept(pt.x);
  };

  const double eq_tol = 1e-6 * (1.0 + wv.norm());
  const bool solved = attempt(qp, ws.strict, [&](const VecX& x) {
    evaluate(x, out);
    return out.equality_residual <= eq_tol && out.max_violation <= opt.feas_tol;
  });
  if (solved) {
    out.status = ContactQpStatus::kSolved;
    return out;
  }

  // Relaxed problem: only the inequalities remain, always feasible.
  detail::BoxQp relaxed;
  relaxed.P = qp.P + 2.0 * opt.penalty_weight * GR.transpose() * GR;
  relaxed.q = qp.q - 2.0 * opt.penalty_weight * GR.transpose() * wv;
  relaxed.A = Ai;
  relaxed.l = li;
  relaxed.u = ui;
  VecX xr;
  attempt(relaxed, ws.relaxed, [&](const VecX& x) {
    xr = x;
    const VecX a = Ai * x;
    return ((li - a).cwiseMax(a - ui)).maxCoeff() <= opt.feas_tol;
  });
  // Clip into the pyramid so the forces stay transmissible.
  for (Eigen::Index i = 0; i < k; ++i) {
    xr[3 * i] = std::clamp(xr[3 * i], 0.0, f_max);
    for (int t = 1; t <= 2; ++t) xr[3 * i + t] = std::clamp(xr[3 * i + t], -c * xr[3 * i], c * xr[3 * i]);
  }
  evaluate(xr, out);
  out.status = ContactQpStatus::kInfeasible;
  return out;
}

}  // namespace cubemanip
