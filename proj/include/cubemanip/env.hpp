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

// High-level MDP: one contact decision per waypoint window.
//
// Observation layout (19 reals, meters):
//   [0..2]   cube position
//   [3..6]   cube quaternion (w, x, y, z)
//   [7..9]   active goal waypoint
//   [10..18] tip positions, finger 0 to 2
// Action layout (6 reals in [-1, 1]): (u, v) for fingers 0, 1, 2 on their
// assigned faces.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubemanip/control.hpp"
#include "cubemanip/sac.hpp"
#include "cubemanip/simulator.hpp"

namespace cubemanip {

inline constexpr int kObsDim = 19;
inline constexpr int kActionDim = 2 * kNumFingers;

struct Observation {
  Vec3 cube_position = Vec3::Zero();
  UnitQuat cube_orientation;
  Vec3 goal = Vec3::Zero();
  std::array<Vec3, kNumFingers> tips{};

  VectorXd to_vector() const {
    VectorXd v(kObsDim);
    v.segment<3>(0) = cube_position;
    v.segment<4>(3) = Eigen::Vector4d(cube_orientation.w(), cube_orientation.x(), cube_orientation.y(),
                                      cube_orientation.z());
    v.segment<3>(7) = goal;
    for (int f = 0; f < kNumFingers; ++f) v.segment<3>(10 + 3 * f) = tips[f];
    return v;
  }

  static Observation from_vector(const VectorXd& v) {
    if (v.size() != kObsDim) throw std::invalid_argument("Observation: expected 19 values");
    if (!v.allFinite()) throw std::invalid_argument("Observation: non-finite value");
    Observation o;
    o.cube_position = v.segment<3>(0);
    o.cube_orientation = UnitQuat(v[3], v[4], v[5], v[6]);
    o.goal = v.segment<3>(7);
    for (int f = 0; f < kNumFingers; ++f) o.tips[f] = v.segment<3>(10 + 3 * f);
    return o;
  }
};

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double duration = 6.0;
};

using GoalTrajectory = std::vector<Waypoint>;

struct EnvConfig {
  int num_waypoints = 4;
  double waypoint_duration = 6.0;
  double goal_radius_fraction = 0.7;  // of the arena radius
  double goal_min_height = 0.04;
  double goal_max_height = 0.15;
  double max_step = 0.15;            // between consecutive waypoints
  double init_radius = 0.05;         // cube start positions lie in this disk
  double control_period = 0.01;
  RewardParams reward;

  void validate() const {
    if (num_waypoints < 1) throw std::invalid_argument("env.num_waypoints must be >= 1");
    if (!(waypoint_duration > 0)) throw std::invalid_argument("env.waypoint_duration must be > 0");
    if (!(goal_radius_fraction > 0 && goal_radius_fraction <= 1)) {
      throw std::invalid_argument("env.goal_radius_fraction must be in (0, 1]");
    }
    if (!(goal_min_height >= 0 && goal_min_height <= goal_max_height)) {
      throw std::invalid_argument("env.goal_min_height must be in [0, goal_max_height]");
    }
    if (!(max_step > 0)) throw std::invalid_argument("env.max_step must be > 0");
    if (!(init_radius >= 0)) throw std::invalid_argument("env.init_radius must be >= 0");
    if (!(control_period > 0)) throw std::invalid_argument("env.control_period must be > 0");
    if (!(reward.scale > 0) || !(reward.sharpness > 0)) throw std::invalid_argument("env.reward constants must be > 0");
  }
};

struct Range {
  double lo = 1.0;
  double hi = 1.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct RandomizationConfig {
  bool enabled = false;
  Range mass{0.8, 1.25};
  Range friction{0.75, 1.25};
  Range tip_stiffness{0.8, 1.25};
  double observation_noise = 0.001;  // m, std of position noise

  void validate() const {
    for (const Range* r : {&mass, &friction, &tip_stiffness}) {
      if (!(r->lo >= 0.5 && r->lo <= r->hi && r->hi <= 2.0)) {
        throw std::invalid_argument("randomization ranges must satisfy 0.5 <= lo <= hi <= 2");
      }
    }
    if (!(observation_noise >= 0)) throw std::invalid_argument("randomization.observation_noise must be >= 0");
  }
};

struct EnvParams {
  EnvConfig env;
  SimConfig sim;
  CubeGeometry cube;
  RobotConfig robot;
  ControlConfig control;
  RandomizationConfig randomization;

  void validate() const {
    env.validate();
    sim.validate();
    cube.validate();
    control.validate();
    randomization.validate();
    const double ratio = env.control_period / sim.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1) {
      throw std::invalid_argument("env.control_period must be a positive multiple of sim.dt");
    }
    const double ticks = env.waypoint_duration / env.control_period;
    if (std::abs(ticks - std::round(ticks)) > 1e-9) {
      throw std::invalid_argument("env.waypoint_duration must be a multiple of env.control_period");
    }
  }
};

inline GoalTrajectory sample_goal_trajectory(Rng& rng, const EnvConfig& cfg, double arena_radius) {
  const double radius = cfg.goal_radius_fraction * arena_radius;
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  std::uniform_real_distribution<double> Uz(cfg.goal_min_height, cfg.goal_max_height);
  GoalTrajectory g;
  for (int k = 0; k < cfg.num_waypoints; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw std::runtime_error("sample_goal_trajectory: env.max_step too small to satisfy");
      const double r = radius * std::sqrt(U01(rng));
      const double th = 2.0 * std::numbers::pi * U01(rng);
      const Vec3 p(r * std::cos(th), r * std::sin(th), Uz(rng));
      if (!g.empty() && (p - g.back().position).norm() > cfg.max_step) continue;
      g.push_back({p, cfg.waypoint_duration});
      break;
    }
  }
  return g;
}

inline void write_goal_trajectory(std::ostream& os, const GoalTrajectory& g) {
  os.precision(17);
  for (const Waypoint& w : g) {
    os << w.position.x() << ' ' << w.position.y() << ' ' << w.position.z() << ' ' << w.duration << '\n';
  }
}

// One waypoint per line: "x y z duration". Blank lines and '#' comments are
// skipped.
inline GoalTrajectory read_goal_trajectory(std::istream& is, const std::string& name = "<stream>") {
  GoalTrajectory g;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Waypoint w;
    double x, y, z;
    if (!(ls >> x)) continue;
    std::string extra;
    if (!(ls >> y >> z >> w.duration) || (ls >> extra)) {
      throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": expected 'x y z duration'");
    }
    w.position = Vec3(x, y, z);
    if (!all_finite(w.position) || !(w.duration > 0)) {
      throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": invalid waypoint");
    }
    g.push_back(w);
  }
  if (g.empty()) throw std::invalid_argument(name + ": no waypoints");
  return g;
}

inline GoalTrajectory load_goal_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open goal file '" + path + "'");
  return read_goal_trajectory(in, path);
}

inline ContactTriple action_to_contacts(const VectorXd& action, const std::array<FaceId, kNumFingers>& faces) {
  if (action.size() != kActionDim) throw std::invalid_argument("action must have 6 components");
  if (!action.allFinite()) throw std::invalid_argument("action must be finite");
  ContactTriple c;
  for (int f = 0; f < kNumFingers; ++f) {
    c[f] = ContactSpec{faces[f], std::clamp(action[2 * f], -1.0, 1.0), std::clamp(action[2 * f + 1], -1.0, 1.0)};
  }
  return c;
}

// Physical parameters drawn for one episode.
struct EpisodePhysics {
  double mass_scale = 1.0;
  double friction_scale = 1.0;
  double tip_stiffness_scale = 1.0;
};

struct TraceRecord {
  double time = 0.0;
  Pose cube;
  std::array<Vec3, kNumFingers> tips{};
  JointVector torques = JointVector::Zero();
  Primitive primitive = Primitive::kSelectContacts;
  double reward = 0.0;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  bool failed = false;
  std::string failure;
};

class Env {
 public:
  explicit Env(EnvParams p)
      : params_((p.validate(), std::move(p))),
        nominal_(params_.sim, params_.cube, params_.robot),
        plant_(nominal_),
        controller_(nominal_, params_.control, params_.env.control_period) {}

  const EnvParams& params() const { return params_; }
  const Simulator& plant() const { return plant_; }
  const WorldState& world() const { return world_; }
  const GoalTrajectory& goals() const { return goals_; }
  const EpisodePhysics& physics() const { return physics_; }
  const ControllerState& controller_state() const { return cstate_; }
  // Primitive of every control tick so far, including the initial one.
  const std::vector<Primitive>& primitive_log() const { return primitive_log_; }
  int window() const { return window_; }
  bool done() const { return done_; }
  int sim_steps_per_tick() const {
    return static_cast<int>(std::lround(params_.env.control_period / params_.sim.dt));
  }

  void set_trace(std::function<void(const TraceRecord&)> sink) { trace_ = std::move(sink); }

  Observation reset(std::uint64_t seed) { return reset_impl(seed, std::nullopt); }
  Observation reset(std::uint64_t seed, const GoalTrajectory& goals) { return reset_impl(seed, goals); }

  StepResult step(const VectorXd& action) {
    if (!started_) throw std::logic_error("Env::step before reset");
    if (done_) throw std::logic_error("Env::step after episode end");
    if (action.size() != kActionDim || !action.allFinite()) {
      throw std::invalid_argument("Env::step: action must be 6 finite values");
    }
    StepResult out;
    const Waypoint& wp = goals_[window_];
    const int ticks = static_cast<int>(std::lround(wp.duration / params_.env.control_period));
    const int sub = sim_steps_per_tick();
    try {
      for (int k = 0; k < ticks; ++k) {
        std::optional<ContactTriple> decision;
        if (cstate_.primitive == Primitive::kSelectContacts) {
          decision = action_to_contacts(action, assign_faces(world_.cube_pose, nominal_.fingers()));
        }
        const TickResult tr = controller_.tick(cstate_, world_, wp.position, decision);
        cstate_ = tr.state;
        primitive_log_.push_back(cstate_.primitive);
        for (int j = 0; j < sub; ++j) {
          world_ = plant_.step(world_, tr.torques);
          const bool last = j + 1 == sub;
          const double r = last ? reward(wp.position, world_.cube_pose.position, params_.env.reward) : 0.0;
          if (last) out.reward += r;
          if (trace_) {
            trace_({world_.time, world_.cube_pose, plant_.tip_positions(world_.joints), tr.torques,
                    cstate_.primitive, r});
          }
        }
      }
    } catch (const SimulationError& e) {
      out.failed = true;
      out.failure = e.what();
      done_ = true;
    }
    ++window_;
    if (window_ >= static_cast<int>(goals_.size())) done_ = true;
    out.done = done_;
    out.obs = observe();
    return out;
  }

  Observation observe() {
    Observation o;
    o.cube_position = world_.cube_pose.position;
    o.cube_orientation = world_.cube_pose.orientation;
    o.goal = goals_[std::min<int>(window_, static_cast<int>(goals_.size()) - 1)].position;
    o.tips = plant_.tip_positions(world_.joints);
    if (params_.randomization.enabled && params_.randomization.observation_noise > 0) {
      std::normal_distribution<double> N(0.0, params_.randomization.observation_noise);
      for (int i = 0; i < 3; ++i) o.cube_position[i] += N(rng_);
      for (auto& t : o.tips) {
        for (int i = 0; i < 3; ++i) t[i] += N(rng_);
      }
    }
    return o;
  }

 private:
  Observation reset_impl(std::uint64_t seed, const std::optional<GoalTrajectory>& fixed) {
    rng_.seed(seed);
    physics_ = {};
    SimConfig sc = params_.sim;
    CubeGeometry cg = params_.cube;
    if (params_.randomization.enabled) {
      const auto& rc = params_.randomization;
      auto draw = [&](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng_); };
      physics_.mass_scale = draw(rc.mass);
      physics_.friction_scale = draw(rc.friction);
      physics_.tip_stiffness_scale = draw(rc.tip_stiffness);
      cg.mass *= physics_.mass_scale;
      cg.inertia_diag *= physics_.mass_scale;
      cg.friction_coeff = std::min(2.0, cg.friction_coeff * physics_.friction_scale);
      sc.tip_stiffness *= physics_.tip_stiffness_scale;
    }
    plant_ = Simulator(sc, cg, params_.robot);

    std::uniform_real_distribution<double> U01(0.0, 1.0);
    const double r = params_.env.init_radius * std::sqrt(U01(rng_));
    const double th = 2.0 * std::numbers::pi * U01(rng_);
    const double yaw = std::numbers::pi * (2.0 * U01(rng_) - 1.0);
    world_ = plant_.initial_state(r * std::cos(th), r * std::sin(th), yaw);

    goals_ = fixed ? *fixed : sample_goal_trajectory(rng_, params_.env, params_.sim.arena_radius);
    if (goals_.empty()) throw std::invalid_argument("Env::reset: empty goal trajectory");
    cstate_ = ControllerState{};
    primitive_log_.assign(1, cstate_.primitive);
    window_ = 0;
    done_ = false;
    started_ = true;
    return observe();
  }

  EnvParams params_;
  Simulator nominal_;
  Simulator plant_;
  Controller controller_;
  Rng rng_;
  EpisodePhysics physics_;
  WorldState world_;
  GoalTrajectory goals_;
  ControllerState cstate_;
  std::vector<Primitive> primitive_log_;
  int window_ = 0;
  bool done_ = false;
  bool started_ = false;
  std::function<void(const TraceRecord&)> trace_;
};

}  // namespace cubemanip
