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

// Run configuration: a flat text file of `section.key = value` lines.
// Vectors are written as space-separated numbers, booleans as true/false.

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "cubemanip/env.hpp"
#include "cubemanip/sac.hpp"

namespace cubemanip {

struct TrainConfig {
  int episodes = 200;
  int warmup_episodes = 25;   // uniform random actions before the policy acts
  int updates_per_step = 16;  // gradient steps per environment step

  void validate() const {
    if (episodes < 0) throw std::invalid_argument("train.episodes must be >= 0");
    if (warmup_episodes < 0) throw std::invalid_argument("train.warmup_episodes must be >= 0");
    if (updates_per_step < 0) throw std::invalid_argument("train.updates_per_step must be >= 0");
  }
};

struct RunConfig {
  EnvParams params;
  SacConfig sac;
  TrainConfig train;

  void validate() const {
    params.validate();
    make_fingers(params.robot);
    sac.validate();
    train.validate();
  }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace config_detail {

inline std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_numbers(const std::string& v) {
  std::vector<double> out;
  std::istringstream is(v);
  std::string tok;
  while (is >> tok) {
    double x = 0.0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) throw ConfigError("'" + tok + "' is not a number");
    out.push_back(x);
  }
  return out;
}

inline double parse_double(const std::string& v) {
  const auto xs = parse_numbers(v);
  if (xs.size() != 1) throw ConfigError("expected one number, got '" + v + "'");
  return xs[0];
}

inline long long parse_integer(const std::string& v) {
  long long x = 0;
  const std::string t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

template <int N>
Eigen::Matrix<double, N, 1> parse_vec(const std::string& v) {
  const auto xs = parse_numbers(v);
  if (xs.size() != N) throw ConfigError("expected " + std::to_string(N) + " numbers, got '" + v + "'");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = xs[i];
  return out;
}

template <class V>
std::string fmt_vec(const V& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s;
}

}  // namespace config_detail

struct ConfigEntry {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Every configurable key, in schema order.
inline const std::vector<ConfigEntry>& config_schema() {
  using namespace config_detail;
  static const std::vector<ConfigEntry> schema = [] {
    std::vector<ConfigEntry> s;
    auto real = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc), [field](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); },
                   [field](RunConfig& c, const std::string& v) { field(c) = parse_double(v); }});
    };
    auto integer = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc),
                   [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
                   [field](RunConfig& c, const std::string& v) {
                     using T = std::remove_reference_t<decltype(field(c))>;
                     const long long x = parse_integer(v);
                     if (x < 0 && std::is_unsigned_v<T>) throw ConfigError("expected a non-negative integer");
                     field(c) = static_cast<T>(x);
                   }});
    };
    auto boolean = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc),
                   [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                   [field](RunConfig& c, const std::string& v) { field(c) = parse_bool(v); }});
    };
    auto vec3 = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc), [field](const RunConfig& c) { return fmt_vec(field(const_cast<RunConfig&>(c))); },
                   [field](RunConfig& c, const std::string& v) { field(c) = parse_vec<3>(v); }});
    };
    auto array3 = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc),
                   [field](const RunConfig& c) {
                     const auto& a = field(const_cast<RunConfig&>(c));
                     return fmt(a[0]) + " " + fmt(a[1]) + " " + fmt(a[2]);
                   },
                   [field](RunConfig& c, const std::string& v) {
                     const Vec3 x = parse_vec<3>(v);
                     field(c) = {x[0], x[1], x[2]};
                   }});
    };
    auto joint_gain = [&s](std::string key, std::string doc, auto field) {
      s.push_back({std::move(key), std::move(doc),
                   [field](const RunConfig& c) { return fmt_vec(field(const_cast<RunConfig&>(c)).template head<3>()); },
                   [field](RunConfig& c, const std::string& v) {
                     const Vec3 x = parse_vec<3>(v);
                     for (int f = 0; f < kNumFingers; ++f) field(c).template segment<3>(3 * f) = x;
                   }});
    };

    real("robot.base_radius", "finger base circle radius (m)", [](RunConfig& c) -> double& { return c.params.robot.base_radius; });
    real("robot.base_height", "finger base height above the floor (m)", [](RunConfig& c) -> double& { return c.params.robot.base_height; });
    array3("robot.link_lengths", "hip offset, upper and lower link lengths (m)", [](RunConfig& c) -> auto& { return c.params.robot.link_lengths; });
    real("robot.link_mass", "point mass of each moving link (kg)", [](RunConfig& c) -> double& { return c.params.robot.link_mass; });
    real("robot.armature", "rotor inertia added to each joint (kg m^2)", [](RunConfig& c) -> double& { return c.params.robot.armature; });
    real("robot.joint_damping", "viscous joint damping (N m s/rad)", [](RunConfig& c) -> double& { return c.params.robot.joint_damping; });
    real("robot.torque_limit", "per-joint torque saturation (N m)", [](RunConfig& c) -> double& { return c.params.robot.torque_limit; });
    vec3("robot.joint_lower", "lower joint limits (rad)", [](RunConfig& c) -> auto& { return c.params.robot.joint_lower; });
    vec3("robot.joint_upper", "upper joint limits (rad)", [](RunConfig& c) -> auto& { return c.params.robot.joint_upper; });
    vec3("robot.home", "home joint configuration of every finger (rad)", [](RunConfig& c) -> auto& { return c.params.robot.home; });

    real("sim.dt", "integration step (s)", [](RunConfig& c) -> double& { return c.params.sim.dt; });
    vec3("sim.gravity", "gravity vector (m/s^2)", [](RunConfig& c) -> auto& { return c.params.sim.gravity; });
    boolean("sim.floor_enabled", "simulate the floor", [](RunConfig& c) -> bool& { return c.params.sim.floor_enabled; });
    real("sim.floor_stiffness", "floor spring per cube corner (N/m)", [](RunConfig& c) -> double& { return c.params.sim.floor_stiffness; });
    real("sim.floor_damping", "floor damper per cube corner (N s/m)", [](RunConfig& c) -> double& { return c.params.sim.floor_damping; });
    real("sim.tip_stiffness", "fingertip-cube contact spring (N/m)", [](RunConfig& c) -> double& { return c.params.sim.tip_stiffness; });
    real("sim.tip_damping", "fingertip-cube contact damper (N s/m)", [](RunConfig& c) -> double& { return c.params.sim.tip_damping; });
    real("sim.tip_radius", "fingertip sphere radius (m)", [](RunConfig& c) -> double& { return c.params.sim.tip_radius; });
    real("sim.arena_radius", "arena radius (m)", [](RunConfig& c) -> double& { return c.params.sim.arena_radius; });
    real("sim.tip_floor_stiffness", "fingertip-floor spring (N/m)", [](RunConfig& c) -> double& { return c.params.sim.tip_floor_stiffness; });
    real("sim.tip_floor_damping", "fingertip-floor damper (N s/m)", [](RunConfig& c) -> double& { return c.params.sim.tip_floor_damping; });
    real("sim.max_cube_speed", "divergence guard on cube speed (m/s)", [](RunConfig& c) -> double& { return c.params.sim.max_cube_speed; });
    real("sim.max_cube_angular_speed", "divergence guard on cube spin (rad/s)", [](RunConfig& c) -> double& { return c.params.sim.max_cube_angular_speed; });
    real("sim.max_joint_speed", "divergence guard on joint speed (rad/s)", [](RunConfig& c) -> double& { return c.params.sim.max_joint_speed; });

    real("cube.edge_length", "cube edge (m); inertia follows the solid cube", [](RunConfig& c) -> double& { return c.params.cube.edge_length; });
    real("cube.mass", "cube mass (kg)", [](RunConfig& c) -> double& { return c.params.cube.mass; });
    real("cube.friction", "Coulomb friction coefficient", [](RunConfig& c) -> double& { return c.params.cube.friction_coeff; });

    joint_gain("control.kp_joint", "joint stiffness per finger joint (N m/rad)", [](RunConfig& c) -> auto& { return c.params.control.gains.kp_joint; });
    joint_gain("control.kd_joint", "joint damping gain per finger joint (N m s/rad)", [](RunConfig& c) -> auto& { return c.params.control.gains.kd_joint; });
    real("control.kp_lin", "cube position gain (1/s^2)", [](RunConfig& c) -> double& { return c.params.control.gains.cube.kp_lin; });
    real("control.kd_lin", "cube velocity gain (1/s)", [](RunConfig& c) -> double& { return c.params.control.gains.cube.kd_lin; });
    real("control.kp_ang", "cube orientation gain (1/s^2)", [](RunConfig& c) -> double& { return c.params.control.gains.cube.kp_ang; });
    real("control.kd_ang", "cube angular velocity gain (1/s)", [](RunConfig& c) -> double& { return c.params.control.gains.cube.kd_ang; });
    real("control.reach_duration", "duration of each reach segment (s)", [](RunConfig& c) -> double& { return c.params.control.reach_duration; });
    real("control.standoff", "pre-contact offset along the face normal (m)", [](RunConfig& c) -> double& { return c.params.control.standoff; });
    real("control.contact_tolerance", "tip distance that ends the reach (m)", [](RunConfig& c) -> double& { return c.params.control.contact_tolerance; });
    real("control.reach_timeout", "extra time allowed after the closing segment (s)", [](RunConfig& c) -> double& { return c.params.control.reach_timeout; });
    real("control.lift_duration", "time to carry the cube to a new waypoint (s)", [](RunConfig& c) -> double& { return c.params.control.lift_duration; });
    real("control.grip_depth", "tip target depth inside the face (m)", [](RunConfig& c) -> double& { return c.params.control.grip_depth; });
    real("control.qp_mu", "friction coefficient assumed by the force QP", [](RunConfig& c) -> double& { return c.params.control.qp_mu; });
    real("control.f_max", "normal force bound per tip (N)", [](RunConfig& c) -> double& { return c.params.control.f_max; });
    real("control.w_reg", "weight pulling normal forces toward f_ref", [](RunConfig& c) -> double& { return c.params.control.w_reg; });
    real("control.f_ref", "preferred normal force (N)", [](RunConfig& c) -> double& { return c.params.control.f_ref; });
    real("control.drop_tolerance", "cube height deficit that counts as a drop (m)", [](RunConfig& c) -> double& { return c.params.control.drop_tolerance; });
    integer("control.loss_debounce", "consecutive lost ticks before regrasping", [](RunConfig& c) -> int& { return c.params.control.loss_debounce; });
    boolean("control.gravity_compensation", "add link gravity torques", [](RunConfig& c) -> bool& { return c.params.control.gravity_compensation; });

    integer("env.num_waypoints", "waypoints per episode", [](RunConfig& c) -> int& { return c.params.env.num_waypoints; });
    real("env.waypoint_duration", "window length per waypoint (s)", [](RunConfig& c) -> double& { return c.params.env.waypoint_duration; });
    real("env.goal_radius_fraction", "goal cylinder radius as a fraction of the arena", [](RunConfig& c) -> double& { return c.params.env.goal_radius_fraction; });
    real("env.goal_min_height", "lowest goal height (m)", [](RunConfig& c) -> double& { return c.params.env.goal_min_height; });
    real("env.goal_max_height", "highest goal height (m)", [](RunConfig& c) -> double& { return c.params.env.goal_max_height; });
    real("env.max_step", "largest distance between consecutive waypoints (m)", [](RunConfig& c) -> double& { return c.params.env.max_step; });
    real("env.init_radius", "radius of the disk of cube start positions (m)", [](RunConfig& c) -> double& { return c.params.env.init_radius; });
    real("env.control_period", "controller period (s)", [](RunConfig& c) -> double& { return c.params.env.control_period; });
    real("env.reward_scale", "reward at zero distance", [](RunConfig& c) -> double& { return c.params.env.reward.scale; });
    real("env.reward_sharpness", "reward decay (1/m^2)", [](RunConfig& c) -> double& { return c.params.env.reward.sharpness; });

    boolean("randomization.enabled", "resample physics at every reset", [](RunConfig& c) -> bool& { return c.params.randomization.enabled; });
    real("randomization.mass_min", "cube mass scale, lower bound", [](RunConfig& c) -> double& { return c.params.randomization.mass.lo; });
    real("randomization.mass_max", "cube mass scale, upper bound", [](RunConfig& c) -> double& { return c.params.randomization.mass.hi; });
    real("randomization.friction_min", "friction scale, lower bound", [](RunConfig& c) -> double& { return c.params.randomization.friction.lo; });
    real("randomization.friction_max", "friction scale, upper bound", [](RunConfig& c) -> double& { return c.params.randomization.friction.hi; });
    real("randomization.tip_stiffness_min", "tip stiffness scale, lower bound", [](RunConfig& c) -> double& { return c.params.randomization.tip_stiffness.lo; });
    real("randomization.tip_stiffness_max", "tip stiffness scale, upper bound", [](RunConfig& c) -> double& { return c.params.randomization.tip_stiffness.hi; });
    real("randomization.observation_noise", "std of position noise in observations (m)", [](RunConfig& c) -> double& { return c.params.randomization.observation_noise; });

    real("sac.gamma", "discount factor", [](RunConfig& c) -> double& { return c.sac.gamma; });
    real("sac.alpha", "entropy weight", [](RunConfig& c) -> double& { return c.sac.alpha; });
    real("sac.tau", "target network update rate", [](RunConfig& c) -> double& { return c.sac.tau; });
    real("sac.learning_rate", "Adam step size", [](RunConfig& c) -> double& { return c.sac.learning_rate; });
    integer("sac.batch_size", "minibatch size", [](RunConfig& c) -> int& { return c.sac.batch_size; });
    integer("sac.buffer_capacity", "replay buffer capacity", [](RunConfig& c) -> std::size_t& { return c.sac.buffer_capacity; });
    s.push_back({"sac.hidden", "hidden layer widths",
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.sac.hidden.size(); ++i) out += (i ? " " : "") + std::to_string(c.sac.hidden[i]);
                   return out;
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::vector<int> h;
                   std::istringstream is(v);
                   std::string tok;
                   while (is >> tok) h.push_back(static_cast<int>(parse_integer(tok)));
                   if (h.empty()) throw ConfigError("expected at least one hidden width");
                   c.sac.hidden = h;
                 }});
    s.push_back({"sac.activation", "hidden activation: relu or tanh",
                 [](const RunConfig& c) { return activation_name(c.sac.activation); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.sac.activation = parse_activation(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});

    integer("train.episodes", "training episodes", [](RunConfig& c) -> int& { return c.train.episodes; });
    integer("train.warmup_episodes", "episodes with uniform random actions", [](RunConfig& c) -> int& { return c.train.warmup_episodes; });
    integer("train.updates_per_step", "gradient updates per environment step", [](RunConfig& c) -> int& { return c.train.updates_per_step; });
    return s;
  }();
  return schema;
}

inline const ConfigEntry* find_config_entry(const std::string& key) {
  for (const auto& e : config_schema()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

// Derived quantities recomputed after any edit.
inline void finalize(RunConfig& c) {
  c.params.cube = CubeGeometry::solid(c.params.cube.edge_length, c.params.cube.mass, c.params.cube.friction_coeff);
}

inline RunConfig parse_config(std::istream& is, const std::string& name = "<config>") {
  RunConfig c;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'section.key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    const ConfigEntry* e = find_config_entry(key);
    if (!e) throw ConfigError(where + "unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen[key] = lineno;
    try {
      e->set(c, value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(where + key + ": " + ex.what());
    }
  }
  finalize(c);
  try {
    c.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(name + ": " + ex.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_config(in, path);
}

// Every key with its resolved value; parse_config reads it back unchanged.
inline void write_config(std::ostream& os, const RunConfig& c, bool with_docs = false) {
  std::string section;
  for (const auto& e : config_schema()) {
    const std::string sec = e.key.substr(0, e.key.find('.'));
    if (with_docs && sec != section) {
      if (!section.empty()) os << '\n';
      os << "# [" << sec << "]\n";
    }
    section = sec;
    if (with_docs) os << "# " << e.doc << '\n';
    os << e.key << " = " << e.get(c) << '\n';
  }
}

inline std::string config_to_string(const RunConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

}  // namespace cubemanip
