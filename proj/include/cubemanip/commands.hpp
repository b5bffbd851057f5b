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

// Operator commands behind the `cubemanip` executable. Each throws
// CommandError carrying a stable machine-readable code.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubemanip/config.hpp"
#include "cubemanip/env.hpp"
#include "cubemanip/grasp.hpp"
#include "cubemanip/io.hpp"
#include "cubemanip/train.hpp"

namespace cubemanip {

class CommandError : public std::runtime_error {
 public:
  CommandError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

namespace cmd_detail {

inline RunConfig load_config_or_throw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CommandError("E_CONFIG", "config file '" + path.string() + "' not found");
  try {
    return load_config(path.string());
  } catch (const ConfigError& e) {
    throw CommandError("E_CONFIG", e.what());
  } catch (const std::runtime_error& e) {
    throw CommandError("E_CONFIG", e.what());
  }
}

inline Checkpoint load_checkpoint_or_throw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CommandError("E_IO", "checkpoint '" + path.string() + "' not found");
  try {
    return load_checkpoint(path);
  } catch (const FormatError& e) {
    throw CommandError("E_FORMAT", e.what());
  }
}

inline void write_or_throw(const std::filesystem::path& path, const std::string& contents) {
  try {
    write_file_atomic(path, contents);
  } catch (const std::runtime_error& e) {
    throw CommandError("E_IO", e.what());
  }
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw CommandError("E_IO", "cannot create directory '" + dir.string() + "'");
  }
}

inline void check_shapes(const Checkpoint& ck, const SacConfig& sac) {
  const GaussianPolicy expect_pi(kObsDim, kActionDim, sac.hidden, sac.activation);
  const TwinCritic expect_q(kObsDim, kActionDim, sac.hidden, sac.activation);
  if (!ck.policy.trunk.same_shape(expect_pi.trunk) || !ck.critics.q1.same_shape(expect_q.q1)) {
    throw CommandError("E_SHAPE", "checkpoint network shapes do not match the configuration");
  }
}

}  // namespace cmd_detail

// Eval sets: a list file naming one goal-trajectory file per line, paths
// relative to the list file.
inline std::vector<GoalTrajectory> load_eval_set(const std::filesystem::path& list) {
  std::ifstream in(list);
  if (!in) throw CommandError("E_IO", "cannot open eval set '" + list.string() + "'");
  std::vector<GoalTrajectory> sets;
  std::string line;
  while (std::getline(in, line)) {
    line = config_detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const std::filesystem::path p = list.parent_path() / line;
    try {
      sets.push_back(load_goal_trajectory(p.string()));
    } catch (const std::exception& e) {
      throw CommandError("E_IO", e.what());
    }
  }
  if (sets.empty()) throw CommandError("E_IO", "eval set '" + list.string() + "' lists no trajectories");
  return sets;
}

struct TrainOutputs {
  std::filesystem::path checkpoint, metrics, resolved_config, log;
  TrainResult result;
};

inline TrainOutputs cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                              std::uint64_t seed, std::ostream* progress = nullptr) {
  const RunConfig cfg = cmd_detail::load_config_or_throw(config_path);
  cmd_detail::ensure_dir(out_dir);
  TrainOutputs out;
  out.checkpoint = out_dir / "checkpoint.txt";
  out.metrics = out_dir / "metrics.csv";
  out.resolved_config = out_dir / "config.resolved";
  out.log = out_dir / "train.log";
  cmd_detail::write_or_throw(out.resolved_config, config_to_string(cfg));

  std::string log;
  try {
    out.result = train_sac(cfg, seed, [&](const EpisodeMetrics& m) {
      std::ostringstream ls;
      ls << "episode " << m.episode << " return " << m.episode_return << " wall_seconds " << std::fixed
         << std::setprecision(3) << m.wall_seconds << '\n';
      log += ls.str();
      if (progress) *progress << ls.str() << std::flush;
    });
  } catch (const std::runtime_error& e) {
    throw CommandError("E_TRAIN", e.what());
  }
  std::string csv = metrics_header();
  for (const auto& m : out.result.metrics) csv += metrics_row(m);
  cmd_detail::write_or_throw(out.metrics, csv);
  cmd_detail::write_or_throw(out.checkpoint, checkpoint_to_string(out.result.checkpoint));
  cmd_detail::write_or_throw(out.log, log);
  return out;
}

struct EvalSummary {
  EvalReport report;
  std::string text;  // per-episode lines and the mean
};

inline std::string format_eval(const EvalReport& rep) {
  std::string s = "episode,return,failed\n";
  for (std::size_t k = 0; k < rep.returns.size(); ++k) {
    s += std::to_string(k) + "," + config_detail::fmt(rep.returns[k]) + "," + (rep.failed[k] ? "1" : "0") + "\n";
  }
  s += "mean," + config_detail::fmt(rep.mean()) + ",\n";
  return s;
}

// Deterministic rollouts of a checkpoint. With `config_path` the environment
// comes from that file and the checkpoint must match its network shapes.
inline EvalSummary cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& eval_set,
                            int episodes, std::uint64_t seed,
                            const std::optional<std::filesystem::path>& config_path = std::nullopt) {
  const Checkpoint ck = cmd_detail::load_checkpoint_or_throw(checkpoint);
  RunConfig cfg = ck.config;
  if (config_path) {
    cfg = cmd_detail::load_config_or_throw(*config_path);
    cmd_detail::check_shapes(ck, cfg.sac);
  } else {
    cmd_detail::check_shapes(ck, ck.config.sac);
  }
  std::vector<GoalTrajectory> sets = load_eval_set(eval_set);
  if (episodes < 0) throw CommandError("E_ARG", "--episodes must be >= 0");
  if (episodes > 0 && static_cast<std::size_t>(episodes) < sets.size()) sets.resize(static_cast<std::size_t>(episodes));
  EvalSummary s;
  s.report = evaluate(cfg.params, deterministic_policy(ck.policy), sets, seed);
  s.text = format_eval(s.report);
  return s;
}

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> tp, cp, dr;  // mean eval return per seed
  std::string csv;
};

// TP: face centers. TP+CP: policy trained on the nominal environment.
// TP+CP+DR: policy trained and evaluated with randomization enabled.
inline AblationResult cmd_ablate(const std::filesystem::path& config_path, const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& eval_set, std::ostream* progress = nullptr) {
  const RunConfig cfg = cmd_detail::load_config_or_throw(config_path);
  if (seeds.empty()) throw CommandError("E_ARG", "at least one seed is required");
  const std::vector<GoalTrajectory> sets = load_eval_set(eval_set);
  RunConfig dr_cfg = cfg;
  dr_cfg.params.randomization.enabled = true;
  AblationResult out;
  out.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    out.tp.push_back(evaluate(cfg.params, face_center_policy(), sets, seed).mean());
    try {
      const TrainResult cp = train_sac(cfg, seed);
      out.cp.push_back(evaluate(cfg.params, deterministic_policy(cp.checkpoint.policy), sets, seed).mean());
      const TrainResult dr = train_sac(dr_cfg, seed);
      out.dr.push_back(evaluate(dr_cfg.params, deterministic_policy(dr.checkpoint.policy), sets, seed).mean());
    } catch (const std::runtime_error& e) {
      throw CommandError("E_TRAIN", e.what());
    }
    if (progress) {
      *progress << "seed " << seed << " TP " << out.tp.back() << " TP+CP " << out.cp.back() << " TP+CP+DR "
                << out.dr.back() << '\n'
                << std::flush;
    }
  }
  auto row = [&](const std::string& name, const std::vector<double>& v) {
    double mean = 0.0;
    std::string r = name;
    for (double x : v) {
      r += "," + config_detail::fmt(x);
      mean += x / static_cast<double>(v.size());
    }
    return r + "," + config_detail::fmt(mean) + "\n";
  };
  out.csv = "variant";
  for (std::uint64_t s : seeds) out.csv += ",seed_" + std::to_string(s);
  out.csv += ",mean\n" + row("TP", out.tp) + row("TP+CP", out.cp) + row("TP+CP+DR", out.dr);
  return out;
}

inline std::string trace_header() {
  std::string h = "#cubemanip-trace " + std::to_string(kTraceVersion) + ",time,cube_x,cube_y,cube_z,cube_qw,cube_qx,cube_qy,cube_qz";
  for (int f = 0; f < kNumFingers; ++f) {
    for (char c : {'x', 'y', 'z'}) h += ",tip" + std::to_string(f) + "_" + c;
  }
  for (int j = 0; j < kNumJoints; ++j) h += ",tau" + std::to_string(j);
  return h + ",primitive,reward\n";
}

inline std::string trace_line(const TraceRecord& r) {
  using config_detail::fmt;
  std::string s = fmt(r.time);
  const Vec3& p = r.cube.position;
  const UnitQuat& q = r.cube.orientation;
  for (double x : {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z()}) s += "," + fmt(x);
  for (const Vec3& t : r.tips) {
    for (int i = 0; i < 3; ++i) s += "," + fmt(t[i]);
  }
  for (int j = 0; j < kNumJoints; ++j) s += "," + fmt(r.torques[j]);
  s += ",";
  s += primitive_name(r.primitive);
  return s + "," + fmt(r.reward) + "\n";
}

struct RolloutOutcome {
  double episode_return = 0.0;
  long sim_steps = 0;
  std::vector<Primitive> primitives;  // per control tick
};

// Rolls out one episode and writes a per-simulation-step trace. Without a
// checkpoint the face-center baseline acts.
inline RolloutOutcome cmd_rollout(const std::optional<std::filesystem::path>& checkpoint, std::uint64_t seed,
                                  const std::filesystem::path& trace_path,
                                  const std::optional<std::filesystem::path>& config_path = std::nullopt,
                                  const std::optional<std::filesystem::path>& goal_path = std::nullopt) {
  RunConfig cfg;
  finalize(cfg);
  PolicyFn policy = face_center_policy();
  if (checkpoint) {
    const Checkpoint ck = cmd_detail::load_checkpoint_or_throw(*checkpoint);
    cfg = ck.config;
    policy = deterministic_policy(ck.policy);
  }
  if (config_path) cfg = cmd_detail::load_config_or_throw(*config_path);
  std::optional<GoalTrajectory> goals;
  if (goal_path) {
    try {
      goals = load_goal_trajectory(goal_path->string());
    } catch (const std::exception& e) {
      throw CommandError("E_IO", e.what());
    }
  }
  {
    std::ofstream probe(trace_path.string() + ".tmp");
    if (!probe) throw CommandError("E_IO", "cannot write '" + trace_path.string() + "'");
  }
  std::string text = trace_header();
  Env env(cfg.params);
  RolloutOutcome out;
  env.set_trace([&](const TraceRecord& r) {
    text += trace_line(r);
    ++out.sim_steps;
  });
  out.episode_return = run_episode(env, seed, goals ? &*goals : nullptr, policy).episode_return;
  out.primitives = env.primitive_log();
  cmd_detail::write_or_throw(trace_path, text);
  return out;
}

inline std::string cmd_schema() {
  RunConfig cfg;
  finalize(cfg);
  std::ostringstream os;
  write_config(os, cfg, true);
  return os.str();
}

// Writes `count` sampled goal trajectories plus a list file into `out_dir`.
inline std::filesystem::path cmd_goals(const std::optional<std::filesystem::path>& config_path, std::uint64_t seed,
                                       int count, const std::filesystem::path& out_dir) {
  RunConfig cfg;
  finalize(cfg);
  if (config_path) cfg = cmd_detail::load_config_or_throw(*config_path);
  if (count <= 0) throw CommandError("E_ARG", "--count must be > 0");
  cmd_detail::ensure_dir(out_dir);
  Rng rng(seed);
  std::string list;
  for (int k = 0; k < count; ++k) {
    std::ostringstream name;
    name << "traj_" << std::setw(2) << std::setfill('0') << k << ".txt";
    std::ostringstream body;
    body << "# x y z duration\n";
    write_goal_trajectory(body, sample_goal_trajectory(rng, cfg.params.env, cfg.params.sim.arena_radius));
    cmd_detail::write_or_throw(out_dir / name.str(), body.str());
    list += name.str() + "\n";
  }
  const auto list_path = out_dir / "eval_set.txt";
  cmd_detail::write_or_throw(list_path, list);
  return list_path;
}

// QP instance text:
//   contact px py pz nx ny nz   (one line per contact; n points into the body)
//   wrench fx fy fz tx ty tz
//   mu <value>
//   fmax <value>
//   com x y z                   (optional, default origin)
inline std::string cmd_qp(std::istream& in, const std::string& name = "<qp>") {
  std::vector<Vec3> points, normals;
  std::optional<Vector6> wrench;
  double mu = 0.8, fmax = 10.0;
  Vec3 com = Vec3::Zero();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = config_detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    std::string rest;
    std::getline(ls, rest);
    std::vector<double> v;
    try {
      v = config_detail::parse_numbers(rest);
    } catch (const std::exception& e) {
      throw CommandError("E_FORMAT", name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto need = [&](std::size_t n) {
      if (v.size() != n) {
        throw CommandError("E_FORMAT", name + ":" + std::to_string(lineno) + ": '" + tag + "' takes " +
                                           std::to_string(n) + " numbers");
      }
    };
    if (tag == "contact") {
      need(6);
      points.emplace_back(v[0], v[1], v[2]);
      normals.push_back(Vec3(v[3], v[4], v[5]).normalized());
    } else if (tag == "wrench") {
      need(6);
      wrench = Vector6(Eigen::Map<const Vector6>(v.data()));
    } else if (tag == "mu") {
      need(1);
      mu = v[0];
    } else if (tag == "fmax") {
      need(1);
      fmax = v[0];
    } else if (tag == "com") {
      need(3);
      com = Vec3(v[0], v[1], v[2]);
    } else {
      throw CommandError("E_FORMAT", name + ":" + std::to_string(lineno) + ": unknown record '" + tag + "'");
    }
  }
  if (points.empty() || !wrench) throw CommandError("E_FORMAT", name + ": need at least one contact and a wrench");
  ContactForces cf;
  try {
    WrenchTarget w{wrench->head<3>(), wrench->tail<3>()};
    cf = solve_contact_forces(grasp_matrix(points, com), normals, w, FrictionPyramid{mu, true}, fmax);
  } catch (const std::invalid_argument& e) {
    throw CommandError("E_ARG", e.what());
  }
  using config_detail::fmt;
  std::string s = std::string("status ") + (cf.ok() ? "solved" : "infeasible") + "\n";
  for (std::size_t i = 0; i < cf.forces.size(); ++i) {
    s += "force " + std::to_string(i) + " " + fmt(cf.forces[i].x()) + " " + fmt(cf.forces[i].y()) + " " +
         fmt(cf.forces[i].z()) + "\n";
  }
  s += "equality_residual " + fmt(cf.equality_residual) + "\n";
  s += "max_violation " + fmt(cf.max_violation) + "\n";
  s += "objective " + fmt(cf.objective) + "\n";
  s += "iterations " + std::to_string(cf.iterations) + "\n";
  return s;
}

}  // namespace cubemanip
