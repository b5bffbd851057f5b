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

// Training and evaluation loops over the high-level environment.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cubemanip/config.hpp"
#include "cubemanip/env.hpp"
#include "cubemanip/io.hpp"
#include "cubemanip/sac.hpp"

namespace cubemanip {

// Network input: the observation with positions in decimeters.
inline VectorXd policy_features(const Observation& o) {
  VectorXd v = o.to_vector();
  v.segment<3>(0) *= 10.0;
  v.segment<12>(7) *= 10.0;
  return v;
}

// Independent stream seeds from one run seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct EpisodeMetrics {
  int episode = 0;
  double episode_return = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  int updates = 0;
  double wall_seconds = 0.0;  // not part of the metrics CSV
};

inline std::string metrics_header() {
  return "# cubemanip-metrics " + std::to_string(kMetricsVersion) +
         "\nepisode,return,actor_loss,critic_loss,entropy,updates\n";
}

inline std::string metrics_row(const EpisodeMetrics& m) {
  using config_detail::fmt;
  return std::to_string(m.episode) + "," + fmt(m.episode_return) + "," + fmt(m.actor_loss) + "," +
         fmt(m.critic_loss) + "," + fmt(m.entropy) + "," + std::to_string(m.updates) + "\n";
}

using PolicyFn = std::function<VectorXd(const Observation&)>;

inline PolicyFn face_center_policy() {
  return [](const Observation&) { return VectorXd::Zero(kActionDim).eval(); };
}

inline PolicyFn deterministic_policy(const GaussianPolicy& pi) {
  return [pi](const Observation& o) {
    Rng unused(0);
    return sample_action(pi, policy_features(o), true, unused);
  };
}

struct EpisodeOutcome {
  double episode_return = 0.0;
  bool failed = false;
  std::vector<double> window_rewards;
};

inline EpisodeOutcome run_episode(Env& env, std::uint64_t seed, const GoalTrajectory* goals, const PolicyFn& policy) {
  Observation obs = goals ? env.reset(seed, *goals) : env.reset(seed);
  EpisodeOutcome out;
  while (!env.done()) {
    const StepResult r = env.step(policy(obs));
    out.episode_return += r.reward;
    out.window_rewards.push_back(r.reward);
    out.failed = out.failed || r.failed;
    obs = r.obs;
  }
  return out;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpisodeMetrics> metrics;
};

inline TrainResult train_sac(const RunConfig& cfg, std::uint64_t seed,
                             const std::function<void(const EpisodeMetrics&)>& on_episode = {}) {
  cfg.validate();
  SacConfig sc = cfg.sac;
  sc.seed = derive_seed(seed, 1);
  SacAgent agent(kObsDim, kActionDim, sc);
  ReplayBuffer buffer(sc.buffer_capacity);
  Env env(cfg.params);
  Rng explore(derive_seed(seed, 2));
  std::uniform_real_distribution<double> U(-1.0, 1.0);

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  for (int ep = 0; ep < cfg.train.episodes; ++ep) {
    EpisodeMetrics m;
    m.episode = ep;
    Observation obs = env.reset(derive_seed(seed, 1000 + static_cast<std::uint64_t>(ep)));
    while (!env.done()) {
      const VectorXd s = policy_features(obs);
      VectorXd a(kActionDim);
      if (ep < cfg.train.warmup_episodes) {
        for (int i = 0; i < kActionDim; ++i) a[i] = U(explore);
      } else {
        a = agent.act(s, false);
      }
      const StepResult r = env.step(a);
      m.episode_return += r.reward;
      buffer.push({s, a, r.reward, policy_features(r.obs), r.done});
      obs = r.obs;
      if (buffer.size() < static_cast<std::size_t>(sc.batch_size)) continue;
      for (int u = 0; u < cfg.train.updates_per_step; ++u) {
        const LossReport lr =
            agent.update(gather(buffer, buffer.sample_indices(static_cast<std::size_t>(sc.batch_size), agent.rng())));
        m.actor_loss += lr.actor_loss;
        m.critic_loss += lr.critic_loss;
        m.entropy += lr.entropy;
        ++m.updates;
      }
    }
    if (m.updates > 0) {
      m.actor_loss /= m.updates;
      m.critic_loss /= m.updates;
      m.entropy /= m.updates;
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(m);
    if (on_episode) on_episode(m);
  }
  result.checkpoint = {cfg, seed, agent.policy(), agent.critics()};
  return result;
}

struct EvalReport {
  std::vector<double> returns;
  std::vector<bool> failed;

  double mean() const {
    if (returns.empty()) return 0.0;
    double s = 0.0;
    for (double r : returns) s += r;
    return s / static_cast<double>(returns.size());
  }
};

// Cube start poses come from `seed`; goals are the fixed trajectories.
inline EvalReport evaluate(const EnvParams& params, const PolicyFn& policy, const std::vector<GoalTrajectory>& goal_sets,
                           std::uint64_t seed) {
  Env env(params);
  EvalReport rep;
  for (std::size_t k = 0; k < goal_sets.size(); ++k) {
    const EpisodeOutcome o = run_episode(env, derive_seed(seed, 5000 + k), &goal_sets[k], policy);
    rep.returns.push_back(o.episode_return);
    rep.failed.push_back(o.failed);
  }
  return rep;
}

}  // namespace cubemanip
