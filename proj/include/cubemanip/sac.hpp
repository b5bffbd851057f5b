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

// Soft actor-critic with a fixed entropy weight. Networks are small dense
// maps in double precision with hand-written backward passes; a batch is a
// matrix with one sample per column.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubemanip/geom.hpp"

namespace cubemanip {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Rng = std::mt19937_64;

struct RewardParams {
  double scale = 0.001;
  double sharpness = 300.0;
};

inline double reward(const Vec3& p_goal, const Vec3& p_cube, const RewardParams& rp = {}) {
  return rp.scale * std::exp(-rp.sharpness * (p_goal - p_cube).squaredNorm());
}

enum class Activation { kRelu, kTanh };

inline std::string activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

// Dense feedforward map; linear output layer. Parameters live in one flat
// vector, layer by layer: W (out x in, column-major) then b.
class Mlp {
 public:
  struct Cache {
    std::vector<MatrixXd> inputs;  // input to each layer
    std::vector<MatrixXd> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("Mlp: layer sizes must be > 0");
      offsets_.push_back(n);
      n += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params = VectorXd::Zero(n);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  Eigen::Index num_params() const { return params.size(); }
  bool same_shape(const Mlp& o) const { return sizes_ == o.sizes_ && act_ == o.act_; }

  Eigen::Map<const MatrixXd> W(int l) const {
    return {params.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const VectorXd> b(int l) const {
    return {params.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
  }

  // Uniform fan-in initialization; the output layer is scaled by `out_scale`.
  void init(Rng& rng, double out_scale = 1.0) {
    for (int l = 0; l < layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l])) * (l + 1 == layers() ? out_scale : 1.0);
      std::uniform_real_distribution<double> U(-bound, bound);
      const Eigen::Index count = Eigen::Index(sizes_[l + 1]) * (sizes_[l] + 1);
      for (Eigen::Index i = 0; i < count; ++i) params[offsets_[l] + i] = U(rng);
    }
  }

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
    if (x.rows() != input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    MatrixXd h = x;
    for (int l = 0; l < layers(); ++l) {
      MatrixXd z = W(l) * h;
      z.colwise() += b(l);
      if (cache) {
        cache->inputs.push_back(h);
        cache->pre.push_back(z);
      }
      h = l + 1 == layers() ? z : activate(z);
    }
    return h;
  }

  // Adds dLoss/dparams into `grad` and returns dLoss/dinput.
  MatrixXd backward(const Cache& cache, const MatrixXd& dy, VectorXd& grad) const {
    if (grad.size() != num_params()) grad = VectorXd::Zero(num_params());
    MatrixXd d = dy;
    for (int l = layers() - 1; l >= 0; --l) {
      if (l + 1 != layers()) d = d.cwiseProduct(activate_derivative(cache.pre[l]));
      Eigen::Map<MatrixXd> gW(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<VectorXd> gb(grad.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]);
      gW.noalias() += d * cache.inputs[l].transpose();
      gb += d.rowwise().sum();
      d = W(l).transpose() * d;
    }
    return d;
  }

  VectorXd params;

 private:
  MatrixXd activate(const MatrixXd& z) const {
    return act_ == Activation::kRelu ? MatrixXd(z.cwiseMax(0.0)) : MatrixXd(z.array().tanh());
  }
  MatrixXd activate_derivative(const MatrixXd& z) const {
    if (act_ == Activation::kRelu) return (z.array() > 0.0).cast<double>();
    return 1.0 - z.array().tanh().square();
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation act_ = Activation::kRelu;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionClip = 1.0 - 1e-6;

// log(1 - tanh(u)^2), stable for large |u|.
inline double log1m_tanh2(double u) {
  const double x = -2.0 * u;
  const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return 2.0 * (std::numbers::ln2 - u - softplus);
}

// Trunk maps a state to [mean; raw log-std], each of action_dim rows.
struct GaussianPolicy {
  Mlp trunk;

  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden, Activation act) {
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_dim);
    trunk = Mlp(sizes, act);
  }

  int state_dim() const { return trunk.input_dim(); }
  int action_dim() const { return trunk.output_dim() / 2; }
};

struct PolicyOutput {
  MatrixXd mean;
  MatrixXd log_std;  // clamped
  MatrixXd raw_log_std;
};

inline PolicyOutput policy_forward(const GaussianPolicy& pi, const MatrixXd& states, Mlp::Cache* cache = nullptr) {
  const MatrixXd out = pi.trunk.forward(states, cache);
  const int d = pi.action_dim();
  PolicyOutput po;
  po.mean = out.topRows(d);
  po.raw_log_std = out.bottomRows(d);
  po.log_std = po.raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return po;
}

inline double gaussian_log_density(double x, double mean, double log_std) {
  const double z = (x - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

// log pi(a|s) of a tanh-squashed Gaussian; components at +-1 are clipped.
inline double log_prob_squashed(const GaussianPolicy& pi, const VectorXd& state, const VectorXd& action) {
  if (action.size() != pi.action_dim()) throw std::invalid_argument("log_prob_squashed: action dimension mismatch");
  const PolicyOutput po = policy_forward(pi, state);
  double lp = 0.0;
  for (int i = 0; i < pi.action_dim(); ++i) {
    const double a = std::clamp(action[i], -kActionClip, kActionClip);
    lp += gaussian_log_density(std::atanh(a), po.mean(i, 0), po.log_std(i, 0)) - std::log1p(-a * a);
  }
  return lp;
}

inline VectorXd sample_action(const GaussianPolicy& pi, const VectorXd& state, bool deterministic, Rng& rng) {
  if (state.size() != pi.state_dim()) throw std::invalid_argument("sample_action: state dimension mismatch");
  const PolicyOutput po = policy_forward(pi, state);
  VectorXd u = po.mean.col(0);
  if (!deterministic) {
    std::normal_distribution<double> N(0.0, 1.0);
    for (int i = 0; i < u.size(); ++i) u[i] += std::exp(po.log_std(i, 0)) * N(rng);
  }
  return u.array().tanh();
}

struct TwinCritic {
  Mlp q1, q2, target1, target2;

  TwinCritic() = default;
  TwinCritic(int state_dim, int action_dim, const std::vector<int>& hidden, Activation act) {
    std::vector<int> sizes{state_dim + action_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    q1 = q2 = target1 = target2 = Mlp(sizes, act);
  }

  void sync_targets() {
    target1.params = q1.params;
    target2.params = q2.params;
  }
};

inline MatrixXd stack_rows(const MatrixXd& top, const MatrixXd& bottom) {
  MatrixXd m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

struct Transition {
  VectorXd s, a;
  double r = 0.0;
  VectorXd s2;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  void push(Transition t) {
    if (!std::isfinite(t.r)) throw std::invalid_argument("ReplayBuffer: non-finite reward");
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("ReplayBuffer: empty");
    std::uniform_int_distribution<std::size_t> U(0, items_.size() - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = U(rng);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

struct Batch {
  MatrixXd s, a, s2;
  VectorXd r, done;

  Eigen::Index size() const { return s.cols(); }
};

inline Batch gather(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
  const Transition& t0 = buf.at(idx.front());
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  Batch b{MatrixXd(t0.s.size(), n), MatrixXd(t0.a.size(), n), MatrixXd(t0.s2.size(), n), VectorXd(n), VectorXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = buf.at(idx[j]);
    b.s.col(j) = t.s;
    b.a.col(j) = t.a;
    b.s2.col(j) = t.s2;
    b.r[j] = t.r;
    b.done[j] = t.done ? 1.0 : 0.0;
  }
  return b;
}

struct SacConfig {
  double gamma = 0.99;
  double alpha = 0.05;
  double tau = 0.005;
  double learning_rate = 3e-4;
  int batch_size = 256;
  std::size_t buffer_capacity = 100000;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("sac.gamma must be in (0, 1)");
    if (!(alpha > 0.0)) throw std::invalid_argument("sac.alpha must be > 0");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("sac.tau must be in (0, 1]");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("sac.learning_rate must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("sac.batch_size must be > 0");
    if (buffer_capacity == 0) throw std::invalid_argument("sac.buffer_capacity must be > 0");
    for (int h : hidden) {
      if (h <= 0) throw std::invalid_argument("sac.hidden sizes must be > 0");
    }
  }
};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  VectorXd m, v;
  long step_count = 0;

  void step(VectorXd& params, const VectorXd& grad, double lr) {
    if (m.size() != params.size()) {
      m = VectorXd::Zero(params.size());
      v = VectorXd::Zero(params.size());
    }
    ++step_count;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params -= lr * ((m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
  }
};

// target <- (1 - tau) target + tau main; tau = 1 copies exactly.
inline void soft_update(Mlp& target, const Mlp& main, double tau) {
  if (!target.same_shape(main)) throw std::invalid_argument("soft_update: shape mismatch");
  if (tau == 1.0) {
    target.params = main.params;
    return;
  }
  target.params += tau * (main.params - target.params);
}

// Reparameterized squashed sample for a batch with given standard-normal
// noise, plus the pieces the backward pass needs.
struct SquashedSample {
  PolicyOutput po;
  MatrixXd u, a;
  VectorXd log_prob;
};

inline SquashedSample squashed_sample(const GaussianPolicy& pi, const MatrixXd& states, const MatrixXd& noise,
                                      Mlp::Cache* cache = nullptr) {
  SquashedSample s;
  s.po = policy_forward(pi, states, cache);
  s.u = s.po.mean + (s.po.log_std.array().exp() * noise.array()).matrix();
  s.a = s.u.array().tanh();
  s.log_prob = VectorXd::Zero(states.cols());
  const double c = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.u.rows(); ++i) {
      const double e = noise(i, j);
      s.log_prob[j] += -0.5 * e * e - s.po.log_std(i, j) - c - log1m_tanh2(s.u(i, j));
    }
  }
  return s;
}

inline VectorXd min_q(const Mlp& q1, const Mlp& q2, const MatrixXd& sa) {
  return q1.forward(sa).row(0).transpose().cwiseMin(q2.forward(sa).row(0).transpose());
}

// y = r + gamma (1 - done) (min target Q(s', a') - alpha log pi(a'|s')).
inline VectorXd critic_targets(const GaussianPolicy& pi, const TwinCritic& qc, const Batch& b, const MatrixXd& noise,
                               const SacConfig& cfg) {
  const SquashedSample next = squashed_sample(pi, b.s2, noise);
  const VectorXd q_next = min_q(qc.target1, qc.target2, stack_rows(b.s2, next.a));
  const VectorXd soft = q_next - cfg.alpha * next.log_prob;
  return b.r + (cfg.gamma * (1.0 - b.done.array()) * soft.array()).matrix();
}

struct CriticGrad {
  double loss = 0.0;  // mse(Q1) + mse(Q2)
  VectorXd g1, g2;
};

inline CriticGrad critic_loss_and_grad(const TwinCritic& qc, const Batch& b, const VectorXd& y) {
  CriticGrad out;
  const MatrixXd sa = stack_rows(b.s, b.a);
  const double n = static_cast<double>(b.size());
  auto one = [&](const Mlp& q, VectorXd& g) {
    Mlp::Cache cache;
    const VectorXd pred = q.forward(sa, &cache).row(0).transpose();
    const VectorXd diff = pred - y;
    out.loss += diff.squaredNorm() / n;
    g = VectorXd::Zero(q.num_params());
    q.backward(cache, (2.0 / n) * diff.transpose(), g);
  };
  one(qc.q1, out.g1);
  one(qc.q2, out.g2);
  return out;
}

struct ActorGrad {
  double loss = 0.0;
  double entropy = 0.0;  // -mean log pi
  VectorXd g;
};

// loss = mean(alpha log pi(a|s) - min(Q1, Q2)(s, a)), a = tanh(mean + std * noise).
inline ActorGrad actor_loss_and_grad(const GaussianPolicy& pi, const TwinCritic& qc, const MatrixXd& states,
                                     const MatrixXd& noise, double alpha) {
  Mlp::Cache pcache;
  const SquashedSample s = squashed_sample(pi, states, noise, &pcache);
  const MatrixXd sa = stack_rows(states, s.a);
  Mlp::Cache c1, c2;
  const VectorXd v1 = qc.q1.forward(sa, &c1).row(0).transpose();
  const VectorXd v2 = qc.q2.forward(sa, &c2).row(0).transpose();
  const Eigen::Index n = states.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  ActorGrad out;
  MatrixXd up1 = MatrixXd::Zero(1, n), up2 = MatrixXd::Zero(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool first = v1[j] <= v2[j];
    out.loss += inv_n * (alpha * s.log_prob[j] - (first ? v1[j] : v2[j]));
    (first ? up1 : up2)(0, j) = -inv_n;
  }
  out.entropy = -s.log_prob.mean();

  // dLoss/da through the critics; their parameter gradients are discarded.
  VectorXd scratch;
  const int da = pi.action_dim();
  const MatrixXd ga = qc.q1.backward(c1, up1, scratch).bottomRows(da) + qc.q2.backward(c2, up2, scratch).bottomRows(da);

  MatrixXd d_out(2 * da, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int i = 0; i < da; ++i) {
      const double a = s.a(i, j);
      const double sigma_eps = std::exp(s.po.log_std(i, j)) * noise(i, j);
      const double du = alpha * inv_n * 2.0 * a + ga(i, j) * (1.0 - a * a);
      d_out(i, j) = du;
      const double raw = s.po.raw_log_std(i, j);
      const bool active = raw > kLogStdMin && raw < kLogStdMax;
      d_out(da + i, j) = active ? (-alpha * inv_n + du * sigma_eps) : 0.0;
    }
  }
  out.g = VectorXd::Zero(pi.trunk.num_params());
  pi.trunk.backward(pcache, d_out, out.g);
  return out;
}

struct LossReport {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;
};

class SacAgent {
 public:
  SacAgent(int state_dim, int action_dim, SacConfig cfg)
      : cfg_(std::move(cfg)),
        policy_(state_dim, action_dim, cfg_.hidden, cfg_.activation),
        critics_(state_dim, action_dim, cfg_.hidden, cfg_.activation),
        rng_(cfg_.seed) {
    cfg_.validate();
    policy_.trunk.init(rng_, 1e-2);
    critics_.q1.init(rng_);
    critics_.q2.init(rng_);
    critics_.sync_targets();
  }

  const SacConfig& config() const { return cfg_; }
  GaussianPolicy& policy() { return policy_; }
  const GaussianPolicy& policy() const { return policy_; }
  TwinCritic& critics() { return critics_; }
  const TwinCritic& critics() const { return critics_; }
  Rng& rng() { return rng_; }

  VectorXd act(const VectorXd& state, bool deterministic) { return sample_action(policy_, state, deterministic, rng_); }

  MatrixXd normal_noise(Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> N(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = N(rng_);
    }
    return m;
  }

  LossReport update(const Batch& b) {
    const int da = policy_.action_dim();
    const VectorXd y = critic_targets(policy_, critics_, b, normal_noise(da, b.size()), cfg_);
    const CriticGrad cg = critic_loss_and_grad(critics_, b, y);
    check_finite("critic", cg.loss, cg.g1, cg.g2);
    adam_q1_.step(critics_.q1.params, cg.g1, cfg_.learning_rate);
    adam_q2_.step(critics_.q2.params, cg.g2, cfg_.learning_rate);

    const ActorGrad ag = actor_loss_and_grad(policy_, critics_, b.s, normal_noise(da, b.size()), cfg_.alpha);
    check_finite("actor", ag.loss, ag.g, ag.g);
    adam_pi_.step(policy_.trunk.params, ag.g, cfg_.learning_rate);

    soft_update(critics_.target1, critics_.q1, cfg_.tau);
    soft_update(critics_.target2, critics_.q2, cfg_.tau);
    return {cg.loss, ag.loss, ag.entropy};
  }

 private:
  static void check_finite(const char* what, double loss, const VectorXd& g1, const VectorXd& g2) {
    if (std::isfinite(loss) && g1.allFinite() && g2.allFinite()) return;
    std::ostringstream os;
    os << "non-finite " << what << " update: loss=" << loss << " |g1|=" << g1.norm() << " |g2|=" << g2.norm();
    throw std::runtime_error(os.str());
  }

  SacConfig cfg_;
  GaussianPolicy policy_;
  TwinCritic critics_;
  Rng rng_;
  Adam adam_pi_, adam_q1_, adam_q2_;
};

}  // namespace cubemanip
