#pragma once

// TD3 with the spiking actor in the actor slot: clipped double-Q targets with
// target-policy smoothing, delayed actor updates and Polyak-averaged targets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgrl/checkpoint.hpp"
#include "sgrl/critic.hpp"
#include "sgrl/error.hpp"
#include "sgrl/spiking_actor.hpp"
#include "sgrl/surrogate.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

// Noise standard deviations and clips are fractions of each action bound.
struct Td3Config {
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  std::size_t policy_delay = 2;
  double target_noise_std = 0.2;
  double target_noise_clip = 0.5;
  double exploration_noise_std = 0.1;
  std::size_t batch_size = 100;
  std::size_t warmup_steps = 1000;
  std::size_t buffer_capacity = 100000;

  friend bool operator==(const Td3Config&, const Td3Config&) = default;
};

inline void validate(const Td3Config& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ValidationError("gamma", "must lie in (0, 1]");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ValidationError("tau", "must lie in (0, 1]");
  if (!(c.actor_lr > 0.0)) throw ValidationError("actor_lr", "must be > 0");
  if (!(c.critic_lr > 0.0)) throw ValidationError("critic_lr", "must be > 0");
  if (c.policy_delay < 1) throw ValidationError("policy_delay", "must be >= 1");
  if (!(c.target_noise_std >= 0.0)) throw ValidationError("target_noise_std", "must be >= 0");
  if (!(c.target_noise_clip >= 0.0)) throw ValidationError("target_noise_clip", "must be >= 0");
  if (!(c.exploration_noise_std >= 0.0)) throw ValidationError("exploration_noise_std", "must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
  if (c.buffer_capacity < c.batch_size) throw ValidationError("buffer_capacity", "must be >= batch_size");
}

// ---------------------------------------------------------------------------
// Replay

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Batch {
  Matrix s, a, r, s_next, done;  // r and done are batch x 1
  std::size_t size() const { return s.rows(); }
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim)
      : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim),
        s_(capacity, obs_dim), a_(capacity, act_dim), r_(capacity, 1), s_next_(capacity, obs_dim),
        done_(capacity, 1) {
    require(capacity > 0, "ReplayBuffer: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }

  void push(const Transition& t) {
    require(t.s.size() == obs_dim_ && t.s_next.size() == obs_dim_ && t.a.size() == act_dim_,
            "ReplayBuffer::push: transition dimensions do not match buffer");
    std::copy(t.s.begin(), t.s.end(), s_.row(cursor_).begin());
    std::copy(t.a.begin(), t.a.end(), a_.row(cursor_).begin());
    std::copy(t.s_next.begin(), t.s_next.end(), s_next_.row(cursor_).begin());
    r_(cursor_, 0) = t.r;
    done_(cursor_, 0) = t.done ? 1.0 : 0.0;
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  Transition at(std::size_t slot) const {
    require(slot < size_, "ReplayBuffer::at: slot out of range");
    Transition t;
    t.s.assign(s_.row(slot).begin(), s_.row(slot).end());
    t.a.assign(a_.row(slot).begin(), a_.row(slot).end());
    t.s_next.assign(s_next_.row(slot).begin(), s_next_.row(slot).end());
    t.r = r_(slot, 0);
    t.done = done_(slot, 0) != 0.0;
    return t;
  }

  // Stored transitions, oldest first.
  std::vector<Transition> contents() const {
    std::vector<Transition> out;
    const std::size_t start = size_ < capacity_ ? 0 : cursor_;
    for (std::size_t i = 0; i < size_; ++i) out.push_back(at((start + i) % capacity_));
    return out;
  }

  // Uniform with replacement over stored items.
  Batch sample(std::size_t n, Rng& rng) const {
    require(size_ > 0, "ReplayBuffer::sample: buffer is empty");
    Batch b{Matrix(n, obs_dim_), Matrix(n, act_dim_), Matrix(n, 1), Matrix(n, obs_dim_), Matrix(n, 1)};
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.below(size_);
      std::copy(s_.row(k).begin(), s_.row(k).end(), b.s.row(i).begin());
      std::copy(a_.row(k).begin(), a_.row(k).end(), b.a.row(i).begin());
      std::copy(s_next_.row(k).begin(), s_next_.row(k).end(), b.s_next.row(i).begin());
      b.r(i, 0) = r_(k, 0);
      b.done(i, 0) = done_(k, 0);
    }
    return b;
  }

 private:
  std::size_t capacity_ = 0, obs_dim_ = 0, act_dim_ = 0;
  std::size_t cursor_ = 0, size_ = 0;
  Matrix s_, a_, r_, s_next_, done_;
};

// ---------------------------------------------------------------------------
// Agent state

struct Td3State {
  ActorParams actor, actor_target;
  CriticPair critics, critics_target;
  ReplayBuffer buffer;
  AdamState actor_opt, critic1_opt, critic2_opt;
  std::uint64_t update_count = 0;
};

inline constexpr double kMinEncoderSigma = 1e-3;

namespace detail {
template <class Params>
std::vector<const Matrix*> param_ptrs(const Params& p) {
  std::vector<const Matrix*> out;
  for (auto& [name, m] : named_parameters(p)) out.push_back(m);
  return out;
}
template <class Params>
std::vector<Matrix*> param_ptrs_mut(Params& p) {
  std::vector<Matrix*> out;
  for (auto& [name, m] : named_parameters(p)) out.push_back(m);
  return out;
}
}  // namespace detail

inline Td3State make_td3_state(const ActorArchitecture& arch, const std::vector<std::size_t>& critic_hidden,
                               const Td3Config& cfg, Rng& rng) {
  validate(cfg);
  Td3State st;
  st.actor = init_actor(arch, rng);
  st.critics.q1 = init_mlp(arch.obs_dim + arch.action_dim, critic_hidden, rng);
  st.critics.q2 = init_mlp(arch.obs_dim + arch.action_dim, critic_hidden, rng);
  st.actor_target = st.actor;
  st.critics_target = st.critics;
  st.buffer = ReplayBuffer(cfg.buffer_capacity, arch.obs_dim, arch.action_dim);
  const AdamConfig actor_adam{cfg.actor_lr};
  const AdamConfig critic_adam{cfg.critic_lr};
  st.actor_opt = AdamState(actor_adam, detail::param_ptrs(st.actor));
  st.critic1_opt = AdamState(critic_adam, detail::param_ptrs(st.critics.q1));
  st.critic2_opt = AdamState(critic_adam, detail::param_ptrs(st.critics.q2));
  return st;
}

// target <- tau * live + (1 - tau) * target, parameter by parameter.
template <class Params>
void soft_update(const Params& live, Params& target, double tau) {
  require(tau >= 0.0 && tau <= 1.0, "soft_update: tau outside [0, 1]");
  auto src = named_parameters(live);
  auto dst = named_parameters(target);
  require(src.size() == dst.size(), "soft_update: parameter lists differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Matrix& l = *src[i].second;
    Matrix& t = *dst[i].second;
    require(l.same_shape(t), "soft_update: shape mismatch in " + src[i].first);
    if (tau == 1.0) {
      t = l;
      continue;
    }
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * l[j] + (1.0 - tau) * t[j];
  }
}

inline void soft_update(const CriticPair& live, CriticPair& target, double tau) {
  soft_update(live.q1, target.q1, tau);
  soft_update(live.q2, target.q2, tau);
}

inline Matrix clamp_actions(Matrix a, const std::vector<double>& bound) {
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) a(r, c) = std::clamp(a(r, c), -bound[c], bound[c]);
  return a;
}

// y = r + gamma * (1 - d) * min(Q1', Q2'), elementwise over the batch.
inline Matrix td_targets(const Matrix& r, const Matrix& done, const Matrix& q1, const Matrix& q2,
                         double gamma) {
  require(r.same_shape(done) && r.same_shape(q1) && r.same_shape(q2), "td_targets: shape mismatch");
  Matrix y(r.rows(), 1);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = r[i] + gamma * (1.0 - done[i]) * std::min(q1[i], q2[i]);
  return y;
}

inline Matrix compute_target(const Td3State& st, const Td3Config& cfg, const Batch& batch, Rng& rng) {
  require(batch.size() > 0, "compute_target: empty batch");
  const auto& bound = st.actor.action_bound;
  Matrix a_next = actor_forward(st.actor_target, batch.s_next).action;
  for (std::size_t r = 0; r < a_next.rows(); ++r)
    for (std::size_t c = 0; c < a_next.cols(); ++c) {
      const double clip = cfg.target_noise_clip * bound[c];
      const double noise = std::clamp(gauss(rng, 0.0, cfg.target_noise_std * bound[c]), -clip, clip);
      a_next(r, c) += noise;
    }
  a_next = clamp_actions(std::move(a_next), bound);
  const Matrix q1 = critic_forward(st.critics_target.q1, batch.s_next, a_next).q;
  const Matrix q2 = critic_forward(st.critics_target.q2, batch.s_next, a_next).q;
  return td_targets(batch.r, batch.done, q1, q2, cfg.gamma);
}

namespace detail {
inline double regress_critic(MlpParams& net, AdamState& opt, const Batch& batch, const Matrix& y) {
  const MlpCache cache = critic_forward(net, batch.s, batch.a);
  const double n = double(batch.size());
  Matrix dl_dq(batch.size(), 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < dl_dq.size(); ++i) {
    const double resid = cache.q[i] - y[i];
    loss += resid * resid;
    dl_dq[i] = 2.0 * resid / n;
  }
  const MlpGrads g = critic_backward_params(net, cache, dl_dq);
  const auto params = param_ptrs_mut(net);
  const auto grads = g.flat();
  adam_step(opt, params, grads);
  return loss / n;
}
}  // namespace detail

// One Adam step on each critic's mean squared TD error; returns the losses
// measured before the step.
inline std::pair<double, double> critic_update(Td3State& st, const Td3Config& cfg, const Batch& batch,
                                               const Matrix& targets) {
  require(targets.rows() == batch.size() && targets.cols() == 1, "critic_update: targets shape");
  st.critic1_opt.config.lr = cfg.critic_lr;
  st.critic2_opt.config.lr = cfg.critic_lr;
  const double l1 = detail::regress_critic(st.critics.q1, st.critic1_opt, batch, targets);
  const double l2 = detail::regress_critic(st.critics.q2, st.critic2_opt, batch, targets);
  return {l1, l2};
}

// Ascends mean Q1(s, actor(s)) by one Adam step. Only legal on update counts
// that are multiples of policy_delay. Returns mean Q1 before the step.
inline double actor_update(Td3State& st, const Td3Config& cfg, const Batch& batch, const SurrogateSpec& spec) {
  require(st.update_count % cfg.policy_delay == 0,
          "actor_update: called off the policy_delay schedule");
  const ForwardTrace tr = actor_forward(st.actor, batch.s);
  const MlpCache cache = critic_forward(st.critics.q1, batch.s, tr.action);
  double mean_q = 0.0;
  for (double q : cache.q.values()) mean_q += q;
  mean_q /= double(batch.size());

  const MlpGrads qg = mlp_backward(st.critics.q1, cache, Matrix(batch.size(), 1, 1.0));
  Matrix dl_da(batch.size(), st.actor.action_dim());
  for (std::size_t r = 0; r < dl_da.rows(); ++r)
    for (std::size_t c = 0; c < dl_da.cols(); ++c)
      dl_da(r, c) = -qg.input(r, batch.s.cols() + c) / double(batch.size());

  const ActorGrads g = actor_backward(st.actor, tr, dl_da, spec);
  st.actor_opt.config.lr = cfg.actor_lr;
  const auto params = detail::param_ptrs_mut(st.actor);
  const auto grads = g.flat();
  adam_step(st.actor_opt, params, grads);
  for (double& s : st.actor.encoder.sigma.values()) s = std::max(s, kMinEncoderSigma);
  return mean_q;
}

inline std::vector<double> select_action(const Td3State& st, const Td3Config& cfg, std::span<const double> s,
                                         Rng& rng, bool explore) {
  std::vector<double> a = actor_act(st.actor, s);
  if (explore) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double bound = st.actor.action_bound[i];
      a[i] = std::clamp(a[i] + gauss(rng, 0.0, cfg.exploration_noise_std * bound), -bound, bound);
    }
  }
  return a;
}

struct StepMetrics {
  double critic_loss1 = 0.0;
  double critic_loss2 = 0.0;
  bool actor_updated = false;
  double mean_q = 0.0;  // meaningful only when actor_updated
  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

// Returns nullopt, touching nothing, while the buffer holds fewer than
// batch_size transitions.
inline std::optional<StepMetrics> train_step(Td3State& st, const Td3Config& cfg, const SurrogateSpec& spec,
                                             Rng& rng) {
  if (st.buffer.size() < cfg.batch_size) return std::nullopt;
  const Batch batch = st.buffer.sample(cfg.batch_size, rng);
  const Matrix y = compute_target(st, cfg, batch, rng);
  StepMetrics m;
  std::tie(m.critic_loss1, m.critic_loss2) = critic_update(st, cfg, batch, y);
  ++st.update_count;
  if (st.update_count % cfg.policy_delay == 0) {
    m.mean_q = actor_update(st, cfg, batch, spec);
    m.actor_updated = true;
    soft_update(st.actor, st.actor_target, cfg.tau);
    soft_update(st.critics, st.critics_target, cfg.tau);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Checkpointing

inline void append_actor(std::vector<NamedMatrix>& out, const std::string& prefix, const ActorParams& p) {
  for (auto& [name, m] : named_parameters(p)) out.push_back({prefix + "." + name, *m});
  Matrix lif(p.layers.size(), 3);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    lif(k, 0) = p.layers[k].dc;
    lif(k, 1) = p.layers[k].dv;
    lif(k, 2) = p.layers[k].vth;
  }
  out.push_back({prefix + ".meta.lif", lif});
  out.push_back({prefix + ".meta.timesteps", Matrix{{double(p.timesteps)}}});
  out.push_back({prefix + ".meta.epsilon", Matrix{{p.encoder.epsilon}}});
  out.push_back({prefix + ".meta.action_bound", Matrix::column_vector(p.action_bound)});
}

inline bool has_entry(const std::vector<NamedMatrix>& entries, const std::string& name) {
  return std::any_of(entries.begin(), entries.end(), [&](const NamedMatrix& e) { return e.name == name; });
}

inline ActorParams extract_actor(const std::vector<NamedMatrix>& entries, const std::string& prefix) {
  ActorParams p;
  p.encoder.mu = find_entry(entries, prefix + ".encoder.mu");
  p.encoder.sigma = find_entry(entries, prefix + ".encoder.sigma");
  p.encoder.epsilon = find_entry(entries, prefix + ".meta.epsilon")[0];
  const Matrix& lif = find_entry(entries, prefix + ".meta.lif");
  for (std::size_t k = 0; k < lif.rows(); ++k) {
    LifLayerParams layer;
    layer.w = find_entry(entries, prefix + ".layer" + std::to_string(k) + ".w");
    layer.b = find_entry(entries, prefix + ".layer" + std::to_string(k) + ".b");
    layer.dc = lif(k, 0);
    layer.dv = lif(k, 1);
    layer.vth = lif(k, 2);
    p.layers.push_back(std::move(layer));
  }
  p.decoder.wa = find_entry(entries, prefix + ".decoder.wa");
  p.decoder.ba = find_entry(entries, prefix + ".decoder.ba");
  p.timesteps = std::size_t(find_entry(entries, prefix + ".meta.timesteps")[0]);
  const Matrix& bound = find_entry(entries, prefix + ".meta.action_bound");
  p.action_bound.assign(bound.values().begin(), bound.values().end());
  validate(p);
  return p;
}

inline void append_mlp(std::vector<NamedMatrix>& out, const std::string& prefix, const MlpParams& net) {
  for (auto& [name, m] : named_parameters(net)) out.push_back({prefix + "." + name, *m});
}

inline MlpParams extract_mlp(const std::vector<NamedMatrix>& entries, const std::string& prefix) {
  MlpParams net;
  for (std::size_t k = 0; has_entry(entries, prefix + ".l" + std::to_string(k) + ".w"); ++k) {
    net.w.push_back(find_entry(entries, prefix + ".l" + std::to_string(k) + ".w"));
    net.b.push_back(find_entry(entries, prefix + ".l" + std::to_string(k) + ".b"));
  }
  validate(net);
  return net;
}

inline void append_adam(std::vector<NamedMatrix>& out, const std::string& prefix, const AdamState& opt) {
  const auto& c = opt.config;
  out.push_back({prefix + ".config", Matrix{{c.lr, c.beta1, c.beta2, c.eps}}});
  out.push_back({prefix + ".step", Matrix{{double(opt.step)}}});
  for (std::size_t i = 0; i < opt.first_moment.size(); ++i) {
    out.push_back({prefix + ".m" + std::to_string(i), opt.first_moment[i]});
    out.push_back({prefix + ".v" + std::to_string(i), opt.second_moment[i]});
  }
}

inline AdamState extract_adam(const std::vector<NamedMatrix>& entries, const std::string& prefix) {
  AdamState opt;
  const Matrix& c = find_entry(entries, prefix + ".config");
  opt.config = {c[0], c[1], c[2], c[3]};
  opt.step = std::uint64_t(find_entry(entries, prefix + ".step")[0]);
  for (std::size_t i = 0; has_entry(entries, prefix + ".m" + std::to_string(i)); ++i) {
    opt.first_moment.push_back(find_entry(entries, prefix + ".m" + std::to_string(i)));
    opt.second_moment.push_back(find_entry(entries, prefix + ".v" + std::to_string(i)));
  }
  return opt;
}

inline std::vector<NamedMatrix> to_checkpoint(const Td3State& st) {
  std::vector<NamedMatrix> out;
  append_actor(out, "actor", st.actor);
  append_actor(out, "actor_target", st.actor_target);
  append_mlp(out, "critic1", st.critics.q1);
  append_mlp(out, "critic2", st.critics.q2);
  append_mlp(out, "critic1_target", st.critics_target.q1);
  append_mlp(out, "critic2_target", st.critics_target.q2);
  append_adam(out, "opt.actor", st.actor_opt);
  append_adam(out, "opt.critic1", st.critic1_opt);
  append_adam(out, "opt.critic2", st.critic2_opt);
  out.push_back({"td3.update_count", Matrix{{double(st.update_count)}}});
  return out;
}

// Restores networks, optimisers and the update counter. The replay buffer is
// not part of a checkpoint and comes back empty with the given capacity.
inline Td3State from_checkpoint(const std::vector<NamedMatrix>& entries, std::size_t buffer_capacity) {
  Td3State st;
  st.actor = extract_actor(entries, "actor");
  st.actor_target = extract_actor(entries, "actor_target");
  st.critics.q1 = extract_mlp(entries, "critic1");
  st.critics.q2 = extract_mlp(entries, "critic2");
  st.critics_target.q1 = extract_mlp(entries, "critic1_target");
  st.critics_target.q2 = extract_mlp(entries, "critic2_target");
  st.actor_opt = extract_adam(entries, "opt.actor");
  st.critic1_opt = extract_adam(entries, "opt.critic1");
  st.critic2_opt = extract_adam(entries, "opt.critic2");
  st.update_count = std::uint64_t(find_entry(entries, "td3.update_count")[0]);
  st.buffer = ReplayBuffer(buffer_capacity, st.actor.obs_dim(), st.actor.action_dim());
  return st;
}

}  // namespace sgrl
