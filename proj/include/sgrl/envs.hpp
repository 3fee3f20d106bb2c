#pragma once

// Built-in continuous-control tasks behind a small reset/step interface.
//
// Pendulum swing-up: theta = 0 is upright. theta'' = 3g/(2l) sin(theta) +
// 3/(m l^2) u, integrated with semi-implicit Euler (velocity first), speed
// clipped to +-8, angle wrapped to (-pi, pi]. Reward is
// -(theta^2 + 0.1 theta'^2 + 0.001 u^2); episodes end after 200 steps.
//
// 1-D reach: x' = x + 0.1 u, reward -x'^2, 100 steps.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "sgrl/error.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

struct Normalizer {
  double offset = 0.0;
  double scale = 1.0;
};

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> action_bound;
  std::size_t max_episode_steps = 0;
  std::vector<Normalizer> state_normalizer;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;       // episode over, for any reason
  bool truncated = false;  // over only because the step limit was reached
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

// Applies the EnvSpec (offset, scale) normaliser to a raw observation.
inline std::vector<double> normalize(const EnvSpec& spec, std::span<const double> obs) {
  require(obs.size() == spec.state_normalizer.size(), "normalize: observation width mismatch");
  std::vector<double> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    out[i] = (obs[i] - spec.state_normalizer[i].offset) / spec.state_normalizer[i].scale;
  return out;
}

inline double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double x = std::fmod(theta + std::numbers::pi, two_pi);
  if (x <= 0.0) x += two_pi;
  return x - std::numbers::pi;  // (-pi, pi]
}

struct PendulumState {
  double theta = 0.0;
  double theta_dot = 0.0;
  friend bool operator==(const PendulumState&, const PendulumState&) = default;
};

class Pendulum final : public Environment {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  Pendulum() {
    spec_.name = "pendulum";
    spec_.state_dim = 3;
    spec_.action_dim = 1;
    spec_.action_bound = {kMaxTorque};
    spec_.max_episode_steps = 200;
    spec_.state_normalizer = {{0.0, 1.0}, {0.0, 1.0}, {0.0, kMaxSpeed}};
  }

  const EnvSpec& spec() const override { return spec_; }

  static double reward(const PendulumState& s, double u) {
    const double th = wrap_angle(s.theta);
    return -(th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u);
  }

  // One integration step; the reward is charged on the pre-step state.
  static std::pair<PendulumState, double> dynamics(const PendulumState& s, double u) {
    require(std::isfinite(u), "pendulum: non-finite action");
    u = std::clamp(u, -kMaxTorque, kMaxTorque);
    const double r = reward(s, u);
    const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(s.theta) +
                       3.0 / (kMass * kLength * kLength) * u;
    PendulumState next;
    next.theta_dot = std::clamp(s.theta_dot + acc * kDt, -kMaxSpeed, kMaxSpeed);
    next.theta = wrap_angle(s.theta + next.theta_dot * kDt);
    return {next, r};
  }

  // Energy per unit (m l^2 / 3); conserved by the continuous dynamics when u = 0.
  static double energy(const PendulumState& s) {
    return 0.5 * s.theta_dot * s.theta_dot + 3.0 * kGravity / (2.0 * kLength) * std::cos(s.theta);
  }

  // Normalised observation (cos theta, sin theta, theta' / 8).
  std::vector<double> observe() const {
    const double raw[3] = {std::cos(state_.theta), std::sin(state_.theta), state_.theta_dot};
    return normalize(spec_, raw);
  }

  std::vector<double> reset(Rng& rng) override {
    state_.theta = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    state_.theta_dot = rng.uniform(-1.0, 1.0);
    steps_ = 0;
    return observe();
  }

  void set_state(const PendulumState& s) {
    state_ = s;
    steps_ = 0;
  }
  const PendulumState& state() const { return state_; }

  StepResult step(std::span<const double> action) override {
    require(action.size() == 1, "pendulum: expects one action");
    auto [next, r] = dynamics(state_, action[0]);
    state_ = next;
    ++steps_;
    StepResult out;
    out.observation = observe();
    out.reward = r;
    out.truncated = steps_ >= spec_.max_episode_steps;
    out.done = out.truncated;
    return out;
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }

 private:
  EnvSpec spec_;
  PendulumState state_;
  std::size_t steps_ = 0;
};

class Reach1D final : public Environment {
 public:
  static constexpr double kGain = 0.1;
  static constexpr double kMaxAction = 1.0;

  Reach1D() {
    spec_.name = "reach";
    spec_.state_dim = 1;
    spec_.action_dim = 1;
    spec_.action_bound = {kMaxAction};
    spec_.max_episode_steps = 100;
    spec_.state_normalizer = {{0.0, 1.0}};
  }

  const EnvSpec& spec() const override { return spec_; }

  static std::pair<double, double> dynamics(double x, double u) {
    require(std::isfinite(u), "reach: non-finite action");
    u = std::clamp(u, -kMaxAction, kMaxAction);
    const double next = x + kGain * u;
    return {next, -next * next};
  }

  std::vector<double> reset(Rng& rng) override {
    x_ = rng.uniform(-1.0, 1.0);
    steps_ = 0;
    return {x_};
  }

  void set_position(double x) {
    x_ = x;
    steps_ = 0;
  }
  double position() const { return x_; }

  StepResult step(std::span<const double> action) override {
    require(action.size() == 1, "reach: expects one action");
    auto [next, r] = dynamics(x_, action[0]);
    x_ = next;
    ++steps_;
    StepResult out;
    out.observation = {x_};
    out.reward = r;
    out.truncated = steps_ >= spec_.max_episode_steps;
    out.done = out.truncated;
    return out;
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<Reach1D>(*this); }

 private:
  EnvSpec spec_;
  double x_ = 0.0;
  std::size_t steps_ = 0;
};

inline std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "reach") return std::make_unique<Reach1D>();
  throw ValidationError("env", "unknown environment '" + std::string(name) + "'");
}

}  // namespace sgrl
