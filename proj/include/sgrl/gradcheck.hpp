#pragma once

// Finite-difference check of actor_backward on the smoothed-forward network.
//
// Smoothing makes every stage differentiable: encoder spikes become the
// intensities, LIF outputs become smoothed_step(v), and refractory gates are
// frozen at the unperturbed pass. Under those conditions actor_backward is
// the exact gradient, so central differences must agree with it.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sgrl/error.hpp"
#include "sgrl/spiking_actor.hpp"
#include "sgrl/surrogate.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

struct GradcheckOptions {
  std::size_t obs_dim = 3;
  std::size_t encoder_pop = 10;
  std::vector<std::size_t> hidden = {16, 16};
  std::size_t action_dim = 2;
  std::size_t decoder_pop = 10;
  std::size_t timesteps = 5;
  std::size_t batch = 4;
  SurrogateSpec spec = make_trapezoidal(0.25, 0.75, 0.5);
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct GroupError {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2)
  double grad_norm = 0.0;
  std::size_t count = 0;
};

struct GradcheckReport {
  std::vector<GroupError> groups;
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& g : groups) m = std::max(m, g.rel_error);
    return m;
  }
  bool passed(double tol) const { return max_rel_error() <= tol; }
};

inline void validate(const GradcheckOptions& o) {
  if (o.obs_dim < 1) throw ValidationError("obs", "must be >= 1");
  if (o.encoder_pop < 2) throw ValidationError("pop", "must be >= 2");
  if (o.action_dim < 1) throw ValidationError("actions", "must be >= 1");
  if (o.decoder_pop < 1) throw ValidationError("decoder_pop", "must be >= 1");
  if (o.timesteps < 1) throw ValidationError("timesteps", "must be >= 1");
  if (o.batch < 1) throw ValidationError("batch", "must be >= 1");
  for (auto h : o.hidden)
    if (h < 1) throw ValidationError("hidden", "layer sizes must be >= 1");
  if (!(o.step > 0.0)) throw ValidationError("step", "must be > 0");
  // A support narrower than this is below finite-difference resolution.
  if (!(o.spec.w2 >= 1e-3)) throw ValidationError("surrogate_w2", "support half-width must be >= 1e-3");
}

// A randomly initialised actor with perturbed receptive fields, so that
// every parameter group carries a nonzero gradient.
inline ActorParams gradcheck_actor(const GradcheckOptions& o, Rng& rng) {
  ActorArchitecture arch;
  arch.obs_dim = o.obs_dim;
  arch.action_dim = o.action_dim;
  arch.encoder_pop = o.encoder_pop;
  arch.decoder_pop = o.decoder_pop;
  arch.hidden = o.hidden;
  arch.timesteps = o.timesteps;
  arch.vth = o.spec.vth;
  arch.action_bound = {1.0};
  ActorParams p = init_actor(arch, rng);
  for (double& m : p.encoder.mu.values()) m += rng.uniform(-0.1, 0.1);
  for (double& s : p.encoder.sigma.values()) s *= rng.uniform(0.8, 1.25);
  for (auto& layer : p.layers)
    for (double& w : layer.w.values()) w *= 2.0;
  return p;
}

inline double gradcheck_loss(const ActorParams& p, const Matrix& states, const Matrix& weights,
                             const SurrogateSpec& spec, const ForwardTrace& gates) {
  const ForwardTrace tr = actor_forward(p, states, {&spec, &gates});
  double loss = 0.0;
  for (std::size_t i = 0; i < tr.action.size(); ++i) loss += tr.action[i] * weights[i];
  return loss;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  validate(o);
  Rng rng(o.seed);
  ActorParams p = gradcheck_actor(o, rng);
  const Matrix states = uniform_matrix(rng, o.batch, o.obs_dim, -1.0, 1.0);
  Matrix weights(o.batch, o.action_dim);
  for (double& w : weights.values()) w = gauss(rng, 0.0, 1.0);

  const ForwardTrace base = actor_forward(p, states, {&o.spec, nullptr});
  const ActorGrads g = actor_backward(p, base, weights, o.spec);
  const auto analytic = g.flat();

  GradcheckReport report;
  auto params = named_parameters(p);
  for (std::size_t gi = 0; gi < params.size(); ++gi) {
    Matrix& m = *params[gi].second;
    const Matrix& a = *analytic[gi];
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double saved = m[i];
      m[i] = saved + o.step;
      const double up = gradcheck_loss(p, states, weights, o.spec, base);
      m[i] = saved - o.step;
      const double down = gradcheck_loss(p, states, weights, o.spec, base);
      m[i] = saved;
      const double numeric = (up - down) / (2.0 * o.step);
      diff2 += (a[i] - numeric) * (a[i] - numeric);
      an2 += a[i] * a[i];
      num2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(an2), std::sqrt(num2));
    report.groups.push_back({params[gi].first, denom > 0.0 ? std::sqrt(diff2) / denom : 0.0,
                             std::sqrt(an2), m.size()});
  }
  return report;
}

}  // namespace sgrl
