#pragma once

// Population-coded spiking actor.
//
//   state --(Gaussian receptive fields)--> intensities A
//         --(integrate-and-fire encoder, T steps)--> binary spikes o^0_t
//         --(K fully connected LIF layers)--> output spikes o^K_t
//         --(count / T, per-action linear readout, tanh squash)--> action
//
// All activations are batch-major: one row per sample. Weights are
// fan_out x fan_in and biases fan_out x 1.
//
// Backward is hand-written BPTT. The spike nonlinearity is differentiated
// through a SurrogateSpec, the refractory gate (1 - o_{t-1}) is held
// constant, and the encoder spikes pass gradient straight to A at every step.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgrl/error.hpp"
#include "sgrl/surrogate.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

struct EncoderParams {
  Matrix mu;     // obs_dim x pop
  Matrix sigma;  // obs_dim x pop, strictly positive
  double epsilon = 0.5;

  double threshold() const { return 1.0 - epsilon; }
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct LifLayerParams {
  Matrix w;  // fan_out x fan_in
  Matrix b;  // fan_out x 1
  double dc = 0.5;
  double dv = 0.75;
  double vth = 0.5;

  std::size_t fan_in() const { return w.cols(); }
  std::size_t fan_out() const { return w.rows(); }
  friend bool operator==(const LifLayerParams&, const LifLayerParams&) = default;
};

struct DecoderParams {
  Matrix wa;  // action_dim x decoder_pop; row i is the readout of action i
  Matrix ba;  // action_dim x 1
  friend bool operator==(const DecoderParams&, const DecoderParams&) = default;
};

struct ActorParams {
  EncoderParams encoder;
  std::vector<LifLayerParams> layers;
  DecoderParams decoder;
  std::size_t timesteps = 5;
  std::vector<double> action_bound;  // one per action dimension

  std::size_t obs_dim() const { return encoder.mu.rows(); }
  std::size_t encoder_pop() const { return encoder.mu.cols(); }
  std::size_t action_dim() const { return decoder.wa.rows(); }
  std::size_t decoder_pop() const { return decoder.wa.cols(); }

  friend bool operator==(const ActorParams&, const ActorParams&) = default;
};

inline void validate(const ActorParams& p) {
  const auto& enc = p.encoder;
  require(enc.mu.same_shape(enc.sigma) && enc.mu.size() > 0, "actor: encoder mu/sigma shape");
  for (double s : enc.sigma.values()) require(s > 0.0, "actor: encoder sigma must be > 0");
  require(enc.threshold() > 0.0 && enc.threshold() <= 1.0, "actor: encoder threshold 1-eps out of (0,1]");
  require(!p.layers.empty(), "actor: needs at least one LIF layer");
  require(p.timesteps >= 1, "actor: timesteps must be >= 1");
  std::size_t fan_in = p.obs_dim() * p.encoder_pop();
  for (const auto& layer : p.layers) {
    require(layer.w.cols() == fan_in, "actor: layer fan-in chain broken");
    require(layer.b.rows() == layer.w.rows() && layer.b.cols() == 1, "actor: layer bias shape");
    require(layer.dc >= 0.0 && layer.dc <= 1.0 && layer.dv >= 0.0 && layer.dv <= 1.0,
            "actor: decay constants must lie in [0,1]");
    require(layer.vth > 0.0, "actor: vth must be > 0");
    fan_in = layer.w.rows();
  }
  require(fan_in == p.action_dim() * p.decoder_pop(), "actor: last layer must emit action_dim * decoder_pop");
  require(p.decoder.ba.rows() == p.action_dim() && p.decoder.ba.cols() == 1, "actor: decoder bias shape");
  require(p.action_bound.size() == p.action_dim(), "actor: one action bound per action dimension");
  for (double b : p.action_bound) require(b > 0.0, "actor: action bounds must be > 0");
}

// Stable parameter order shared by gradients, optimisers, soft updates and
// checkpoints.
inline std::vector<std::pair<std::string, Matrix*>> named_parameters(ActorParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("encoder.mu", &p.encoder.mu);
  out.emplace_back("encoder.sigma", &p.encoder.sigma);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    out.emplace_back("layer" + std::to_string(k) + ".w", &p.layers[k].w);
    out.emplace_back("layer" + std::to_string(k) + ".b", &p.layers[k].b);
  }
  out.emplace_back("decoder.wa", &p.decoder.wa);
  out.emplace_back("decoder.ba", &p.decoder.ba);
  return out;
}

inline std::vector<std::pair<std::string, const Matrix*>> named_parameters(const ActorParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : named_parameters(const_cast<ActorParams&>(p))) out.emplace_back(name, m);
  return out;
}

struct ActorArchitecture {
  std::size_t obs_dim = 3;
  std::size_t action_dim = 1;
  std::size_t encoder_pop = 10;
  std::size_t decoder_pop = 10;
  std::vector<std::size_t> hidden = {256, 256};
  std::size_t timesteps = 5;
  double dc = 0.5;
  double dv = 0.75;
  double vth = 0.5;
  double epsilon = 0.5;
  double state_lo = -1.0;  // receptive-field centres tile [state_lo, state_hi]
  double state_hi = 1.0;
  std::vector<double> action_bound = {1.0};
};

inline ActorParams init_actor(const ActorArchitecture& arch, Rng& rng) {
  require(arch.encoder_pop >= 2, "init_actor: encoder population must be >= 2");
  require(arch.state_hi > arch.state_lo, "init_actor: empty state range");
  ActorParams p;
  const double spacing = (arch.state_hi - arch.state_lo) / double(arch.encoder_pop - 1);
  p.encoder.mu = Matrix(arch.obs_dim, arch.encoder_pop);
  p.encoder.sigma = Matrix(arch.obs_dim, arch.encoder_pop, spacing);
  for (std::size_t i = 0; i < arch.obs_dim; ++i)
    for (std::size_t j = 0; j < arch.encoder_pop; ++j)
      p.encoder.mu(i, j) = arch.state_lo + spacing * double(j);
  p.encoder.epsilon = arch.epsilon;

  std::vector<std::size_t> sizes = {arch.obs_dim * arch.encoder_pop};
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(arch.action_dim * arch.decoder_pop);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const double bound = 1.0 / std::sqrt(double(sizes[k]));
    LifLayerParams layer;
    layer.w = uniform_matrix(rng, sizes[k + 1], sizes[k], -bound, bound);
    layer.b = uniform_matrix(rng, sizes[k + 1], 1, -bound, bound);
    layer.dc = arch.dc;
    layer.dv = arch.dv;
    layer.vth = arch.vth;
    p.layers.push_back(std::move(layer));
  }
  const double bound = 1.0 / std::sqrt(double(arch.decoder_pop));
  p.decoder.wa = uniform_matrix(rng, arch.action_dim, arch.decoder_pop, -bound, bound);
  p.decoder.ba = uniform_matrix(rng, arch.action_dim, 1, -bound, bound);
  p.timesteps = arch.timesteps;
  p.action_bound = arch.action_bound;
  if (p.action_bound.size() == 1 && arch.action_dim > 1)
    p.action_bound.assign(arch.action_dim, arch.action_bound[0]);
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Encoder

// Gaussian receptive-field intensities, flattened (obs, pop) per row.
inline Matrix encode_intensity(const EncoderParams& enc, const Matrix& states) {
  const std::size_t obs = enc.mu.rows(), pop = enc.mu.cols();
  require(states.cols() == obs, "encode_intensity: state width != obs_dim");
  Matrix a(states.rows(), obs * pop);
  for (std::size_t r = 0; r < states.rows(); ++r)
    for (std::size_t i = 0; i < obs; ++i)
      for (std::size_t j = 0; j < pop; ++j) {
        const double z = (states(r, i) - enc.mu(i, j)) / enc.sigma(i, j);
        a(r, i * pop + j) = std::exp(-0.5 * z * z);
      }
  return a;
}

// Deterministic integrate-and-fire over T steps starting from zero potential;
// each spike subtracts the threshold 1 - epsilon. The result stacks the
// steps: row t * batch + r is sample r at step t.
inline Matrix encode_spikes(const EncoderParams& enc, const Matrix& intensity, std::size_t timesteps) {
  const double threshold = enc.threshold();
  const std::size_t block = intensity.size();
  Matrix v(intensity.rows(), intensity.cols());
  Matrix spikes(timesteps * intensity.rows(), intensity.cols());
  for (std::size_t t = 0; t < timesteps; ++t) {
    double* o = spikes.data() + t * block;
    for (std::size_t i = 0; i < block; ++i) {
      v[i] += intensity[i];
      if (v[i] > threshold) {
        o[i] = 1.0;
        v[i] -= threshold;
      }
    }
  }
  return spikes;
}

// Rows [t * batch, (t + 1) * batch) of a time-stacked matrix.
inline Matrix time_slice(const Matrix& stacked, std::size_t t, std::size_t batch) {
  require((t + 1) * batch <= stacked.rows(), "time_slice: step out of range");
  Matrix out(batch, stacked.cols());
  std::copy_n(stacked.data() + t * batch * stacked.cols(), out.size(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// LIF transmission

struct LifState {
  Matrix c;
  Matrix v;
  Matrix o;      // transmitted output: hard spikes, or smoothed_step(v) in oracle mode
  Matrix fired;  // hard spikes (v > vth), drives the next step's refractory gate
  Matrix gate;   // (1 - fired_{t-1}) as applied at this step

  friend bool operator==(const LifState&, const LifState&) = default;
};

inline LifState lif_zero_state(std::size_t batch, std::size_t n) {
  return {Matrix(batch, n), Matrix(batch, n), Matrix(batch, n), Matrix(batch, n), Matrix(batch, n, 1.0)};
}

namespace detail {
// Elementwise membrane update over `count` neurons. `c` holds W o_in + b on
// entry and the new current on exit.
inline void lif_update(const LifLayerParams& L, std::size_t count, const double* __restrict c_prev,
                       const double* __restrict v_prev, const double* __restrict fired_prev, double* __restrict c,
                       double* __restrict v, double* __restrict o, double* __restrict fired,
                       double* __restrict gate, const SurrogateSpec* smooth) {
  const double dc = L.dc, dv = L.dv, vth = L.vth;
  for (std::size_t i = 0; i < count; ++i) {
    const double ci = c[i] + dc * c_prev[i];
    const double gi = 1.0 - fired_prev[i];
    const double vi = dv * v_prev[i] * gi + ci;
    c[i] = ci;
    gate[i] = gi;
    v[i] = vi;
    fired[i] = vi > vth ? 1.0 : 0.0;
  }
  if (smooth)
    for (std::size_t i = 0; i < count; ++i) o[i] = smoothed_step(*smooth, v[i]);
  else
    std::copy_n(fired, count, o);
}
}  // namespace detail

// One step of c <- dc*c + W o_in + b, v <- dv*v*(1 - o_prev) + c, o <- [v > vth].
// `smooth` replaces the transmitted spike with smoothed_step(v); `gate_fired`
// overrides the spikes that drive the refractory gate.
inline LifState lif_step(const LifLayerParams& layer, const LifState& prev, const Matrix& input,
                         const SurrogateSpec* smooth = nullptr, const Matrix* gate_fired = nullptr) {
  require(input.cols() == layer.fan_in(), "lif_step: input width != fan_in");
  require(prev.c.rows() == input.rows() && prev.c.cols() == layer.fan_out() &&
              prev.v.same_shape(prev.c) && prev.fired.same_shape(prev.c),
          "lif_step: previous state shape mismatch");
  const Matrix& fired_prev = gate_fired ? *gate_fired : prev.fired;
  require(fired_prev.same_shape(prev.c), "lif_step: gate override shape mismatch");

  LifState next;
  next.c = matmul_nt(input, layer.w);
  add_bias_rows(next.c, layer.b);
  next.v = Matrix(prev.c.rows(), prev.c.cols());
  next.o = Matrix(prev.c.rows(), prev.c.cols());
  next.fired = Matrix(prev.c.rows(), prev.c.cols());
  next.gate = Matrix(prev.c.rows(), prev.c.cols());
  detail::lif_update(layer, next.c.size(), prev.c.data(), prev.v.data(), fired_prev.data(), next.c.data(),
                     next.v.data(), next.o.data(), next.fired.data(), next.gate.data(), smooth);
  return next;
}

// ---------------------------------------------------------------------------
// Full forward pass

// One layer's states over all steps, stacked like encode_spikes:
// row t * batch + r is sample r at step t.
struct LayerTrace {
  Matrix c, v, o, fired, gate;

  LifState at(std::size_t t, std::size_t batch) const {
    return {time_slice(c, t, batch), time_slice(v, t, batch), time_slice(o, t, batch),
            time_slice(fired, t, batch), time_slice(gate, t, batch)};
  }
  friend bool operator==(const LayerTrace&, const LayerTrace&) = default;
};

struct ForwardTrace {
  std::size_t batch = 0;
  std::size_t timesteps = 0;
  Matrix states;                   // batch x obs
  Matrix intensity;                // batch x obs*pop
  Matrix encoder_spikes;           // T*batch x obs*pop
  std::vector<LayerTrace> layers;  // [k]
  Matrix spike_counts;             // batch x action_dim*decoder_pop
  Matrix rates;                    // spike_counts / T
  Matrix pre_action;               // batch x action_dim, before the squash
  Matrix action;                   // batch x action_dim
  bool smoothed = false;

  friend bool operator==(const ForwardTrace&, const ForwardTrace&) = default;
};

// Oracle hooks used by gradient checks. With `smooth` set, encoder spikes are
// replaced by the intensities themselves and LIF outputs by smoothed_step(v),
// which makes the network differentiable with exactly the derivatives that
// actor_backward uses. `frozen_gates` reuses another trace's refractory gates.
struct ForwardOptions {
  const SurrogateSpec* smooth = nullptr;
  const ForwardTrace* frozen_gates = nullptr;
};

inline ForwardTrace actor_forward(const ActorParams& p, const Matrix& states, ForwardOptions opt = {}) {
  require(states.cols() == p.obs_dim(), "actor_forward: state width != obs_dim");
  const std::size_t batch = states.rows(), T = p.timesteps;
  if (opt.frozen_gates) {
    require(opt.frozen_gates->layers.size() == p.layers.size() && opt.frozen_gates->batch == batch &&
                opt.frozen_gates->timesteps == T,
            "actor_forward: frozen gate trace does not match");
  }

  ForwardTrace tr;
  tr.batch = batch;
  tr.timesteps = T;
  tr.smoothed = opt.smooth != nullptr;
  tr.states = states;
  tr.intensity = encode_intensity(p.encoder, states);
  if (opt.smooth) {
    tr.encoder_spikes = Matrix(T * batch, tr.intensity.cols());
    for (std::size_t t = 0; t < T; ++t)
      std::copy_n(tr.intensity.data(), tr.intensity.size(), tr.encoder_spikes.data() + t * tr.intensity.size());
  } else {
    tr.encoder_spikes = encode_spikes(p.encoder, tr.intensity, T);
  }

  tr.layers.resize(p.layers.size());
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& layer = p.layers[k];
    const Matrix& input = k == 0 ? tr.encoder_spikes : tr.layers[k - 1].o;
    LayerTrace& L = tr.layers[k];
    L.c = matmul_nt(input, layer.w);
    add_bias_rows(L.c, layer.b);
    const std::size_t n = layer.fan_out(), block = batch * n;
    L.v = Matrix(T * batch, n);
    L.o = Matrix(T * batch, n);
    L.fired = Matrix(T * batch, n);
    L.gate = Matrix(T * batch, n);
    const std::vector<double> rest(block, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t off = t * block, prev = off - block;
      const double* c_prev = t ? L.c.data() + prev : rest.data();
      const double* v_prev = t ? L.v.data() + prev : rest.data();
      const double* fired_prev = rest.data();
      if (t) fired_prev = opt.frozen_gates ? opt.frozen_gates->layers[k].fired.data() + prev : L.fired.data() + prev;
      detail::lif_update(layer, block, c_prev, v_prev, fired_prev, L.c.data() + off, L.v.data() + off,
                         L.o.data() + off, L.fired.data() + off, L.gate.data() + off, opt.smooth);
    }
  }

  const Matrix& out = tr.layers.back().o;
  tr.spike_counts = Matrix(batch, out.cols());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < tr.spike_counts.size(); ++i) tr.spike_counts[i] += out[t * tr.spike_counts.size() + i];
  tr.rates = tr.spike_counts;
  for (double& f : tr.rates.values()) f /= double(T);

  const std::size_t na = p.action_dim(), ns = p.decoder_pop();
  tr.pre_action = Matrix(batch, na);
  tr.action = Matrix(batch, na);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t i = 0; i < na; ++i) {
      double acc = p.decoder.ba(i, 0);
      for (std::size_t j = 0; j < ns; ++j) acc += p.decoder.wa(i, j) * tr.rates(r, i * ns + j);
      tr.pre_action(r, i) = acc;
      tr.action(r, i) = p.action_bound[i] * std::tanh(acc);
    }
  return tr;
}

// Single-state convenience wrapper.
inline std::vector<double> actor_act(const ActorParams& p, std::span<const double> state) {
  const ForwardTrace tr = actor_forward(p, Matrix::row_vector(state));
  return {tr.action.values().begin(), tr.action.values().end()};
}

// ---------------------------------------------------------------------------
// Backward pass

struct ActorGrads {
  Matrix mu, sigma;
  std::vector<Matrix> w, b;
  Matrix wa, ba;

  std::vector<const Matrix*> flat() const {
    std::vector<const Matrix*> out = {&mu, &sigma};
    for (std::size_t k = 0; k < w.size(); ++k) {
      out.push_back(&w[k]);
      out.push_back(&b[k]);
    }
    out.push_back(&wa);
    out.push_back(&ba);
    return out;
  }
};

inline ActorGrads zero_grads(const ActorParams& p) {
  ActorGrads g;
  g.mu = Matrix(p.encoder.mu.rows(), p.encoder.mu.cols());
  g.sigma = Matrix(p.encoder.sigma.rows(), p.encoder.sigma.cols());
  for (const auto& layer : p.layers) {
    g.w.emplace_back(layer.w.rows(), layer.w.cols());
    g.b.emplace_back(layer.b.rows(), 1);
  }
  g.wa = Matrix(p.decoder.wa.rows(), p.decoder.wa.cols());
  g.ba = Matrix(p.decoder.ba.rows(), 1);
  return g;
}

// Gradients of sum_rows(action . dl_da) with respect to every actor
// parameter. Batch contributions are summed, so callers wanting a mean loss
// scale dl_da by 1/batch.
inline ActorGrads actor_backward(const ActorParams& p, const ForwardTrace& tr, const Matrix& dl_da,
                                 const SurrogateSpec& spec) {
  const std::size_t batch = tr.batch, T = p.timesteps;
  const std::size_t na = p.action_dim(), ns = p.decoder_pop();
  require(dl_da.rows() == batch && dl_da.cols() == na, "actor_backward: dl_da shape mismatch");
  require(tr.layers.size() == p.layers.size() && tr.timesteps == T && tr.action.rows() == batch &&
              tr.action.cols() == na,
          "actor_backward: trace does not match parameters");
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    require(tr.layers[k].c.rows() == T * batch && tr.layers[k].c.cols() == p.layers[k].fan_out(),
            "actor_backward: trace does not match parameters");

  ActorGrads g = zero_grads(p);

  // Decoder: a_i = bound_i * tanh(pre_i), pre_i = wa_i . f_i + ba_i.
  Matrix d_pre(batch, na);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t i = 0; i < na; ++i) {
      const double th = std::tanh(tr.pre_action(r, i));
      d_pre(r, i) = dl_da(r, i) * p.action_bound[i] * (1.0 - th * th);
    }
  // dL/do^K_t is the same at every step.
  Matrix d_out(T * batch, na * ns);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t i = 0; i < na; ++i) {
      g.ba(i, 0) += d_pre(r, i);
      for (std::size_t j = 0; j < ns; ++j) {
        g.wa(i, j) += d_pre(r, i) * tr.rates(r, i * ns + j);
        d_out(r, i * ns + j) = d_pre(r, i) * p.decoder.wa(i, j) / double(T);
      }
    }
  for (std::size_t t = 1; t < T; ++t)
    std::copy_n(d_out.data(), batch * na * ns, d_out.data() + t * batch * na * ns);

  for (std::size_t kk = p.layers.size(); kk-- > 0;) {
    const auto& layer = p.layers[kk];
    const LayerTrace& L = tr.layers[kk];
    const std::size_t block = batch * layer.fan_out();
    // d_c doubles as scratch for the surrogate derivatives.
    Matrix d_c(T * batch, layer.fan_out());
    surrogate_grad_block(spec, L.v.data(), d_c.data(), d_c.size());
    std::vector<double> dv_next(block, 0.0), dc_next(block, 0.0);
    const double dv = layer.dv, dc = layer.dc;
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t off = t * block;
      // The gate after the last step is irrelevant: dv_next is zero there.
      const double* gate_next = t + 1 < T ? L.gate.data() + off + block : L.gate.data() + off;
      double* __restrict dcur = d_c.data() + off;
      const double* __restrict up = d_out.data() + off;
      for (std::size_t i = 0; i < block; ++i) {
        const double dv_t = up[i] * dcur[i] + dv_next[i] * dv * gate_next[i];
        dv_next[i] = dv_t;
        dcur[i] = dv_t + dc_next[i] * dc;
        dc_next[i] = dcur[i];
      }
    }
    const Matrix& input = kk == 0 ? tr.encoder_spikes : tr.layers[kk - 1].o;
    accumulate_tn(g.w[kk], d_c, input);
    g.b[kk] = column_sums(d_c);
    d_out = matmul(d_c, layer.w);
  }

  // Encoder: each step's spike passes its gradient straight to A.
  const std::size_t obs = p.obs_dim(), pop = p.encoder_pop();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t i = 0; i < obs; ++i)
      for (std::size_t j = 0; j < pop; ++j) {
        const std::size_t col = i * pop + j;
        double d_a = 0.0;
        for (std::size_t t = 0; t < T; ++t) d_a += d_out(t * batch + r, col);
        const double a = tr.intensity(r, col);
        const double diff = tr.states(r, i) - p.encoder.mu(i, j);
        const double sig = p.encoder.sigma(i, j);
        g.mu(i, j) += d_a * a * diff / (sig * sig);
        g.sigma(i, j) += d_a * a * diff * diff / (sig * sig * sig);
      }
  return g;
}

}  // namespace sgrl
