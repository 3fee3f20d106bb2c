#pragma once

// Twin Q-networks: plain ReLU MLPs over the concatenation (state, action).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sgrl/error.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

struct MlpParams {
  std::vector<Matrix> w;  // fan_out x fan_in
  std::vector<Matrix> b;  // fan_out x 1

  std::size_t input_dim() const { return w.front().cols(); }
  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct CriticPair {
  MlpParams q1;
  MlpParams q2;
  friend bool operator==(const CriticPair&, const CriticPair&) = default;
};

inline void validate(const MlpParams& net) {
  require(!net.w.empty() && net.w.size() == net.b.size(), "mlp: layer lists malformed");
  for (std::size_t k = 0; k < net.w.size(); ++k) {
    require(net.b[k].rows() == net.w[k].rows() && net.b[k].cols() == 1, "mlp: bias shape");
    if (k > 0) require(net.w[k].cols() == net.w[k - 1].rows(), "mlp: layer chain broken");
  }
  require(net.w.back().rows() == 1, "mlp: output dimension must be 1");
}

inline std::vector<std::pair<std::string, Matrix*>> named_parameters(MlpParams& net) {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (std::size_t k = 0; k < net.w.size(); ++k) {
    out.emplace_back("l" + std::to_string(k) + ".w", &net.w[k]);
    out.emplace_back("l" + std::to_string(k) + ".b", &net.b[k]);
  }
  return out;
}

inline std::vector<std::pair<std::string, const Matrix*>> named_parameters(const MlpParams& net) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : named_parameters(const_cast<MlpParams&>(net))) out.emplace_back(name, m);
  return out;
}

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline MlpParams init_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  MlpParams net;
  std::vector<std::size_t> sizes = {input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const double bound = 1.0 / std::sqrt(double(sizes[k]));
    net.w.push_back(uniform_matrix(rng, sizes[k + 1], sizes[k], -bound, bound));
    net.b.push_back(uniform_matrix(rng, sizes[k + 1], 1, -bound, bound));
  }
  return net;
}

inline Matrix concat_columns(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "concat_columns: row count mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + std::ptrdiff_t(a.cols()));
  }
  return out;
}

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer; inputs[0] is (state, action)
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix q;                    // batch x 1
};

inline MlpCache mlp_forward(const MlpParams& net, const Matrix& input) {
  require(input.cols() == net.input_dim(), "critic_forward: input width mismatch");
  MlpCache cache;
  Matrix x = input;
  for (std::size_t k = 0; k < net.w.size(); ++k) {
    Matrix z = matmul_nt(x, net.w[k]);
    add_bias_rows(z, net.b[k]);
    cache.inputs.push_back(std::move(x));
    cache.pre.push_back(z);
    if (k + 1 < net.w.size())
      for (double& e : z.values()) e = e > 0.0 ? e : 0.0;
    x = std::move(z);
  }
  cache.q = std::move(x);
  return cache;
}

inline MlpCache critic_forward(const MlpParams& net, const Matrix& states, const Matrix& actions) {
  return mlp_forward(net, concat_columns(states, actions));
}

struct MlpGrads {
  std::vector<Matrix> w, b;
  Matrix input;  // dL/d(input), batch x input_dim

  std::vector<const Matrix*> flat() const {
    std::vector<const Matrix*> out;
    for (std::size_t k = 0; k < w.size(); ++k) {
      out.push_back(&w[k]);
      out.push_back(&b[k]);
    }
    return out;
  }
};

// Gradients of sum_rows(dl_dq . q). dl_dq is batch x 1.
inline MlpGrads mlp_backward(const MlpParams& net, const MlpCache& cache, const Matrix& dl_dq) {
  require(cache.inputs.size() == net.w.size() && cache.q.same_shape(dl_dq),
          "critic_backward: cache does not match network or dl_dq");
  MlpGrads g;
  g.w.resize(net.w.size());
  g.b.resize(net.w.size());
  Matrix delta = dl_dq;
  for (std::size_t k = net.w.size(); k-- > 0;) {
    if (k + 1 < net.w.size())
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (cache.pre[k][i] <= 0.0) delta[i] = 0.0;
    g.w[k] = matmul_tn(delta, cache.inputs[k]);
    g.b[k] = column_sums(delta);
    delta = matmul(delta, net.w[k]);
  }
  g.input = std::move(delta);
  return g;
}

inline MlpGrads critic_backward_params(const MlpParams& net, const MlpCache& cache, const Matrix& dl_dq) {
  return mlp_backward(net, cache, dl_dq);
}

// dQ/da at each (state, action) row; batch x action_dim.
inline Matrix critic_action_grad(const MlpParams& net, const Matrix& states, const Matrix& actions) {
  const MlpCache cache = critic_forward(net, states, actions);
  const MlpGrads g = mlp_backward(net, cache, Matrix(states.rows(), 1, 1.0));
  Matrix out(states.rows(), actions.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = g.input(r, states.cols() + c);
  return out;
}

}  // namespace sgrl
