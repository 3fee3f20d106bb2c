#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "sgrl/critic.hpp"

using namespace sgrl;

namespace {

MlpParams zero_net(std::size_t in, std::vector<std::size_t> hidden) {
  Rng rng(0);
  MlpParams net = init_mlp(in, hidden, rng);
  for (auto& w : net.w) w *= 0.0;
  for (auto& b : net.b) b *= 0.0;
  return net;
}

double q_of(const MlpParams& net, const Matrix& s, const Matrix& a, std::size_t r) {
  oracle::Vec x(s.row(r).begin(), s.row(r).end());
  x.insert(x.end(), a.row(r).begin(), a.row(r).end());
  return oracle::mlp_q(net, x);
}

}  // namespace

TEST(Critic, ZeroWeightsGiveFinalBias) {
  MlpParams net = zero_net(4, {8, 8});
  net.b.back()(0, 0) = 0.3;
  Rng rng(1);
  const auto cache = critic_forward(net, uniform_matrix(rng, 5, 3, -9, 9), uniform_matrix(rng, 5, 1, -2, 2));
  for (double q : cache.q.values()) EXPECT_EQ(q, 0.3);
}

TEST(Critic, SingleLinearLayerSumsInputs) {
  MlpParams net{{Matrix(1, 4, 1.0)}, {Matrix(1, 1)}};
  const auto cache = critic_forward(net, Matrix{{1.0, -2.0, 0.5}}, Matrix{{4.0}});
  EXPECT_EQ(cache.q(0, 0), 3.5);
}

TEST(Critic, ReluBlocksNegativePreActivations) {
  // Hidden unit 0 sees +x, unit 1 sees -x; the output reads both with weight 1.
  MlpParams net{{Matrix{{1.0}, {-1.0}}, Matrix{{1.0, 1.0}}}, {Matrix{{0.0}, {0.0}}, Matrix{{0.0}}}};
  EXPECT_EQ(mlp_forward(net, Matrix{{2.0}}).q(0, 0), 2.0);
  EXPECT_EQ(mlp_forward(net, Matrix{{-3.0}}).q(0, 0), 3.0);
  const auto cache = mlp_forward(net, Matrix{{2.0}});
  const auto g = mlp_backward(net, cache, Matrix{{1.0}});
  EXPECT_EQ(g.w[0](1, 0), 0.0);
  EXPECT_EQ(g.w[1](0, 1), 0.0);
  EXPECT_EQ(g.w[0](0, 0), 2.0);
}

TEST(Critic, ShapeMismatchIsContractViolation) {
  Rng rng(0);
  MlpParams net = init_mlp(4, {8}, rng);
  EXPECT_THROW(critic_forward(net, Matrix(2, 3), Matrix(2, 2)), ContractViolation);
  const auto cache = critic_forward(net, Matrix(2, 3), Matrix(2, 1));
  EXPECT_THROW(mlp_backward(net, cache, Matrix(3, 1)), ContractViolation);
}

TEST(CriticBackward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(2);
  MlpParams net = init_mlp(4, {8, 8}, rng);
  const auto cache = critic_forward(net, uniform_matrix(rng, 3, 3, -1, 1), uniform_matrix(rng, 3, 1, -1, 1));
  const auto g = critic_backward_params(net, cache, Matrix(3, 1));
  for (const Matrix* m : g.flat())
    for (double x : m->values()) EXPECT_EQ(x, 0.0);
}

TEST(CriticBackward, LinearLayerRule) {
  MlpParams net{{Matrix{{0.5, -1.0, 2.0}}}, {Matrix{{0.1}}}};
  const Matrix s{{1.0, 2.0}}, a{{-3.0}};
  const auto g = critic_backward_params(net, critic_forward(net, s, a), Matrix{{1.5}});
  EXPECT_EQ(g.w[0], (Matrix{{1.5, 3.0, -4.5}}));
  EXPECT_EQ(g.b[0](0, 0), 1.5);
}

TEST(CriticActionGrad, LinearInAction) {
  MlpParams net{{Matrix{{0.0, 0.0, 2.0, 0.0}}}, {Matrix{{0.0}}}};
  const Matrix g = critic_action_grad(net, Matrix{{0.3, -0.7}}, Matrix{{0.1, 0.9}});
  EXPECT_EQ(g, (Matrix{{2.0, 0.0}}));
}

TEST(CriticActionGrad, ZeroNetZeroGrad) {
  const Matrix g = critic_action_grad(zero_net(4, {8}), Matrix{{0.3, -0.7}}, Matrix{{0.1, 0.9}});
  EXPECT_EQ(g, Matrix(1, 2));
}

TEST(Critic, ForwardIsPure) {
  Rng rng(3);
  MlpParams net = init_mlp(5, {16, 16}, rng);
  const Matrix s = uniform_matrix(rng, 4, 3, -1, 1), a = uniform_matrix(rng, 4, 2, -1, 1);
  const MlpParams before = net;
  EXPECT_EQ(critic_forward(net, s, a).q, critic_forward(net, s, a).q);
  EXPECT_EQ(net, before);
}

// Central differences (step 1e-6) through the scalar oracle forward.
class CriticGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(CriticGradient, ParamsAndActionsMatchFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  Rng rng(seed);
  const std::size_t obs = 5, act = 3, batch = 4;
  MlpParams net = init_mlp(obs + act, {32, 32}, rng);
  const Matrix s = uniform_matrix(rng, batch, obs, -1, 1);
  Matrix a = uniform_matrix(rng, batch, act, -1, 1);
  const Matrix w = uniform_matrix(rng, batch, 1, -1, 1);
  const double h = 1e-6;

  auto loss = [&] {
    double l = 0;
    for (std::size_t r = 0; r < batch; ++r) l += w(r, 0) * q_of(net, s, a, r);
    return l;
  };
  const auto cache = critic_forward(net, s, a);
  for (std::size_t r = 0; r < batch; ++r) ASSERT_NEAR(cache.q(r, 0), q_of(net, s, a, r), 1e-12);
  const auto g = critic_backward_params(net, cache, w);
  auto params = named_parameters(net);
  const auto analytic = g.flat();
  for (std::size_t gi = 0; gi < params.size(); ++gi) {
    Matrix& m = *params[gi].second;
    oracle::Vec num(m.size()), ana(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double saved = m[i];
      m[i] = saved + h;
      const double up = loss();
      m[i] = saved - h;
      const double down = loss();
      m[i] = saved;
      num[i] = (up - down) / (2 * h);
      ana[i] = (*analytic[gi])[i];
    }
    EXPECT_LT(oracle::rel_error(ana, num), 1e-6) << params[gi].first;
  }

  const Matrix ga = critic_action_grad(net, s, a);
  oracle::Vec num(a.size()), ana(ga.values().begin(), ga.values().end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t r = i / act;
    const double saved = a[i];
    a[i] = saved + h;
    const double up = q_of(net, s, a, r);
    a[i] = saved - h;
    const double down = q_of(net, s, a, r);
    a[i] = saved;
    num[i] = (up - down) / (2 * h);
  }
  EXPECT_LT(oracle::rel_error(ana, num), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Seeds, CriticGradient, ::testing::Values(0, 1, 2, 3, 4));
