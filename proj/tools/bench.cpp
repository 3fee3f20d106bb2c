// Times TD3 updates at a given architecture.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "sgrl/envs.hpp"
#include "sgrl/experiment.hpp"
#include "sgrl/td3.hpp"

int main(int argc, char** argv) {
  using namespace sgrl;
  keep_large_allocations();
  const std::size_t hidden = argc > 1 ? std::size_t(std::atoi(argv[1])) : 256;
  const std::size_t critic_hidden = argc > 2 ? std::size_t(std::atoi(argv[2])) : 256;
  const int steps = argc > 3 ? std::atoi(argv[3]) : 200;
  ActorArchitecture arch;
  arch.hidden = {hidden, hidden};
  arch.action_bound = {2.0};
  Td3Config cfg;
  Rng rng(1);
  Td3State st = make_td3_state(arch, {critic_hidden, critic_hidden}, cfg, rng);
  Pendulum env;
  auto obs = env.reset(rng);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a = {rng.uniform(-2, 2)};
    auto res = env.step(a);
    st.buffer.push({obs, a, res.reward, res.observation, false});
    obs = res.done ? env.reset(rng) : res.observation;
  }
  const auto spec = make_trapezoidal(0.25, 0.75, 0.5);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < steps; ++i) train_step(st, cfg, spec, rng);
  const auto t1 = std::chrono::steady_clock::now();
  for (int i = 0; i < steps; ++i) select_action(st, cfg, obs, rng, true);
  const auto t2 = std::chrono::steady_clock::now();
  const Matrix states = uniform_matrix(rng, cfg.batch_size, 3, -1.0, 1.0);
  const auto t3 = std::chrono::steady_clock::now();
  ForwardTrace tr;
  for (int i = 0; i < steps; ++i) tr = actor_forward(st.actor, states);
  const auto t4 = std::chrono::steady_clock::now();
  const Matrix dl(cfg.batch_size, 1, 1.0);
  for (int i = 0; i < steps; ++i) actor_backward(st.actor, tr, dl, spec);
  const auto t5 = std::chrono::steady_clock::now();
  std::printf("actor_forward %.3f ms, actor_backward %.3f ms\n",
              std::chrono::duration<double, std::milli>(t4 - t3).count() / steps,
              std::chrono::duration<double, std::milli>(t5 - t4).count() / steps);
  std::printf("train_step %.3f ms, select_action %.3f ms\n",
              std::chrono::duration<double, std::milli>(t1 - t0).count() / steps,
              std::chrono::duration<double, std::milli>(t2 - t1).count() / steps);
}
