#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "sgrl/checkpoint.hpp"
#include "sgrl/td3.hpp"

using namespace sgrl;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sgrl_test_checkpoint";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  const std::string bytes = encode_checkpoint({{"x", Matrix{{1.5}}}});
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 1u + 8u + 8u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "SGRL");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 1);  // name length
  EXPECT_EQ(bytes[12], 'x');
  double v;
  std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
  EXPECT_EQ(v, 1.5);
}

TEST(Checkpoint, BitExactRoundTripOfAwkwardValues) {
  Matrix m(2, 3);
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(0, 1) = -0.0;
  m(0, 2) = std::nextafter(1.0, 2.0);
  m(1, 0) = 1e308;
  m(1, 1) = -3.141592653589793;
  m(1, 2) = 0.1;
  const std::vector<NamedMatrix> entries = {{"m", m}, {"empty", Matrix(0, 4)}, {"unicode.\xce\xbc", Matrix{{2.0}}}};
  const auto back = decode_checkpoint(encode_checkpoint(entries));
  ASSERT_EQ(back.size(), entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_EQ(back[i].name, entries[i].name);
    ASSERT_EQ(back[i].value.rows(), entries[i].value.rows());
    ASSERT_EQ(back[i].value.cols(), entries[i].value.cols());
    EXPECT_EQ(std::memcmp(back[i].value.values().data(), entries[i].value.values().data(),
                          entries[i].value.size() * sizeof(double)),
              0);
  }
  EXPECT_TRUE(std::signbit(back[0].value(0, 1)));
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::string bytes = encode_checkpoint({{"w", Matrix(2, 2, 1.0)}});
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), ContractViolation);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ContractViolation);
  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  EXPECT_THROW(decode_checkpoint(wrong_version), ContractViolation);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    read_checkpoint("/nonexistent/dir/x.sgrl");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), "/nonexistent/dir/x.sgrl");
  }
}

TEST(Checkpoint, FullAgentRoundTripThroughFile) {
  Td3Config cfg;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 64;
  ActorArchitecture arch;
  arch.hidden = {16, 8};
  arch.action_bound = {2.0};
  Rng rng(3);
  Td3State st = make_td3_state(arch, {16}, cfg, rng);
  for (int i = 0; i < 20; ++i) {
    Transition t{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                 {rng.uniform(-2, 2)},
                 rng.uniform(-3, 0),
                 {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                 false};
    st.buffer.push(t);
  }
  for (int i = 0; i < 4; ++i) train_step(st, cfg, make_trapezoidal(0.25, 0.75), rng);

  const auto path = temp_file("agent.sgrl");
  write_checkpoint(path.string(), to_checkpoint(st));
  const Td3State back = from_checkpoint(read_checkpoint(path.string()), cfg.buffer_capacity);
  EXPECT_EQ(back.actor, st.actor);
  EXPECT_EQ(back.actor_target, st.actor_target);
  EXPECT_EQ(back.critics, st.critics);
  EXPECT_EQ(back.critics_target, st.critics_target);
  EXPECT_EQ(back.update_count, st.update_count);
  EXPECT_EQ(back.actor_opt.step, st.actor_opt.step);
  EXPECT_EQ(back.actor_opt.first_moment, st.actor_opt.first_moment);
  EXPECT_EQ(back.critic2_opt.second_moment, st.critic2_opt.second_moment);
  EXPECT_EQ(back.critic1_opt.config.lr, cfg.critic_lr);
  EXPECT_EQ(back.buffer.size(), 0u);
  EXPECT_EQ(encode_checkpoint(to_checkpoint(back)), encode_checkpoint(to_checkpoint(st)));
}
