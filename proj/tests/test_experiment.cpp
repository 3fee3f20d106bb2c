#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "sgrl/experiment.hpp"

using namespace sgrl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sgrl_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.seeds = {1};
  c.total_env_steps = 2000;
  c.eval_every = 1000;
  c.eval_episodes = 1;
  c.actor_hidden = {16};
  c.critic_hidden = {16};
  c.td3.batch_size = 16;
  c.td3.warmup_steps = 200;
  c.td3.buffer_capacity = 2000;
  c.output_dir = out.string();
  return c;
}

RunRow row(std::size_t step, double ret, const std::string& kind, std::uint64_t seed) {
  return {step, ret, 0.0, 0.0, 0.0, kind, seed};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SGRL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(parse_config(""), ExperimentConfig{});
  EXPECT_EQ(parse_config("# only a comment\n\n   \n"), ExperimentConfig{});
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const ExperimentConfig c;
  EXPECT_EQ(c.td3.gamma, 0.99);
  EXPECT_EQ(c.td3.actor_lr, 1e-4);
  EXPECT_EQ(c.td3.critic_lr, 1e-3);
  EXPECT_EQ(c.encoder_pop, 10u);
  EXPECT_EQ(c.decoder_pop, 10u);
  EXPECT_EQ(c.total_env_steps, 60000u);
  EXPECT_EQ(c.eval_every, 2000u);
  EXPECT_EQ(c.eval_episodes, 5u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.env = "reach";
  c.surrogates = {SurrogateKind::rectangular, SurrogateKind::trapezoidal};
  c.surrogate_w1 = 0.1 + 0.2;
  c.seeds = {7, 3, 11};
  c.td3.tau = 1.0 / 3.0;
  c.td3.policy_delay = 3;
  c.actor_hidden = {64, 32, 8};
  c.vth = 0.45;
  c.output_dir = "out/dir with space";
  const ExperimentConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), serialize_config(c));
  EXPECT_EQ(parse_config(serialize_config(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = parse_config("  seeds = 4, 5  # two seeds\nsurrogates=tri\n");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.surrogates, (std::vector<SurrogateKind>{SurrogateKind::triangular}));
}

TEST(Config, ShippedConfigsLoad) {
  const std::string dir = SGRL_CONFIG_DIR;
  ExperimentConfig trap = load_config(dir + "/pendulum_trap.cfg");
  EXPECT_EQ(trap.output_dir, "runs/pendulum_trap");
  trap.output_dir = ExperimentConfig{}.output_dir;
  EXPECT_EQ(trap, ExperimentConfig{});

  const ExperimentConfig cmp = load_config(dir + "/compare_surrogates.cfg");
  EXPECT_EQ(cmp.surrogates, (std::vector<SurrogateKind>{SurrogateKind::rectangular, SurrogateKind::triangular,
                                                         SurrogateKind::trapezoidal}));
  EXPECT_EQ(cmp.total_env_steps, 60000u);
  EXPECT_NO_THROW(validate(load_config(dir + "/smoke.cfg")));
}

TEST(Config, ErrorsNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      validate(parse_config(text));
    } catch (const ValidationError& e) {
      return e.field();
    }
    return std::string();
  };
  EXPECT_EQ(field_of("bogus = 1"), "bogus");
  EXPECT_EQ(field_of("tau = abc"), "tau");
  EXPECT_EQ(field_of("seeds = 1, 1"), "seeds");
  EXPECT_EQ(field_of("eval_every = 7"), "eval_every");
  EXPECT_EQ(field_of("env = cartpole"), "env");
  EXPECT_EQ(field_of("gamma = 0"), "gamma");
}

TEST(RunCsv, HeaderIsStable) {
  EXPECT_EQ(format_run_csv({}), "env_step,mean_return,std_return,critic_loss,mean_q,surrogate,seed\n");
}

TEST(RunCsv, RoundTripAndOrdering) {
  const std::vector<RunRow> rows = {{1000, -1234.5, 12.25, 0.5, -3.0, "trap", 2}, {2000, -200.0, 1.0, 0.25, -40.0, "trap", 2}};
  EXPECT_EQ(parse_run_csv(format_run_csv(rows)), rows);
  EXPECT_THROW(parse_run_csv(format_run_csv({rows[1], rows[0]})), ValidationError);
  EXPECT_THROW(parse_run_csv("env_step,mean_return\n"), ValidationError);
}

TEST(Summarize, PopulationStd) {
  const auto s = summarize({10.0, 20.0});
  EXPECT_EQ(s.mean, 15.0);
  EXPECT_EQ(s.std, 5.0);
  EXPECT_EQ(summarize({-3.0}).std, 0.0);
}

TEST(Aggregate, TwoSeedsHandComputed) {
  const auto agg = aggregate_runs({{row(1000, 10, "trap", 0)}, {row(1000, 20, "trap", 1)}});
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].mean_return, 15.0);
  EXPECT_EQ(agg[0].std_return, 5.0);
  EXPECT_EQ(agg[0].runs, 2u);
}

TEST(Aggregate, SingleSeedZeroWidthBand) {
  const auto agg = aggregate_runs({{row(1000, -7, "rect", 0), row(2000, -3, "rect", 0)}});
  for (const auto& r : agg) EXPECT_EQ(r.std_return, 0.0);
  const std::string svg = render_svg(agg);
  EXPECT_NE(svg.find("class=\"band\""), std::string::npos);
}

TEST(Aggregate, MeansMatchRecomputation) {
  Rng rng(0);
  std::vector<std::vector<RunRow>> runs;
  for (const char* kind : {"trap", "rect", "tri"})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      std::vector<RunRow> r;
      for (std::size_t step = 500; step <= 3000; step += 500) r.push_back(row(step, rng.uniform(-1500, 0), kind, seed));
      runs.push_back(r);
    }
  const auto agg = aggregate_runs(runs);
  ASSERT_EQ(agg.size(), 18u);
  EXPECT_EQ(agg.front().surrogate, "rect");
  EXPECT_EQ(agg.back().surrogate, "trap");
  for (const auto& a : agg) {
    double sum = 0;
    int n = 0;
    for (const auto& run : runs)
      for (const auto& r : run)
        if (r.surrogate == a.surrogate && r.env_step == a.env_step) {
          sum += r.mean_return;
          ++n;
        }
    EXPECT_NEAR(a.mean_return, sum / n, 1e-9);
    EXPECT_EQ(a.runs, std::size_t(n));
  }
  EXPECT_EQ(parse_aggregate_csv(format_aggregate_csv(agg)).size(), agg.size());
}

TEST(Aggregate, GridMismatchDetected) {
  EXPECT_THROW(aggregate_runs({{row(1000, 1, "trap", 0), row(2000, 1, "trap", 0)}, {row(1000, 1, "trap", 1), row(3000, 1, "trap", 1)}}),
               GridMismatchError);
  EXPECT_THROW(aggregate_runs({{row(1000, 1, "trap", 0)}, {row(1000, 1, "trap", 1), row(2000, 1, "trap", 1)}}),
               GridMismatchError);
}

TEST(Aggregate, EmptyInputWritesNothing) {
  const auto dir = fresh_dir("empty");
  const auto out = dir / "aggregate.csv";
  EXPECT_THROW(aggregate_directory(dir.string(), out.string()), ValidationError);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_THROW(aggregate_directory((dir / "missing").string(), out.string()), IoError);
}

TEST(Svg, BandsAndSeriesPerSurrogate) {
  std::vector<AggregateRow> rows;
  for (const char* k : {"rect", "tri", "trap"})
    for (std::size_t s = 1000; s <= 3000; s += 1000) rows.push_back({k, s, -1000.0 + double(s) / 10, 50.0, 3});
  const std::string svg = render_svg(rows);
  for (const char* k : {"rect", "tri", "trap"}) {
    EXPECT_NE(svg.find("class=\"band\" data-surrogate=\"" + std::string(k) + "\""), std::string::npos);
    EXPECT_NE(svg.find("class=\"mean\" data-surrogate=\"" + std::string(k) + "\""), std::string::npos);
  }
  EXPECT_NE(svg.find("population"), std::string::npos);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_THROW(render_svg({}), ValidationError);
}

TEST(TrainRun, EvalScheduleAndDeterminism) {
  const auto cfg = tiny_config(fresh_dir("det"));
  const auto a = train_run(cfg, SurrogateKind::trapezoidal, 1);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows[0].env_step, 1000u);
  EXPECT_EQ(a.rows[1].env_step, 2000u);
  for (const auto& r : a.rows) {
    EXPECT_EQ(r.surrogate, "trap");
    EXPECT_EQ(r.seed, 1u);
    EXPECT_LE(r.mean_return, 0.0);
    EXPECT_TRUE(std::isfinite(r.critic_loss));
  }
  const auto b = train_run(cfg, SurrogateKind::trapezoidal, 1);
  EXPECT_EQ(format_run_csv(a.rows), format_run_csv(b.rows));
  const auto c = train_run(cfg, SurrogateKind::trapezoidal, 2);
  EXPECT_NE(format_run_csv(a.rows), format_run_csv(c.rows));
}

TEST(RunExperiment, GridOfRunsAndAggregate) {
  const auto dir = fresh_dir("grid");
  auto cfg = tiny_config(dir);
  cfg.total_env_steps = 1000;
  cfg.eval_every = 500;
  cfg.seeds = {0, 1, 2};
  cfg.surrogates = {SurrogateKind::rectangular, SurrogateKind::triangular, SurrogateKind::trapezoidal};
  const auto out = run_experiment(cfg, 3);
  EXPECT_EQ(out.run_files.size(), 9u);
  EXPECT_EQ(out.checkpoints.size(), 9u);
  EXPECT_EQ(list_run_files(dir.string()).size(), 9u);
  for (const auto& f : out.checkpoints) EXPECT_TRUE(fs::exists(f));
  const auto agg = parse_aggregate_csv(read_text_file(out.aggregate_file));
  EXPECT_EQ(agg.size(), 6u);
  for (const auto& r : agg) EXPECT_EQ(r.runs, 3u);

  // Threaded and serial execution produce the same files.
  const auto serial_dir = fresh_dir("grid_serial");
  cfg.output_dir = serial_dir.string();
  const auto serial = run_experiment(cfg, 1);
  for (std::size_t i = 0; i < out.run_files.size(); ++i)
    EXPECT_EQ(read_text_file(out.run_files[i]), read_text_file(serial.run_files[i]));
  EXPECT_EQ(read_text_file(out.aggregate_file), read_text_file(serial.aggregate_file));
}

TEST(RunExperiment, UnwritableOutputIsIoError) {
  const auto dir = fresh_dir("blocked");
  write_text_file((dir / "file").string(), "x");
  auto cfg = tiny_config(dir / "file" / "sub");
  try {
    run_experiment(cfg, 1);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(e.path().find("sub"), std::string::npos);
  }
}

TEST(Cli, ExitCodes) {
  const auto dir = fresh_dir("cli");
  EXPECT_EQ(run_cli("gradcheck"), 0);
  EXPECT_EQ(run_cli("gradcheck --w2 1e-9"), 1);
  EXPECT_EQ(run_cli("gradcheck --w1 0 --w2 1e-9 --spec tri"), 1);
  EXPECT_EQ(run_cli("gradcheck --spec gaussian"), 1);
  EXPECT_EQ(run_cli("no-such-verb"), 1);
  EXPECT_EQ(run_cli("aggregate --in " + (dir / "missing").string() + " --out " + (dir / "a.csv").string()), 2);
  EXPECT_EQ(run_cli("plot --in " + (dir / "missing.csv").string() + " --out " + (dir / "p.svg").string()), 2);
  write_text_file((dir / "bad.cfg").string(), "tau = 7\n");
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.cfg").string()), 1);
  EXPECT_EQ(run_cli("env-rollout --env pendulum --policy random --episodes 2"), 0);
  EXPECT_EQ(run_cli("env-rollout --env mujoco"), 1);
}

TEST(Cli, TrainAggregatePlotPipeline) {
  const auto dir = fresh_dir("pipeline");
  auto cfg = tiny_config(dir / "runs");
  cfg.total_env_steps = 600;
  cfg.eval_every = 300;
  write_text_file((dir / "tiny.cfg").string(), serialize_config(cfg));
  ASSERT_EQ(run_cli("train --config " + (dir / "tiny.cfg").string() + " --surrogate rect --seed 4"), 0);
  EXPECT_TRUE(fs::exists(dir / "runs" / "run_rect_seed4.csv"));
  EXPECT_TRUE(fs::exists(dir / "runs" / "config.txt"));
  ASSERT_EQ(run_cli("aggregate --in " + (dir / "runs").string() + " --out " + (dir / "agg.csv").string()), 0);
  ASSERT_EQ(run_cli("plot --in " + (dir / "agg.csv").string() + " --out " + (dir / "plot.svg").string()), 0);
  EXPECT_NE(read_text_file((dir / "plot.svg").string()).find("class=\"band\""), std::string::npos);
  EXPECT_EQ(run_cli("env-rollout --env pendulum --policy checkpoint --episodes 1 --checkpoint " +
                    (dir / "runs" / "run_rect_seed4.sgrl").string()),
            0);
}
