// sgrl: command-line front end for training, aggregation, plotting,
// gradient checks and environment rollouts.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 check failed.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgrl/checkpoint.hpp"
#include "sgrl/envs.hpp"
#include "sgrl/experiment.hpp"
#include "sgrl/gradcheck.hpp"
#include "sgrl/td3.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kCheckFailed = 3 };

int cmd_train(const std::string& config_path, const std::string& surrogate, long long seed,
              const std::string& out_dir) {
  sgrl::ExperimentConfig cfg = config_path.empty() ? sgrl::ExperimentConfig{} : sgrl::load_config(config_path);
  if (!surrogate.empty()) cfg.surrogates = {sgrl::parse_surrogate_kind(surrogate)};
  if (seed >= 0) cfg.seeds = {std::uint64_t(seed)};
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  sgrl::validate(cfg);

  std::cerr << "training " << cfg.surrogates.size() * cfg.seeds.size() << " run(s) on " << cfg.env << " with "
            << sgrl::worker_threads() << " worker thread(s)\n";
  const auto outputs = sgrl::run_experiment(cfg, sgrl::worker_threads(), [](const sgrl::RunRow& r) {
    std::fprintf(stderr, "[%s seed %llu] step %zu  return %.1f +- %.1f  critic_loss %.4g  mean_q %.3g\n",
                 r.surrogate.c_str(), static_cast<unsigned long long>(r.seed), r.env_step, r.mean_return,
                 r.std_return, r.critic_loss, r.mean_q);
  });
  sgrl::write_text_file((std::filesystem::path(cfg.output_dir) / "config.txt").string(), sgrl::serialize_config(cfg));
  for (const auto& f : outputs.run_files) std::cout << f << "\n";
  std::cout << outputs.aggregate_file << "\n";
  return kOk;
}

int cmd_aggregate(const std::string& in_dir, const std::string& out_file) {
  const auto rows = sgrl::aggregate_directory(in_dir, out_file);
  std::cout << "wrote " << rows.size() << " rows to " << out_file << "\n";
  return kOk;
}

int cmd_plot(const std::string& in_file, const std::string& out_file) {
  sgrl::plot_file(in_file, out_file);
  std::cout << "wrote " << out_file << "\n";
  return kOk;
}

int cmd_gradcheck(sgrl::GradcheckOptions opt, const std::string& kind, double w1, double w2, double vth) {
  if (!(w2 >= 1e-3)) throw sgrl::ValidationError("surrogate_w2", "support half-width must be >= 1e-3");
  opt.spec = sgrl::make_surrogate(sgrl::parse_surrogate_kind(kind), w1, w2, vth);
  const auto report = sgrl::run_gradcheck(opt);
  std::printf("%-16s %8s %14s %14s\n", "group", "count", "grad_norm", "rel_error");
  for (const auto& g : report.groups)
    std::printf("%-16s %8zu %14.6e %14.6e\n", g.name.c_str(), g.count, g.grad_norm, g.rel_error);
  const bool ok = report.passed(opt.tolerance);
  std::printf("max relative error %.6e (tolerance %.1e): %s\n", report.max_rel_error(), opt.tolerance,
              ok ? "PASS" : "FAIL");
  return ok ? kOk : kCheckFailed;
}

int cmd_env_rollout(const std::string& env_name, const std::string& policy_name, const std::string& checkpoint,
                    std::size_t episodes, std::uint64_t seed) {
  auto env = sgrl::make_env(env_name);
  sgrl::Rng rng(seed);
  sgrl::Rng policy_rng = rng.split();
  std::vector<double> returns;
  if (policy_name == "random") {
    returns = sgrl::rollout_returns(*env, sgrl::random_policy(env->spec(), policy_rng), episodes, rng);
  } else if (policy_name == "checkpoint") {
    if (checkpoint.empty()) throw sgrl::ValidationError("checkpoint", "--checkpoint is required with --policy checkpoint");
    const auto actor = sgrl::extract_actor(sgrl::read_checkpoint(checkpoint), "actor");
    if (actor.obs_dim() != env->spec().state_dim || actor.action_dim() != env->spec().action_dim)
      throw sgrl::ValidationError("checkpoint", "actor dimensions do not match environment " + env_name);
    returns = sgrl::rollout_returns(*env, sgrl::greedy_policy(actor), episodes, rng);
  } else {
    throw sgrl::ValidationError("policy", "expected random or checkpoint");
  }
  for (std::size_t i = 0; i < returns.size(); ++i) std::printf("episode %zu return %.3f\n", i, returns[i]);
  const auto s = sgrl::summarize(returns);
  std::printf("mean %.3f std %.3f over %zu episodes\n", s.mean, s.std, returns.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  sgrl::keep_large_allocations();
  CLI::App app{"Spiking-actor TD3 with pluggable surrogate gradients"};
  app.require_subcommand(1);

  std::string config_path, surrogate, out_dir;
  long long seed = -1;
  auto* train = app.add_subcommand("train", "Train one or more runs and aggregate them");
  train->add_option("--config", config_path, "Config file (key = value)");
  train->add_option("--surrogate", surrogate, "Override surrogate kind: rect|tri|trap");
  train->add_option("--seed", seed, "Override to a single seed");
  train->add_option("--out", out_dir, "Output directory");

  std::string agg_in, agg_out;
  auto* aggregate = app.add_subcommand("aggregate", "Aggregate run CSVs across seeds");
  aggregate->add_option("--in", agg_in, "Directory with run_*.csv files")->required();
  aggregate->add_option("--out", agg_out, "Aggregate CSV to write")->required();

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot", "Render an aggregate CSV as an SVG learning curve");
  plot->add_option("--in", plot_in, "Aggregate CSV")->required();
  plot->add_option("--out", plot_out, "SVG file to write")->required();

  sgrl::GradcheckOptions gc;
  std::string gc_kind = "trap";
  double gc_w1 = 0.25, gc_w2 = 0.75, gc_vth = 0.5;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check BPTT gradients against finite differences");
  gradcheck->add_option("--spec,--surrogate", gc_kind, "Surrogate kind: rect|tri|trap");
  gradcheck->add_option("--w1", gc_w1, "Plateau half-width");
  gradcheck->add_option("--w2", gc_w2, "Support half-width");
  gradcheck->add_option("--vth", gc_vth, "Firing threshold");
  gradcheck->add_option("--seed", gc.seed, "Seed");
  gradcheck->add_option("--obs", gc.obs_dim, "State dimension");
  gradcheck->add_option("--pop", gc.encoder_pop, "Encoder population per state dimension");
  gradcheck->add_option("--hidden", gc.hidden, "Hidden layer sizes")->delimiter(',');
  gradcheck->add_option("--actions", gc.action_dim, "Action dimension");
  gradcheck->add_option("--decoder-pop", gc.decoder_pop, "Decoder population per action");
  gradcheck->add_option("--timesteps", gc.timesteps, "Spike timesteps T");
  gradcheck->add_option("--batch", gc.batch, "States per check");
  gradcheck->add_option("--step", gc.step, "Finite-difference step");

  std::string env_name = "pendulum", policy = "random", checkpoint;
  std::size_t episodes = 10;
  std::uint64_t env_seed = 0;
  auto* rollout = app.add_subcommand("env-rollout", "Roll out a policy and report episode returns");
  rollout->add_option("--env", env_name, "pendulum|reach");
  rollout->add_option("--policy", policy, "random|checkpoint");
  rollout->add_option("--checkpoint", checkpoint, "Checkpoint for --policy checkpoint");
  rollout->add_option("--episodes", episodes, "Number of episodes");
  rollout->add_option("--seed", env_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*train) return cmd_train(config_path, surrogate, seed, out_dir);
    if (*aggregate) return cmd_aggregate(agg_in, agg_out);
    if (*plot) return cmd_plot(plot_in, plot_out);
    if (*gradcheck) return cmd_gradcheck(gc, gc_kind, gc_w1, gc_w2, gc_vth);
    if (*rollout) return cmd_env_rollout(env_name, policy, checkpoint, episodes, env_seed);
  } catch (const sgrl::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const sgrl::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const sgrl::GridMismatchError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const sgrl::ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
