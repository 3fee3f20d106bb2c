#pragma once

// Multi-seed surrogate comparison runs: config files, per-run CSV metrics,
// cross-seed aggregation and SVG learning curves.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sgrl/envs.hpp"
#include "sgrl/error.hpp"
#include "sgrl/surrogate.hpp"
#include "sgrl/td3.hpp"

namespace sgrl {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string env = "pendulum";
  std::vector<SurrogateKind> surrogates = {SurrogateKind::trapezoidal};
  double surrogate_w1 = 0.25;
  double surrogate_w2 = 0.75;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t total_env_steps = 60000;
  std::size_t eval_every = 2000;
  std::size_t eval_episodes = 5;
  Td3Config td3;
  std::size_t encoder_pop = 10;
  std::size_t decoder_pop = 10;
  std::vector<std::size_t> actor_hidden = {256, 256};
  std::vector<std::size_t> critic_hidden = {256, 256};
  std::size_t timesteps = 5;
  double lif_dc = 0.5;
  double lif_dv = 0.75;
  double vth = 0.5;  // LIF threshold, also the surrogate centre
  double encoder_epsilon = 0.5;
  std::string output_dir = "runs";

  SurrogateSpec surrogate(SurrogateKind kind) const {
    return make_surrogate(kind, surrogate_w1, surrogate_w2, vth);
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(x)) throw ValidationError(key, "expected a number, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError(key, "expected a non-negative integer, got '" + v + "'");
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ValidationError(key, "integer out of range");
  return x;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(std::size_t(parse_uint(key, item)));
  return out;
}

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
  return out;
}
}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  make_env(c.env);
  if (c.surrogates.empty()) throw ValidationError("surrogates", "at least one surrogate kind required");
  if (std::set<SurrogateKind>(c.surrogates.begin(), c.surrogates.end()).size() != c.surrogates.size())
    throw ValidationError("surrogates", "kinds must be distinct");
  for (auto kind : c.surrogates) c.surrogate(kind);
  if (c.seeds.empty()) throw ValidationError("seeds", "at least one seed required");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ValidationError("seeds", "seeds must be distinct");
  if (c.total_env_steps < 1) throw ValidationError("total_env_steps", "must be >= 1");
  if (c.eval_every < 1) throw ValidationError("eval_every", "must be >= 1");
  if (c.total_env_steps % c.eval_every != 0)
    throw ValidationError("eval_every", "must divide total_env_steps");
  if (c.eval_episodes < 1) throw ValidationError("eval_episodes", "must be >= 1");
  validate(c.td3);
  if (c.encoder_pop < 2) throw ValidationError("encoder_pop", "must be >= 2");
  if (c.decoder_pop < 1) throw ValidationError("decoder_pop", "must be >= 1");
  for (auto h : c.actor_hidden)
    if (h < 1) throw ValidationError("actor_hidden", "layer sizes must be >= 1");
  for (auto h : c.critic_hidden)
    if (h < 1) throw ValidationError("critic_hidden", "layer sizes must be >= 1");
  if (c.timesteps < 1) throw ValidationError("timesteps", "must be >= 1");
  if (!(c.lif_dc >= 0.0 && c.lif_dc <= 1.0)) throw ValidationError("lif_dc", "must lie in [0, 1]");
  if (!(c.lif_dv >= 0.0 && c.lif_dv <= 1.0)) throw ValidationError("lif_dv", "must lie in [0, 1]");
  if (!(c.vth > 0.0)) throw ValidationError("vth", "must be > 0");
  if (!(c.encoder_epsilon >= 0.0 && c.encoder_epsilon < 1.0))
    throw ValidationError("encoder_epsilon", "must lie in [0, 1)");
  if (c.output_dir.empty()) throw ValidationError("output_dir", "must not be empty");
}

// Flat `key = value` text with `#` comments. Missing keys keep their defaults.
inline ExperimentConfig parse_config(const std::string& text) {
  using namespace detail;
  ExperimentConfig c;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    auto& t = c.td3;
    if (key == "env") c.env = v;
    else if (key == "surrogates") {
      c.surrogates.clear();
      for (const auto& s : split_list(v)) c.surrogates.push_back(parse_surrogate_kind(s));
    } else if (key == "surrogate_w1") c.surrogate_w1 = parse_double(key, v);
    else if (key == "surrogate_w2") c.surrogate_w2 = parse_double(key, v);
    else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& s : split_list(v)) c.seeds.push_back(parse_uint(key, s));
    } else if (key == "total_env_steps") c.total_env_steps = parse_uint(key, v);
    else if (key == "eval_every") c.eval_every = parse_uint(key, v);
    else if (key == "eval_episodes") c.eval_episodes = parse_uint(key, v);
    else if (key == "gamma") t.gamma = parse_double(key, v);
    else if (key == "tau") t.tau = parse_double(key, v);
    else if (key == "actor_lr") t.actor_lr = parse_double(key, v);
    else if (key == "critic_lr") t.critic_lr = parse_double(key, v);
    else if (key == "policy_delay") t.policy_delay = parse_uint(key, v);
    else if (key == "target_noise_std") t.target_noise_std = parse_double(key, v);
    else if (key == "target_noise_clip") t.target_noise_clip = parse_double(key, v);
    else if (key == "exploration_noise_std") t.exploration_noise_std = parse_double(key, v);
    else if (key == "batch_size") t.batch_size = parse_uint(key, v);
    else if (key == "warmup_steps") t.warmup_steps = parse_uint(key, v);
    else if (key == "buffer_capacity") t.buffer_capacity = parse_uint(key, v);
    else if (key == "encoder_pop") c.encoder_pop = parse_uint(key, v);
    else if (key == "decoder_pop") c.decoder_pop = parse_uint(key, v);
    else if (key == "actor_hidden") c.actor_hidden = parse_sizes(key, v);
    else if (key == "critic_hidden") c.critic_hidden = parse_sizes(key, v);
    else if (key == "timesteps") c.timesteps = parse_uint(key, v);
    else if (key == "lif_dc") c.lif_dc = parse_double(key, v);
    else if (key == "lif_dv") c.lif_dv = parse_double(key, v);
    else if (key == "vth") c.vth = parse_double(key, v);
    else if (key == "encoder_epsilon") c.encoder_epsilon = parse_double(key, v);
    else if (key == "output_dir") c.output_dir = v;
    else throw ValidationError(key, "unknown configuration key");
  }
  return c;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  using namespace detail;
  const auto d = [](const double& x) { return fmt_double(x); };
  const auto u = [](const std::size_t& x) { return std::to_string(x); };
  const auto& t = c.td3;
  std::ostringstream o;
  o << "env = " << c.env << "\n"
    << "surrogates = "
    << join<SurrogateKind>(c.surrogates, [](const SurrogateKind& k) { return std::string(to_string(k)); })
    << "\n"
    << "surrogate_w1 = " << d(c.surrogate_w1) << "\n"
    << "surrogate_w2 = " << d(c.surrogate_w2) << "\n"
    << "seeds = " << join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); }) << "\n"
    << "total_env_steps = " << c.total_env_steps << "\n"
    << "eval_every = " << c.eval_every << "\n"
    << "eval_episodes = " << c.eval_episodes << "\n"
    << "gamma = " << d(t.gamma) << "\n"
    << "tau = " << d(t.tau) << "\n"
    << "actor_lr = " << d(t.actor_lr) << "\n"
    << "critic_lr = " << d(t.critic_lr) << "\n"
    << "policy_delay = " << t.policy_delay << "\n"
    << "target_noise_std = " << d(t.target_noise_std) << "\n"
    << "target_noise_clip = " << d(t.target_noise_clip) << "\n"
    << "exploration_noise_std = " << d(t.exploration_noise_std) << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "warmup_steps = " << t.warmup_steps << "\n"
    << "buffer_capacity = " << t.buffer_capacity << "\n"
    << "encoder_pop = " << c.encoder_pop << "\n"
    << "decoder_pop = " << c.decoder_pop << "\n"
    << "actor_hidden = " << join<std::size_t>(c.actor_hidden, u) << "\n"
    << "critic_hidden = " << join<std::size_t>(c.critic_hidden, u) << "\n"
    << "timesteps = " << c.timesteps << "\n"
    << "lif_dc = " << d(c.lif_dc) << "\n"
    << "lif_dv = " << d(c.lif_dv) << "\n"
    << "vth = " << d(c.vth) << "\n"
    << "encoder_epsilon = " << d(c.encoder_epsilon) << "\n"
    << "output_dir = " << c.output_dir << "\n";
  return o.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open file for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open file for writing");
  f << text;
  if (!f) throw IoError(path, "failed writing file");
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

inline ActorArchitecture actor_architecture(const ExperimentConfig& c, const EnvSpec& env) {
  ActorArchitecture a;
  a.obs_dim = env.state_dim;
  a.action_dim = env.action_dim;
  a.encoder_pop = c.encoder_pop;
  a.decoder_pop = c.decoder_pop;
  a.hidden = c.actor_hidden;
  a.timesteps = c.timesteps;
  a.dc = c.lif_dc;
  a.dv = c.lif_dv;
  a.vth = c.vth;
  a.epsilon = c.encoder_epsilon;
  a.action_bound = env.action_bound;
  return a;
}

// ---------------------------------------------------------------------------
// Run records

inline constexpr const char* kRunCsvHeader = "env_step,mean_return,std_return,critic_loss,mean_q,surrogate,seed";

struct RunRow {
  std::size_t env_step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double critic_loss = 0.0;
  double mean_q = 0.0;
  std::string surrogate;
  std::uint64_t seed = 0;
  friend bool operator==(const RunRow&, const RunRow&) = default;
};

namespace detail {
inline std::string fmt_metric(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}
}  // namespace detail

inline std::string format_run_csv(const std::vector<RunRow>& rows) {
  std::string out = std::string(kRunCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.env_step) + "," + detail::fmt_metric(r.mean_return) + "," +
           detail::fmt_metric(r.std_return) + "," + detail::fmt_metric(r.critic_loss) + "," +
           detail::fmt_metric(r.mean_q) + "," + r.surrogate + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

inline std::vector<RunRow> parse_run_csv(const std::string& text, const std::string& origin = "<memory>") {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kRunCsvHeader)
    throw ValidationError(origin, "run CSV header mismatch");
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(detail::trim(cell));
    if (f.size() != 7) throw ValidationError(origin, "run CSV row has " + std::to_string(f.size()) + " fields");
    RunRow r;
    r.env_step = detail::parse_uint("env_step", f[0]);
    r.mean_return = std::strtod(f[1].c_str(), nullptr);
    r.std_return = std::strtod(f[2].c_str(), nullptr);
    r.critic_loss = std::strtod(f[3].c_str(), nullptr);
    r.mean_q = std::strtod(f[4].c_str(), nullptr);
    r.surrogate = f[5];
    r.seed = detail::parse_uint("seed", f[6]);
    if (!rows.empty() && r.env_step <= rows.back().env_step)
      throw ValidationError(origin, "env_step must be strictly increasing");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ReturnStats {
  double mean = 0.0;
  double std = 0.0;  // population (divide by n)
};

inline ReturnStats summarize(const std::vector<double>& xs) {
  ReturnStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / double(xs.size()));
  return s;
}

using Policy = std::function<std::vector<double>(std::span<const double>)>;

inline std::vector<double> rollout_returns(const Environment& proto, const Policy& policy, std::size_t episodes,
                                           Rng& rng) {
  std::vector<double> returns;
  auto env = proto.clone();
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = env->reset(rng);
    double total = 0.0;
    for (;;) {
      const auto action = policy(obs);
      auto res = env->step(action);
      total += res.reward;
      if (res.done) break;
      obs = std::move(res.observation);
    }
    returns.push_back(total);
  }
  return returns;
}

inline Policy random_policy(const EnvSpec& spec, Rng& rng) {
  return [&spec, &rng](std::span<const double>) {
    std::vector<double> a(spec.action_dim);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-spec.action_bound[i], spec.action_bound[i]);
    return a;
  };
}

inline Policy greedy_policy(const ActorParams& actor) {
  return [&actor](std::span<const double> s) { return actor_act(actor, s); };
}

// ---------------------------------------------------------------------------
// Single run

inline std::string run_file_stem(SurrogateKind kind, std::uint64_t seed) {
  return "run_" + std::string(to_string(kind)) + "_seed" + std::to_string(seed);
}

struct RunResult {
  std::vector<RunRow> rows;
  Td3State state;
};

// Warmup with uniform random actions, then one TD3 update per environment
// step. Greedy evaluation every eval_every steps on a fixed set of episode
// starts. `progress` (optional) receives each row as it is produced.
inline RunResult train_run(const ExperimentConfig& cfg, SurrogateKind kind, std::uint64_t seed,
                           const std::function<void(const RunRow&)>& progress = {}) {
  validate(cfg);
  const SurrogateSpec spec = cfg.surrogate(kind);
  auto env = make_env(cfg.env);
  const EnvSpec& es = env->spec();

  Rng root(seed);
  Rng init_rng = root.split();
  Rng env_rng = root.split();
  Rng explore_rng = root.split();
  Rng train_rng = root.split();
  const std::uint64_t eval_seed = root.next_u64();

  RunResult out;
  Td3State& st = out.state;
  st = make_td3_state(actor_architecture(cfg, es), cfg.critic_hidden, cfg.td3, init_rng);

  double loss_sum = 0.0, q_sum = 0.0;
  std::size_t loss_n = 0, q_n = 0;
  auto obs = env->reset(env_rng);
  for (std::size_t step = 1; step <= cfg.total_env_steps; ++step) {
    std::vector<double> action;
    if (step <= cfg.td3.warmup_steps) {
      action.resize(es.action_dim);
      for (std::size_t i = 0; i < action.size(); ++i)
        action[i] = explore_rng.uniform(-es.action_bound[i], es.action_bound[i]);
    } else {
      action = select_action(st, cfg.td3, obs, explore_rng, true);
    }
    auto res = env->step(action);
    st.buffer.push({obs, action, res.reward, res.observation, res.done && !res.truncated});
    obs = res.done ? env->reset(env_rng) : std::move(res.observation);

    if (step > cfg.td3.warmup_steps) {
      if (auto m = train_step(st, cfg.td3, spec, train_rng)) {
        loss_sum += 0.5 * (m->critic_loss1 + m->critic_loss2);
        ++loss_n;
        if (m->actor_updated) {
          q_sum += m->mean_q;
          ++q_n;
        }
      }
    }

    if (step % cfg.eval_every == 0) {
      Rng eval_rng(eval_seed);
      const auto returns = rollout_returns(*env, greedy_policy(st.actor), cfg.eval_episodes, eval_rng);
      const auto stats = summarize(returns);
      RunRow row{step,
                 stats.mean,
                 stats.std,
                 loss_n ? loss_sum / double(loss_n) : std::nan(""),
                 q_n ? q_sum / double(q_n) : std::nan(""),
                 std::string(to_string(kind)),
                 seed};
      loss_sum = q_sum = 0.0;
      loss_n = q_n = 0;
      if (progress) progress(row);
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

class GridMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AggregateRow {
  std::string surrogate;
  std::size_t env_step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // population std across runs
  std::size_t runs = 0;
  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

inline constexpr const char* kAggregateCsvHeader = "surrogate,env_step,mean_return,std_return,runs";

namespace detail {
inline int surrogate_rank(const std::string& name) {
  if (name == "rect") return 0;
  if (name == "tri") return 1;
  if (name == "trap") return 2;
  return 3;
}
}  // namespace detail

// Mean and population std of mean_return across runs, per (surrogate,
// env_step). Every run of one surrogate must share the same eval grid.
inline std::vector<AggregateRow> aggregate_runs(const std::vector<std::vector<RunRow>>& runs) {
  if (runs.empty()) throw ValidationError("in", "no run files to aggregate");
  std::map<std::string, std::vector<const std::vector<RunRow>*>> by_kind;
  for (const auto& run : runs) {
    if (run.empty()) throw ValidationError("in", "run file without rows");
    by_kind[run.front().surrogate].push_back(&run);
  }
  std::vector<std::string> kinds;
  for (const auto& [k, v] : by_kind) kinds.push_back(k);
  std::stable_sort(kinds.begin(), kinds.end(), [](const std::string& a, const std::string& b) {
    return detail::surrogate_rank(a) < detail::surrogate_rank(b);
  });

  std::vector<AggregateRow> out;
  for (const auto& kind : kinds) {
    const auto& group = by_kind[kind];
    const auto& grid = *group.front();
    for (const auto* run : group) {
      bool same = run->size() == grid.size();
      for (std::size_t i = 0; same && i < grid.size(); ++i) same = (*run)[i].env_step == grid[i].env_step;
      if (!same) throw GridMismatchError("eval grids differ between runs of surrogate '" + kind + "'");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<double> xs;
      for (const auto* run : group) xs.push_back((*run)[i].mean_return);
      const auto s = summarize(xs);
      out.push_back({kind, grid[i].env_step, s.mean, s.std, xs.size()});
    }
  }
  return out;
}

inline std::string format_aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateCsvHeader) + "\n";
  for (const auto& r : rows)
    out += r.surrogate + "," + std::to_string(r.env_step) + "," + detail::fmt_metric(r.mean_return) + "," +
           detail::fmt_metric(r.std_return) + "," + std::to_string(r.runs) + "\n";
  return out;
}

inline std::vector<AggregateRow> parse_aggregate_csv(const std::string& text, const std::string& origin = "<memory>") {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kAggregateCsvHeader)
    throw ValidationError(origin, "aggregate CSV header mismatch");
  std::vector<AggregateRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(detail::trim(cell));
    if (f.size() != 5) throw ValidationError(origin, "aggregate CSV row malformed");
    rows.push_back({f[0], std::size_t(detail::parse_uint("env_step", f[1])), std::strtod(f[2].c_str(), nullptr),
                    std::strtod(f[3].c_str(), nullptr), std::size_t(detail::parse_uint("runs", f[4]))});
  }
  return rows;
}

// All run_*.csv files in `dir`, sorted by file name.
inline std::vector<std::string> list_run_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir, "not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("run_") && name.ends_with(".csv"))
      files.push_back(entry.path().string());
  }
  if (ec) throw IoError(dir, "cannot list directory");
  std::sort(files.begin(), files.end());
  return files;
}

// Reads every run file in `dir` and writes the aggregate to `out_path`.
// Nothing is written unless aggregation succeeds.
inline std::vector<AggregateRow> aggregate_directory(const std::string& dir, const std::string& out_path) {
  std::vector<std::vector<RunRow>> runs;
  for (const auto& f : list_run_files(dir)) runs.push_back(parse_run_csv(read_text_file(f), f));
  const auto rows = aggregate_runs(runs);
  write_text_file(out_path, format_aggregate_csv(rows));
  return rows;
}

// ---------------------------------------------------------------------------
// SVG learning curves

inline std::string render_svg(const std::vector<AggregateRow>& rows, const std::string& title = "Greedy evaluation return") {
  if (rows.empty()) throw ValidationError("in", "nothing to plot");
  constexpr double W = 800, H = 500, L = 80, R = 150, T = 50, B = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  std::vector<std::string> kinds;
  for (const auto& r : rows) {
    xmin = std::min(xmin, double(r.env_step));
    xmax = std::max(xmax, double(r.env_step));
    ymin = std::min(ymin, r.mean_return - r.std_return);
    ymax = std::max(ymax, r.mean_return + r.std_return);
    if (std::find(kinds.begin(), kinds.end(), r.surrogate) == kinds.end()) kinds.push_back(r.surrogate);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymax += 1;
    ymin -= 1;
  }
  const auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * (H - T - B); };
  const auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
    << W << " " << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0, yv = ymin + (ymax - ymin) * i / 4.0;
    o << "<text x=\"" << f(px(xv)) << "\" y=\"" << H - B + 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << std::llround(xv) << "</text>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << f(py(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << f(yv) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">environment steps</text>\n";

  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const char* color = colors[k % 5];
    std::vector<const AggregateRow*> series;
    for (const auto& r : rows)
      if (r.surrogate == kinds[k]) series.push_back(&r);
    std::string upper, lower, line;
    for (const auto* r : series) {
      upper += f(px(double(r->env_step))) + "," + f(py(r->mean_return + r->std_return)) + " ";
      line += f(px(double(r->env_step))) + "," + f(py(r->mean_return)) + " ";
    }
    for (auto it = series.rbegin(); it != series.rend(); ++it)
      lower += f(px(double((*it)->env_step))) + "," + f(py((*it)->mean_return - (*it)->std_return)) + " ";
    o << "<polygon class=\"band\" data-surrogate=\"" << kinds[k] << "\" points=\"" << upper << lower
      << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    o << "<polyline class=\"mean\" data-surrogate=\"" << kinds[k] << "\" points=\"" << line << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n";
    const double ly = T + 20 + 22.0 * double(k);
    o << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    o << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << kinds[k] << "</text>\n";
  }
  o << "<text x=\"" << W - R + 15 << "\" y=\"" << T + 20 + 22.0 * double(kinds.size()) + 6
    << "\" font-family=\"sans-serif\" font-size=\"10\">band: mean &#177; 1 std</text>\n";
  o << "<text x=\"" << W - R + 15 << "\" y=\"" << T + 20 + 22.0 * double(kinds.size()) + 20
    << "\" font-family=\"sans-serif\" font-size=\"10\">(population, n runs)</text>\n";
  o << "</svg>\n";
  return o.str();
}

inline void plot_file(const std::string& in_path, const std::string& out_path) {
  const auto rows = parse_aggregate_csv(read_text_file(in_path), in_path);
  write_text_file(out_path, render_svg(rows));
}

// ---------------------------------------------------------------------------
// Whole experiment

inline std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SGRL_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, std::size_t(cap));
  }
  return n;
}

// Training allocates megabyte-sized traces every step. glibc would hand those
// straight back to the OS and fault them in again each time, which costs more
// than the arithmetic. Keep them on the heap instead. Process-wide, so only
// executables call this.
inline void keep_large_allocations() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

struct ExperimentOutputs {
  std::vector<std::string> run_files;
  std::vector<std::string> checkpoints;
  std::string aggregate_file;
};

// Every (surrogate, seed) pair trains independently and writes its own CSV
// and checkpoint; the aggregate is written after all runs have finished.
inline ExperimentOutputs run_experiment(const ExperimentConfig& cfg, std::size_t threads = worker_threads(),
                                        const std::function<void(const RunRow&)>& progress = {}) {
  namespace fs = std::filesystem;
  validate(cfg);
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) throw IoError(cfg.output_dir, "cannot create output directory");
  {
    const std::string probe = (fs::path(cfg.output_dir) / ".write_probe").string();
    std::ofstream f(probe);
    if (!f) throw IoError(cfg.output_dir, "output directory is not writable");
    f.close();
    fs::remove(probe, ec);
  }

  struct Job {
    SurrogateKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto kind : cfg.surrogates)
    for (auto seed : cfg.seeds) jobs.push_back({kind, seed});

  ExperimentOutputs out;
  std::vector<std::vector<RunRow>> results(jobs.size());
  for (const auto& j : jobs) {
    const auto stem = (fs::path(cfg.output_dir) / run_file_stem(j.kind, j.seed)).string();
    out.run_files.push_back(stem + ".csv");
    out.checkpoints.push_back(stem + ".sgrl");
  }

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        auto run = train_run(cfg, jobs[i].kind, jobs[i].seed, [&](const RunRow& row) {
          if (!progress) return;
          std::lock_guard lock(progress_mutex);
          progress(row);
        });
        write_text_file(out.run_files[i], format_run_csv(run.rows));
        write_checkpoint(out.checkpoints[i], to_checkpoint(run.state));
        results[i] = std::move(run.rows);
      } catch (...) {
        std::lock_guard lock(progress_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  out.aggregate_file = (fs::path(cfg.output_dir) / "aggregate.csv").string();
  write_text_file(out.aggregate_file, format_aggregate_csv(aggregate_runs(results)));
  return out;
}

}  // namespace sgrl
