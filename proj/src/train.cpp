#include "gfn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include "gfn/buffer.hpp"
#include "gfn/checkpoint.hpp"
#include "gfn/env_core.hpp"
#include "gfn/envs/dag.hpp"
#include "gfn/envs/hypergrid.hpp"
#include "gfn/envs/ising.hpp"
#include "gfn/envs/phylo.hpp"
#include "gfn/envs/sequences.hpp"
#include "gfn/errors.hpp"
#include "gfn/exact.hpp"
#include "gfn/optim.hpp"

namespace gfn {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw config_error("cannot write " + path);
  os << text;
}

// ---------------------------------------------------------------------------
// Settings

struct EnvDefaults {
  int64_t iterations = 1000;
  int batch = 16;
  double lr = 1e-3;
  double z_lr = 0.1;
  double weight_decay = 0.0;
  const char* hidden = "256,256";
  double logz_init = 0.0;
  const char* objective = "tb";
  double eps_start = 0.0;
  double eps_end = 0.0;
  int64_t eps_horizon = 0;  // -1 = half of training
  const char* lr_schedule = "constant";
  double lr_end = -1.0;  // -1 = same as lr
  int64_t warmup = 0;
  double ema_tau = 0.0;
  double terminal_penalty = 1.0;
  const char* metrics = "";
};

struct TrainSettings {
  int64_t iterations = 1000;
  int batch_size = 16;
  int64_t eval_interval = 500;
  uint64_t seed = 0;
  std::vector<int> hidden = {256, 256};
  double logz_init = 0.0;
  LossConfig loss;
  AdamConfig adam;
  Schedule lr_sched;
  AdamConfig adam_z;
  Schedule eps_sched;
  double ema_tau = 0.0;
  bool eval_with_ema = false;
  int64_t buffer_capacity = 200000;
  int mc_samples = 10;
  std::vector<std::string> metric_names;
};

Schedule read_schedule(Config& cfg, const std::string& prefix, const std::string& kind_def,
                       double start_def, double end_def, int64_t warmup_def,
                       int64_t horizon_def, int64_t iterations) {
  Schedule s;
  const std::string kind = cfg.get_string(prefix + ".schedule", kind_def);
  if (kind == "constant")
    s.kind = Schedule::Kind::kConstant;
  else if (kind == "linear")
    s.kind = Schedule::Kind::kLinear;
  else if (kind == "cosine")
    s.kind = Schedule::Kind::kCosine;
  else
    throw config_error("unknown schedule kind: " + kind);
  s.start_value = cfg.get_double(prefix + ".start", start_def);
  s.end_value = cfg.get_double(prefix + ".end", end_def);
  s.warmup = cfg.get_int(prefix + ".warmup", warmup_def);
  int64_t horizon = cfg.get_int(prefix + ".horizon", horizon_def);
  if (horizon < 0) horizon = std::max<int64_t>(1, iterations / 2);
  if (horizon == 0) horizon = std::max<int64_t>(1, iterations - s.warmup);
  s.horizon = horizon;
  return s;
}

TrainSettings read_settings(Config& cfg, const EnvDefaults& d) {
  TrainSettings s;
  s.iterations = cfg.get_int("train.iterations", d.iterations);
  s.batch_size = static_cast<int>(cfg.get_int("train.batch_size", d.batch));
  s.eval_interval = cfg.get_int("eval.interval", 500);
  s.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  cfg.set_default("mlp.hidden", d.hidden);
  s.hidden = cfg.get_int_list("mlp.hidden");
  s.logz_init = cfg.get_double("mlp.logz_init", d.logz_init);
  s.loss.objective = objective_from_name(cfg.get_string("objective.name", d.objective));
  s.loss.subtb_lambda = cfg.get_double("objective.subtb_lambda", 0.9);
  s.loss.learned_backward = cfg.get_bool("objective.learned_backward", false);
  s.loss.terminal_penalty = cfg.get_double("objective.terminal_penalty", d.terminal_penalty);
  s.adam.beta1 = cfg.get_double("optimizer.beta1", 0.9);
  s.adam.beta2 = cfg.get_double("optimizer.beta2", 0.999);
  s.adam.eps = cfg.get_double("optimizer.eps", 1e-8);
  s.adam.weight_decay = cfg.get_double("optimizer.weight_decay", d.weight_decay);
  const double lr = cfg.get_double("optimizer.lr", d.lr);
  s.lr_sched = read_schedule(cfg, "optimizer.lr_anneal", d.lr_schedule, lr,
                             d.lr_end < 0 ? lr : d.lr_end, d.warmup, 0, s.iterations);
  s.adam.lr = lr;
  s.adam_z = s.adam;
  s.adam_z.lr = cfg.get_double("optimizer.z_lr", d.z_lr);
  s.adam_z.weight_decay = 0.0;
  s.eps_sched = read_schedule(cfg, "explore", d.eps_start == d.eps_end ? "constant" : "linear",
                              d.eps_start, d.eps_end, 0, d.eps_horizon, s.iterations);
  s.ema_tau = cfg.get_double("ema.tau", d.ema_tau);
  s.eval_with_ema = cfg.get_bool("ema.eval", s.ema_tau > 0.0);
  s.buffer_capacity = cfg.get_int("eval.buffer_capacity", 200000);
  s.mc_samples = static_cast<int>(cfg.get_int("eval.mc_samples", 10));
  s.metric_names = cfg.get_string_list(std::string("eval.metrics"));
  return s;
}

// ---------------------------------------------------------------------------
// Scenario: environment + settings + named metric closures.

using MetricFn = std::function<double(const MlpParams& policy, const FifoBuffer& buffer,
                                      int64_t step)>;

template <VectorEnv E>
struct Scenario {
  E env;
  typename E::Params params;
  TrainSettings settings;
  std::vector<std::pair<std::string, MetricFn>> metrics;
};

bool objective_needs_flow(Objective o) {
  return o == Objective::kDB || o == Objective::kSubTB || o == Objective::kFLDB;
}

template <VectorEnv E>
MlpParams init_policy(const Scenario<E>& sc, const RngKey& key) {
  return mlp_init(sc.env.obs_dim(sc.params), sc.settings.hidden, sc.env.num_actions(sc.params),
                  sc.env.num_backward_actions(sc.params), key, sc.settings.logz_init);
}

// One optimization step on a sampled batch; returns the loss value.
template <VectorEnv E>
double train_step(const Scenario<E>& sc, MlpParams& policy, AdamState& opt_main,
                  AdamState& opt_z, const TrajectoryBatch& batch, double lr) {
  const TrainSettings& s = sc.settings;
  Tape tape;
  MlpTapeBind bind =
      mlp_forward_tape(tape, policy, batch.obs_tensor(), s.loss.learned_backward,
                       objective_needs_flow(s.loss.objective));
  HeadVars heads;
  heads.fwd_logits = bind.fwd_logits;
  heads.bwd_logits = bind.bwd_logits;
  heads.log_flow = bind.log_flow;
  heads.log_z = bind.log_z;
  const Tape::Var loss = build_loss(tape, batch, heads, s.loss);
  const double loss_val = tape.value(loss).data[0];
  if (!std::isfinite(loss_val)) throw numeric_error("training loss is not finite");
  tape.backward(loss);
  auto tensors = policy.tensors();
  std::vector<const Tensor*> grads;
  grads.reserve(tensors.size());
  for (Tape::Var v : bind.leaves) grads.push_back(&tape.grad(v));
  adam_step(opt_main, tensors, grads, s.adam, lr);
  if (s.loss.objective == Objective::kTB) {
    std::vector<Tensor*> zp = {&policy.log_z};
    std::vector<const Tensor*> zg = {&tape.grad(bind.log_z_leaf)};
    adam_step(opt_z, zp, zg, s.adam_z);
  }
  return loss_val;
}

template <VectorEnv E>
TrainResult train_scenario(const Scenario<E>& sc, const std::string& out_dir,
                           std::string resolved_config) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const TrainSettings& s = sc.settings;
  const E& env = sc.env;
  const auto& p = sc.params;

  const RngKey root = make_key(s.seed);
  MlpParams policy = init_policy(sc, fold_in(root, 0));
  MlpParams shadow = policy;
  AdamState opt_main = adam_init(policy.tensors());
  std::vector<Tensor*> zp = {&policy.log_z};
  AdamState opt_z = adam_init(zp);
  FifoBuffer buffer(s.buffer_capacity);

  RolloutOptions ropt;
  ropt.record_delta_log_reward = sc.settings.loss.objective == Objective::kMDB;

  const std::string csv_path = out_dir + "/metrics.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw config_error("cannot write " + csv_path);
  csv << "step,loss,logZ";
  for (const auto& [name, fn] : sc.metrics) csv << "," << name;
  csv << "\n";

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  double loss_val = 0.0;
  for (int64_t it = 0; it < s.iterations; ++it) {
    const double lr = schedule_value(s.lr_sched, it);
    const double eps = schedule_value(s.eps_sched, it);
    TrajectoryBatch batch =
        forward_rollout(env, p, policy, s.batch_size, fold_in(root, 1000 + it), eps, ropt);
    loss_val = train_step(sc, policy, opt_main, opt_z, batch, lr);
    if (s.ema_tau > 0.0) ema_update(shadow, policy, s.ema_tau);
    buffer.push_batch(batch.terminal_keys);
    if ((it + 1) % s.eval_interval == 0 || it + 1 == s.iterations) {
      const MlpParams& eval_params = s.eval_with_ema ? shadow : policy;
      csv << (it + 1) << "," << fmt(loss_val) << "," << fmt(policy.log_z.data[0]);
      result.final_metrics.clear();
      for (const auto& [name, fn] : sc.metrics) {
        const double v = fn(eval_params, buffer, it + 1);
        result.final_metrics[name] = v;
        csv << "," << fmt(v);
      }
      csv << "\n";
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  const double seconds = std::chrono::duration<double>(t1 - t0).count();

  Checkpoint ck;
  ck.params = policy;
  ck.opt_main = opt_main;
  ck.opt_z = opt_z;
  ck.step = s.iterations;
  const std::string ck_path = out_dir + "/checkpoint.bin";
  save_checkpoint(ck, ck_path);
  write_text(out_dir + "/config_resolved.txt", resolved_config);
  write_text(out_dir + "/timing.txt",
             "wall_time_s " + fmt(seconds) + "\niterations_per_second " +
                 fmt(s.iterations / std::max(seconds, 1e-9)) + "\n");

  result.iterations = s.iterations;
  result.final_loss = loss_val;
  result.final_log_z = policy.log_z.data[0];
  result.metrics_csv = csv_path;
  result.checkpoint = ck_path;
  return result;
}

template <VectorEnv E>
std::map<std::string, double> eval_scenario(const Scenario<E>& sc,
                                            const std::string& checkpoint_path,
                                            const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  FifoBuffer buffer(sc.settings.buffer_capacity);
  // Fill the buffer from the stored policy so sample-based metrics have data.
  const RngKey key = fold_in(make_key(sc.settings.seed), 0xEA);
  auto batch = forward_rollout(sc.env, sc.params, ck.params,
                               std::max(64, sc.settings.batch_size), key, 0.0);
  buffer.push_batch(batch.terminal_keys);
  std::map<std::string, double> out;
  std::ofstream csv(out_dir + "/eval.csv");
  csv << "step,logZ";
  for (const auto& [name, fn] : sc.metrics) csv << "," << name;
  csv << "\n" << ck.step << "," << fmt(ck.params.log_z.data[0]);
  for (const auto& [name, fn] : sc.metrics) {
    const double v = fn(ck.params, buffer, ck.step);
    out[name] = v;
    csv << "," << fmt(v);
  }
  csv << "\n";
  return out;
}

template <VectorEnv E>
BenchReport bench_scenario(const Scenario<E>& sc, int repeats, int64_t iters, int64_t warmup) {
  BenchReport rep;
  rep.repeats = repeats;
  rep.iters = iters;
  rep.warmup = warmup;
  std::vector<double> rates;
  for (int r = 0; r < repeats; ++r) {
    const RngKey root = make_key(sc.settings.seed);
    MlpParams policy = init_policy(sc, fold_in(root, 0));
    AdamState opt_main = adam_init(policy.tensors());
    std::vector<Tensor*> zp = {&policy.log_z};
    AdamState opt_z = adam_init(zp);
    RolloutOptions ropt;
    ropt.record_delta_log_reward = sc.settings.loss.objective == Objective::kMDB;
    auto run_iters = [&](int64_t lo, int64_t hi) {
      for (int64_t it = lo; it < hi; ++it) {
        const double lr = schedule_value(sc.settings.lr_sched, it);
        const double eps = schedule_value(sc.settings.eps_sched, it);
        TrajectoryBatch batch = forward_rollout(sc.env, sc.params, policy,
                                                sc.settings.batch_size,
                                                fold_in(root, 1000 + it), eps, ropt);
        train_step(sc, policy, opt_main, opt_z, batch, lr);
      }
    };
    run_iters(0, warmup);
    const auto t0 = std::chrono::steady_clock::now();
    run_iters(warmup, warmup + iters);
    const auto t1 = std::chrono::steady_clock::now();
    rates.push_back(iters / std::chrono::duration<double>(t1 - t0).count());
  }
  double mean = 0.0;
  for (double v : rates) mean += v;
  mean /= repeats;
  double var = 0.0;
  for (double v : rates) var += (v - mean) * (v - mean);
  var = repeats > 1 ? var / (repeats - 1) : 0.0;
  rep.mean_iters_per_second = mean;
  rep.stderr3 = 3.0 * std::sqrt(var / repeats);
  return rep;
}

// ---------------------------------------------------------------------------
// Shared metric helpers

double offdiag_pearson(const Tensor& a, const Tensor& b, int d) {
  std::vector<double> xs, ys;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      xs.push_back(a(i, j));
      ys.push_back(b(i, j));
    }
  return pearson(xs, ys);
}

// ---------------------------------------------------------------------------
// Per-environment scenario builders

Scenario<HypergridEnv> build_hypergrid(Config& cfg) {
  EnvDefaults d;
  d.iterations = 62500;  // 1e6 trajectories at batch 16
  d.lr = 1e-3;
  d.z_lr = 0.1;
  d.metrics = "tv_buffer";
  Scenario<HypergridEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);
  sc.params.dim = static_cast<int>(cfg.get_int("env.dim", 2));
  sc.params.side = static_cast<int>(cfg.get_int("env.side", 8));
  sc.params.r0 = cfg.get_double("env.r0", 1e-3);
  sc.params.r1 = cfg.get_double("env.r1", 0.5);
  sc.params.r2 = cfg.get_double("env.r2", 2.0);
  HypergridEnv::validate(sc.params);
  sc.settings.loss.stop_action = sc.env.stop_action(sc.params);
  const int64_t cap = cfg.get_int("eval.enumeration_cap", 1000000);

  auto exact = std::make_shared<ExactDistribution>(grid_exact_distribution(sc.params, cap));
  for (const auto& name : sc.settings.metric_names) {
    if (name == "tv_buffer") {
      sc.metrics.emplace_back(name, [exact](const MlpParams&, const FifoBuffer& buf, int64_t) {
        return tv_distance(buf.empirical(), *exact);
      });
    } else if (name == "tv_exact" || name == "jsd_exact") {
      auto graph = std::make_shared<StateGraph<HypergridEnv>>(
          enumerate_state_graph(sc.env, sc.params, cap * 2 + 16));
      auto env = sc.env;
      auto params = sc.params;
      const bool is_tv = name == "tv_exact";
      sc.metrics.emplace_back(
          name, [exact, graph, env, params, is_tv](const MlpParams& policy, const FifoBuffer&,
                                                   int64_t) {
            auto marg = exact_policy_marginal(env, params, *graph, policy);
            return is_tv ? tv_distance(marg, *exact) : jsd(marg, *exact);
          });
    } else {
      throw config_error("hypergrid: unknown metric " + name);
    }
  }
  return sc;
}

Scenario<SequenceEnv> build_bitseq(Config& cfg) {
  EnvDefaults d;
  d.iterations = 50000;
  d.lr = 1e-3;
  d.z_lr = 0.05;
  d.weight_decay = 1e-5;
  d.eps_start = d.eps_end = 1e-3;
  d.metrics = "pearson";
  Scenario<SequenceEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);

  const int n_bits = static_cast<int>(cfg.get_int("env.n_bits", 8));
  const int k = static_cast<int>(cfg.get_int("env.k", 2));
  if (k < 1 || n_bits % k != 0) throw config_error("bitseq: k must divide n_bits");
  const double beta = cfg.get_double("env.beta", 3.0);
  std::shared_ptr<ModeSet> modes;
  if (cfg.has("env.modes_file")) {
    modes = std::make_shared<ModeSet>(load_modes(cfg.get_string("env.modes_file")));
    if (modes->n_bits != n_bits) throw config_error("bitseq: modes file length mismatch");
  } else {
    const int num_modes = static_cast<int>(cfg.get_int("env.num_modes", 60));
    const uint64_t mseed = static_cast<uint64_t>(cfg.get_int("env.modes_seed", 0));
    modes = std::make_shared<ModeSet>(
        generate_modes(n_bits, beta, num_modes, fold_in(make_key(mseed), 0x30DE)));
  }
  modes->beta = beta;
  sc.params.scheme = SeqScheme::kNonAutoregressive;
  sc.params.max_len = n_bits / k;
  sc.params.vocab = 1 << k;
  sc.params.bit_block = k;
  sc.params.reward = modes;
  SequenceEnv::validate(sc.params);
  sc.settings.loss.stop_action = -1;

  auto test_set = std::make_shared<std::vector<std::string>>(
      generate_test_set(*modes, fold_in(make_key(
          static_cast<uint64_t>(cfg.get_int("env.test_seed", 1))), 0x7E57)));
  auto env = sc.env;
  auto params = sc.params;
  const int mc = sc.settings.mc_samples;
  const bool learned_bwd = sc.settings.loss.learned_backward;
  const uint64_t seed = sc.settings.seed;
  for (const auto& name : sc.settings.metric_names) {
    if (name == "pearson") {
      auto reward = modes;
      sc.metrics.emplace_back(
          name, [env, params, test_set, reward, mc, learned_bwd, seed](
                    const MlpParams& policy, const FifoBuffer&, int64_t step) {
            std::vector<double> log_p, log_r;
            const RngKey mkey = fold_in(fold_in(make_key(seed), 0x3E7A), step);
            for (size_t i = 0; i < test_set->size(); ++i) {
              auto inst = env.terminal_from_key((*test_set)[i], params);
              log_p.push_back(mc_terminal_logprob(env, params, policy, learned_bwd, inst, mc,
                                                  fold_in(mkey, i)));
              log_r.push_back(reward->log_reward((*test_set)[i]));
            }
            return pearson(log_p, log_r);
          });
    } else if (name == "tv_exact") {
      auto graph = std::make_shared<StateGraph<SequenceEnv>>(
          enumerate_state_graph(env, params));
      auto exact = std::make_shared<ExactDistribution>([&] {
        ExactDistribution dist;
        for (int s = 0; s < graph->num_states(); ++s)
          if (graph->is_terminal[s])
            dist.add(env.encode_terminal(graph->states[s], params),
                     std::exp(env.log_reward_of(graph->states[s], params)));
        dist.normalize();
        return dist;
      }());
      sc.metrics.emplace_back(name, [env, params, graph, exact](const MlpParams& policy,
                                                                const FifoBuffer&, int64_t) {
        return tv_distance(exact_policy_marginal(env, params, *graph, policy), *exact);
      });
    } else {
      throw config_error("bitseq: unknown metric " + name);
    }
  }
  return sc;
}

Scenario<SequenceEnv> build_sequence(Config& cfg) {
  EnvDefaults d;
  d.iterations = 1000000;
  d.lr = 5e-4;
  d.z_lr = 0.05;
  d.eps_start = 1.0;
  d.eps_end = 0.0;
  d.eps_horizon = 50000;
  d.metrics = "tv_buffer";
  Scenario<SequenceEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);

  sc.params.scheme = seq_scheme_from_name(cfg.get_string("env.scheme", "autoregressive"));
  sc.params.max_len = static_cast<int>(cfg.get_int("env.max_len", 8));
  sc.params.vocab = static_cast<int>(cfg.get_int("env.vocab", 4));
  sc.params.bit_block = static_cast<int>(cfg.get_int("env.bit_block", 0));
  auto table = load_reward_table(cfg.get_string("env.table_file"));
  table->r_min = cfg.get_double("env.r_min", 0.0);
  table->exponent = cfg.get_double("env.reward_exponent", 1.0);
  std::shared_ptr<const RewardTable> reward = table;
  sc.params.reward = reward;
  SequenceEnv::validate(sc.params);
  sc.settings.loss.stop_action = sc.env.stop_action(sc.params);

  auto env = sc.env;
  auto params = sc.params;
  for (const auto& name : sc.settings.metric_names) {
    if (name == "tv_buffer") {
      auto graph = std::make_shared<StateGraph<SequenceEnv>>(
          enumerate_state_graph(env, params,
                                cfg.get_int("eval.enumeration_cap", 2000000)));
      auto exact = std::make_shared<ExactDistribution>([&] {
        ExactDistribution dist;
        for (int s = 0; s < graph->num_states(); ++s)
          if (graph->is_terminal[s])
            dist.add(env.encode_terminal(graph->states[s], params),
                     std::exp(env.log_reward_of(graph->states[s], params)));
        dist.normalize();
        return dist;
      }());
      sc.metrics.emplace_back(name, [exact](const MlpParams&, const FifoBuffer& buf, int64_t) {
        return tv_distance(buf.empirical(), *exact);
      });
    } else if (name == "topk_reward" || name == "topk_diversity") {
      const int topk = static_cast<int>(cfg.get_int("eval.topk", 100));
      const bool want_reward = name == "topk_reward";
      sc.metrics.emplace_back(
          name, [reward, topk, want_reward](const MlpParams&, const FifoBuffer& buf, int64_t) {
            auto samples = buf.snapshot();
            if (static_cast<int>(samples.size()) < topk)
              return std::numeric_limits<double>::quiet_NaN();
            std::vector<double> rewards;
            rewards.reserve(samples.size());
            for (const auto& s : samples) rewards.push_back(std::exp(reward->log_reward(s)));
            auto res = topk_reward_diversity(samples, rewards, topk);
            return want_reward ? res.mean_reward : res.diversity;
          });
    } else {
      throw config_error("sequence: unknown metric " + name);
    }
  }
  return sc;
}

Scenario<DagEnv> build_dag(Config& cfg) {
  EnvDefaults d;
  d.iterations = 100000;
  d.batch = 128;
  d.lr = 1e-4;
  d.hidden = "128,128";
  d.objective = "mdb";
  d.eps_start = 1.0;
  d.eps_end = 0.1;
  d.eps_horizon = -1;  // half of training
  d.metrics = "jsd_exact,edge_corr,path_corr,mb_corr";
  Scenario<DagEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);

  sc.params.d = static_cast<int>(cfg.get_int("env.d", 5));
  DagDataset data;
  if (cfg.has("env.data_csv")) {
    data = load_dag_dataset(cfg.get_string("env.data_csv"), cfg.get_string("env.data_meta"));
  } else {
    const uint64_t dseed = static_cast<uint64_t>(cfg.get_int("env.data_seed", 0));
    data = generate_er_dataset(sc.params.d, cfg.get_double("env.expected_in_degree", 1.0),
                               static_cast<int>(cfg.get_int("env.data_n", 100)),
                               fold_in(make_key(dseed), 0xDA7A));
    data.seed = dseed;
  }
  if (data.d != sc.params.d) throw config_error("dag: dataset dimension mismatch");
  const std::string score = cfg.get_string("env.score", "lingauss");
  std::shared_ptr<LocalScoreCache> cache;
  if (score == "lingauss") {
    LocalScoreCache::LinGaussConfig lc;
    lc.noise_var = cfg.get_double("env.noise_var", 0.1);
    lc.weight_var = cfg.get_double("env.weight_var", 1.0);
    cache = std::make_shared<LocalScoreCache>(LocalScoreCache::lingauss(data, lc));
  } else if (score == "bge") {
    LocalScoreCache::BgeConfig bc;
    bc.alpha_mu = cfg.get_double("env.alpha_mu", 1.0);
    bc.alpha_w = cfg.get_double("env.alpha_w", 0.0);
    cache = std::make_shared<LocalScoreCache>(LocalScoreCache::bge(data, bc));
  } else {
    throw config_error("dag: unknown score " + score);
  }
  sc.params.score = cache;
  DagEnv::validate(sc.params);
  sc.settings.loss.stop_action = sc.env.stop_action(sc.params);

  auto env = sc.env;
  auto params = sc.params;
  std::shared_ptr<ExactDistribution> posterior;
  std::shared_ptr<StateGraph<DagEnv>> graph;
  auto need_posterior = [&] {
    if (!posterior)
      posterior = std::make_shared<ExactDistribution>(dag_exact_posterior(*cache));
    if (!graph)
      graph = std::make_shared<StateGraph<DagEnv>>(enumerate_state_graph(
          env, params, cfg.get_int("eval.enumeration_cap", 2000000)));
  };
  for (const auto& name : sc.settings.metric_names) {
    if (name == "jsd_exact") {
      need_posterior();
      sc.metrics.emplace_back(
          name, [env, params, graph, posterior](const MlpParams& policy, const FifoBuffer&,
                                                int64_t) {
            return jsd(exact_policy_marginal(env, params, *graph, policy), *posterior);
          });
    } else if (name == "jsd_buffer") {
      need_posterior();
      sc.metrics.emplace_back(
          name, [posterior](const MlpParams&, const FifoBuffer& buf, int64_t) {
            auto emp = buf.empirical();
            ExactDistribution dist;
            for (size_t i = 0; i < posterior->keys.size(); ++i) {
              auto it = emp.counts.find(posterior->keys[i]);
              dist.add(posterior->keys[i],
                       it == emp.counts.end()
                           ? 0.0
                           : static_cast<double>(it->second) / emp.total);
            }
            return jsd(dist.probs, posterior->probs);
          });
    } else if (name == "edge_corr" || name == "path_corr" || name == "mb_corr") {
      need_posterior();
      const DagFeature kind = name == "edge_corr"
                                  ? DagFeature::kEdge
                                  : (name == "path_corr" ? DagFeature::kPath
                                                         : DagFeature::kMarkovBlanket);
      const int dim = sc.params.d;
      sc.metrics.emplace_back(
          name, [env, params, graph, posterior, kind, dim](const MlpParams& policy,
                                                           const FifoBuffer&, int64_t) {
            auto marg = exact_policy_marginal(env, params, *graph, policy);
            return offdiag_pearson(feature_marginals(marg, dim, kind),
                                   feature_marginals(*posterior, dim, kind), dim);
          });
    } else {
      throw config_error("dag: unknown metric " + name);
    }
  }
  return sc;
}

Scenario<IsingEnv> build_ising(Config& cfg) {
  EnvDefaults d;
  d.iterations = 20000;
  d.batch = 256;
  d.hidden = "256,256,256,256";
  d.lr = 1e-3;
  d.metrics = "tv_exact";
  Scenario<IsingEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);
  const int side = static_cast<int>(cfg.get_int("env.side", 3));
  const double sigma = cfg.get_double("env.sigma", 0.2);
  sc.params.coupling = std::make_shared<IsingCoupling>(toroidal_coupling(side, sigma));
  IsingEnv::validate(sc.params);
  sc.settings.loss.stop_action = -1;

  auto env = sc.env;
  auto params = sc.params;
  for (const auto& name : sc.settings.metric_names) {
    if (name == "tv_exact") {
      if (side * side > 20) throw config_error("ising: tv_exact unsupported for D > 20");
      auto exact =
          std::make_shared<ExactDistribution>(ising_exact_distribution(*params.coupling));
      auto graph = std::make_shared<StateGraph<IsingEnv>>(enumerate_state_graph(
          env, params, cfg.get_int("eval.enumeration_cap", 2000000)));
      sc.metrics.emplace_back(name, [env, params, graph, exact](const MlpParams& policy,
                                                                const FifoBuffer&, int64_t) {
        return tv_distance(exact_policy_marginal(env, params, *graph, policy), *exact);
      });
    } else if (name == "tv_buffer") {
      if (side * side > 20) throw config_error("ising: tv_buffer unsupported for D > 20");
      auto exact =
          std::make_shared<ExactDistribution>(ising_exact_distribution(*params.coupling));
      sc.metrics.emplace_back(name, [exact](const MlpParams&, const FifoBuffer& buf, int64_t) {
        return tv_distance(buf.empirical(), *exact);
      });
    } else {
      throw config_error("ising: unknown metric " + name);
    }
  }
  return sc;
}

Scenario<PhyloEnv> build_phylo(Config& cfg) {
  EnvDefaults d;
  d.iterations = 100000;
  d.batch = 32;
  d.lr = 3e-4;
  d.lr_end = 1e-5;
  d.lr_schedule = "cosine";
  d.warmup = 5000;
  d.hidden = "256,256,256";
  d.objective = "fldb";
  d.eps_start = 1.0;
  d.eps_end = 0.0;
  d.eps_horizon = -1;
  d.ema_tau = 0.005;
  d.metrics = "pearson_policy";
  Scenario<PhyloEnv> sc;
  cfg.set_default("eval.metrics", d.metrics);
  sc.settings = read_settings(cfg, d);

  std::shared_ptr<SpeciesData> species;
  if (cfg.has("env.species_file")) {
    species = std::make_shared<SpeciesData>(load_species(cfg.get_string("env.species_file")));
  } else {
    species = std::make_shared<SpeciesData>(
        synth_species(static_cast<int>(cfg.get_int("env.n_species", 6)),
                      static_cast<int>(cfg.get_int("env.sites", 8)),
                      cfg.get_string("env.alphabet", "ACGT"),
                      fold_in(make_key(static_cast<uint64_t>(
                                  cfg.get_int("env.species_seed", 0))),
                              0x5BEC)));
  }
  sc.params.species = species;
  sc.params.alpha = cfg.get_double("env.alpha", 4.0);
  sc.params.c = cfg.get_double("env.c", 0.0);
  PhyloEnv::validate(sc.params);
  sc.settings.loss.stop_action = -1;

  auto env = sc.env;
  auto params = sc.params;
  const int mc = sc.settings.mc_samples;
  const bool learned_bwd = sc.settings.loss.learned_backward;
  const uint64_t seed = sc.settings.seed;
  const int sample_count = static_cast<int>(cfg.get_int("eval.policy_samples", 32));
  for (const auto& name : sc.settings.metric_names) {
    if (name == "pearson_policy") {
      sc.metrics.emplace_back(
          name, [env, params, mc, learned_bwd, seed, sample_count](
                    const MlpParams& policy, const FifoBuffer&, int64_t step) {
            const RngKey mkey = fold_in(fold_in(make_key(seed), 0xFE11), step);
            auto terminals = sample_terminals(env, params, policy, sample_count, mkey);
            std::vector<double> log_p, log_r;
            for (size_t i = 0; i < terminals.size(); ++i) {
              log_p.push_back(mc_terminal_logprob(env, params, policy, learned_bwd,
                                                  terminals[i], mc, fold_in(mkey, 1000 + i)));
              log_r.push_back(env.log_reward_of(terminals[i], params));
            }
            try {
              return pearson(log_p, log_r);
            } catch (const numeric_error&) {
              return std::numeric_limits<double>::quiet_NaN();  // degenerate sample rewards
            }
          });
    } else if (name == "tv_exact") {
      auto graph = std::make_shared<StateGraph<PhyloEnv>>(enumerate_state_graph(
          env, params, cfg.get_int("eval.enumeration_cap", 2000000)));
      auto exact = std::make_shared<ExactDistribution>([&] {
        ExactDistribution dist;
        for (int s = 0; s < graph->num_states(); ++s)
          if (graph->is_terminal[s])
            dist.add(env.encode_terminal(graph->states[s], params),
                     std::exp(env.log_reward_of(graph->states[s], params)));
        dist.normalize();
        return dist;
      }());
      sc.metrics.emplace_back(name, [env, params, graph, exact](const MlpParams& policy,
                                                                const FifoBuffer&, int64_t) {
        return tv_distance(exact_policy_marginal(env, params, *graph, policy), *exact);
      });
    } else {
      throw config_error("phylo: unknown metric " + name);
    }
  }
  return sc;
}

template <class F>
auto dispatch_env(Config& cfg, F&& f) {
  const std::string name = cfg.get_string("env.name");
  if (name == "hypergrid") return f(build_hypergrid(cfg));
  if (name == "bitseq") return f(build_bitseq(cfg));
  if (name == "sequence") return f(build_sequence(cfg));
  if (name == "dag") return f(build_dag(cfg));
  if (name == "ising") return f(build_ising(cfg));
  if (name == "phylo") return f(build_phylo(cfg));
  throw config_error("unknown env.name: " + name);
}

}  // namespace

TrainResult run_train(Config& cfg, const std::string& out_dir) {
  return dispatch_env(cfg, [&](auto sc) {
    cfg.ensure_all_consumed();
    return train_scenario(sc, out_dir, cfg.resolved());
  });
}

std::map<std::string, double> run_eval(Config& cfg, const std::string& checkpoint_path,
                                       const std::string& out_dir) {
  return dispatch_env(cfg, [&](auto sc) {
    cfg.ensure_all_consumed();
    return eval_scenario(sc, checkpoint_path, out_dir);
  });
}

BenchReport run_bench(Config& cfg) {
  const int repeats = static_cast<int>(cfg.get_int("bench.repeats", 5));
  const int64_t iters = cfg.get_int("bench.iters", 50);
  const int64_t warmup = cfg.get_int("bench.warmup", 10);
  return dispatch_env(cfg, [&](auto sc) {
    cfg.ensure_all_consumed();
    return bench_scenario(sc, repeats, iters, warmup);
  });
}

void run_gendata(const std::string& kind, Config& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  if (kind == "er-dag") {
    const int d = static_cast<int>(cfg.get_int("env.d", 5));
    DagDataset data =
        generate_er_dataset(d, cfg.get_double("env.expected_in_degree", 1.0),
                            static_cast<int>(cfg.get_int("env.data_n", 100)),
                            fold_in(make_key(seed), 0xDA7A));
    data.seed = seed;
    save_dag_dataset(data, out_dir + "/dag_data.csv", out_dir + "/dag_data.json");
  } else if (kind == "ising") {
    IsingSampleFile f;
    f.side = static_cast<int>(cfg.get_int("env.side", 3));
    f.sigma = cfg.get_double("env.sigma", 0.2);
    GibbsConfig gc;
    gc.burn_in = cfg.get_int("gibbs.burn_in", 2000);
    gc.thinning = cfg.get_int("gibbs.thinning", 10);
    gc.num_chains = static_cast<int>(cfg.get_int("gibbs.chains", 1));
    gc.hottest_beta = cfg.get_double("gibbs.hottest_beta", 0.2);
    f.samples = gibbs_data_sampler(toroidal_coupling(f.side, f.sigma),
                                   fold_in(make_key(seed), 0x919B),
                                   cfg.get_int("env.data_samples", 2000), gc);
    save_ising_samples(f, out_dir + "/ising_data.txt");
  } else if (kind == "phylo-synthetic") {
    SpeciesData sp = synth_species(static_cast<int>(cfg.get_int("env.n_species", 6)),
                                   static_cast<int>(cfg.get_int("env.sites", 8)),
                                   cfg.get_string("env.alphabet", "ACGT"),
                                   fold_in(make_key(seed), 0x5BEC));
    save_species(sp, out_dir + "/species.txt");
  } else if (kind == "modes") {
    ModeSet ms = generate_modes(static_cast<int>(cfg.get_int("env.n_bits", 32)),
                                cfg.get_double("env.beta", 3.0),
                                static_cast<int>(cfg.get_int("env.num_modes", 60)),
                                fold_in(make_key(seed), 0x30DE));
    save_modes(ms, out_dir + "/modes.txt");
  } else {
    throw config_error("gendata: unknown kind " + kind);
  }
  cfg.ensure_all_consumed();
}

std::string run_enumerate(const std::string& what, Config& cfg) {
  if (what == "dags") {
    const int d = static_cast<int>(cfg.get_int("env.d", 5));
    cfg.ensure_all_consumed();
    return "dags(" + std::to_string(d) + ") = " + std::to_string(enumerate_dags(d).size()) +
           "\n";
  }
  if (what == "states" || what == "terminals") {
    return dispatch_env(cfg, [&](auto sc) {
      const int64_t cap = cfg.get_int("eval.enumeration_cap", 2000000);
      cfg.ensure_all_consumed();
      auto graph = enumerate_state_graph(sc.env, sc.params, cap);
      int terminals = 0;
      for (char t : graph.is_terminal) terminals += t;
      return "states = " + std::to_string(graph.num_states()) +
             "\nterminals = " + std::to_string(terminals) + "\n";
    });
  }
  throw config_error("enumerate: unknown target " + what);
}

EbGfnResult run_eb_gfn(Config& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  EnvDefaults d;
  d.iterations = 20000;
  d.batch = 256;
  d.hidden = "256,256,256,256";
  d.lr = 1e-3;
  d.metrics = "";
  cfg.set_default("eval.metrics", "");
  TrainSettings s = read_settings(cfg, d);
  if (s.loss.objective != Objective::kTB)
    throw config_error("eb-gfn: the sampler objective must be tb");

  const int side = static_cast<int>(cfg.get_int("env.side", 3));
  const double sigma = cfg.get_double("env.sigma", 0.2);
  const IsingCoupling j_true = toroidal_coupling(side, sigma);
  const int dim = j_true.dim();

  std::vector<std::vector<int8_t>> dataset;
  if (cfg.has("env.data_file")) {
    auto f = load_ising_samples(cfg.get_string("env.data_file"));
    if (f.side != side) throw config_error("eb-gfn: data lattice side mismatch");
    dataset = std::move(f.samples);
  } else {
    GibbsConfig gc;
    gc.burn_in = cfg.get_int("gibbs.burn_in", 2000);
    gc.thinning = cfg.get_int("gibbs.thinning", 10);
    gc.num_chains = static_cast<int>(cfg.get_int("gibbs.chains", 1));
    gc.hottest_beta = cfg.get_double("gibbs.hottest_beta", 0.2);
    dataset = gibbs_data_sampler(j_true, fold_in(make_key(s.seed), 0x919B),
                                 cfg.get_int("env.data_samples", 2000), gc);
  }
  const double mix_alpha = cfg.get_double("eb.alpha", 0.5);
  const int k_steps = static_cast<int>(cfg.get_int("eb.k", dim));
  const double coupling_lr = cfg.get_double("eb.coupling_lr", 0.05);
  const double coupling_lr_end = cfg.get_double("eb.coupling_lr_end", coupling_lr);
  const int data_batch = static_cast<int>(cfg.get_int("eb.data_batch", s.batch_size));
  Schedule coupling_sched{Schedule::Kind::kLinear, coupling_lr, coupling_lr_end, 0,
                          std::max<int64_t>(1, s.iterations)};
  cfg.ensure_all_consumed();

  IsingEnv env;
  IsingCoupling j_model = zero_coupling(side);
  IsingEnv::Params params;
  params.coupling = std::make_shared<IsingCoupling>(j_model);

  const RngKey root = make_key(s.seed);
  MlpParams policy = mlp_init(env.obs_dim(params), s.hidden, env.num_actions(params),
                              env.num_backward_actions(params), fold_in(root, 0), s.logz_init);
  AdamState opt_main = adam_init(policy.tensors());
  std::vector<Tensor*> zp = {&policy.log_z};
  AdamState opt_z = adam_init(zp);

  Scenario<IsingEnv> sc;
  sc.params = params;
  sc.settings = s;

  EbGfnResult result;
  result.init_neg_log_rmse = neg_log_rmse(j_true, j_model);
  result.best_neg_log_rmse = result.init_neg_log_rmse;

  std::ofstream csv(out_dir + "/metrics.csv");
  csv << "step,loss,logZ,neg_log_rmse,accept_rate\n";
  double loss_val = 0.0;
  int64_t accepted_count = 0, proposal_count = 0;
  for (int64_t it = 0; it < s.iterations; ++it) {
    const RngKey it_key = fold_in(root, 1000 + it);
    params.coupling = std::make_shared<IsingCoupling>(j_model);
    sc.params = params;
    const double eps = schedule_value(s.eps_sched, it);
    const double lr = schedule_value(s.lr_sched, it);

    // Sampler update on a mixture of on-policy and data-backed trajectories.
    int n_fwd = 0;
    std::vector<int> data_rows;
    for (int b = 0; b < s.batch_size; ++b) {
      if (uniform_scalar(fold_in(fold_in(it_key, 1), b)) < mix_alpha)
        ++n_fwd;
      else
        data_rows.push_back(random_range(fold_in(fold_in(it_key, 2), b),
                                         static_cast<int>(dataset.size())));
    }
    TrajectoryBatch batch;
    bool have = false;
    if (n_fwd > 0) {
      batch = forward_rollout(env, params, policy, n_fwd, fold_in(it_key, 3), eps);
      have = true;
    }
    if (!data_rows.empty()) {
      EnvState<IsingEnv> terms;
      terms.reserve(data_rows.size());
      for (int r : data_rows) terms.push_back(env.terminal_from_spins(dataset[r], params));
      auto bb = backward_rollout(env, params, &policy, s.loss.learned_backward, terms,
                                 fold_in(it_key, 4));
      batch = have ? TrajectoryBatch::concat(batch, bb) : std::move(bb);
    }
    loss_val = train_step(sc, policy, opt_main, opt_z, batch, lr);

    // Energy-model update via contrastive divergence with MH-corrected
    // back-and-forth proposals.
    std::vector<std::vector<int8_t>> xs;
    xs.reserve(data_batch);
    for (int b = 0; b < data_batch; ++b)
      xs.push_back(dataset[random_range(fold_in(fold_in(it_key, 5), b),
                                        static_cast<int>(dataset.size()))]);
    auto props = back_and_forth_batch(env, params, policy, s.loss.learned_backward, xs,
                                      k_steps, fold_in(it_key, 6));
    std::vector<std::vector<int8_t>> accepted(xs.size());
    for (size_t b = 0; b < xs.size(); ++b) {
      const double ex = ising_energy(xs[b], j_model);
      const double ep = ising_energy(props[b].proposal, j_model);
      const bool take = mh_accept(ex, ep, props[b].log_ratio, fold_in(fold_in(it_key, 7), b));
      accepted[b] = take ? props[b].proposal : xs[b];
      accepted_count += take ? 1 : 0;
      ++proposal_count;
    }
    auto grad = cd_gradient(xs, accepted, j_model);
    const double j_lr = schedule_value(coupling_sched, it);
    for (size_t i = 0; i < j_model.j.size(); ++i) j_model.j[i] -= j_lr * grad[i];

    const double nlr = neg_log_rmse(j_true, j_model);
    result.final_neg_log_rmse = nlr;
    if (nlr > result.best_neg_log_rmse) result.best_neg_log_rmse = nlr;
    if ((it + 1) % s.eval_interval == 0 || it + 1 == s.iterations) {
      csv << (it + 1) << "," << fmt(loss_val) << "," << fmt(policy.log_z.data[0]) << ","
          << fmt(nlr) << ","
          << fmt(static_cast<double>(accepted_count) / std::max<int64_t>(1, proposal_count))
          << "\n";
      accepted_count = proposal_count = 0;
    }
  }
  {
    std::ofstream jout(out_dir + "/coupling.txt");
    jout << "N=" << side << " sigma_true=" << fmt(sigma) << "\n";
    for (int a = 0; a < dim; ++a) {
      for (int b = 0; b < dim; ++b) jout << (b ? " " : "") << fmt(j_model.at(a, b));
      jout << "\n";
    }
  }
  result.final_loss = loss_val;
  write_text(out_dir + "/config_resolved.txt", cfg.resolved());
  return result;
}

}  // namespace gfn
