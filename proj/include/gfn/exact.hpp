#pragma once
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/env_core.hpp"
#include "gfn/metrics.hpp"

namespace gfn {

// Full construction DAG of an enumerable environment. States are discovered
// breadth-first from the initial state, so indices are topologically sorted
// (every edge increments step_count by one).
template <VectorEnv E>
struct StateGraph {
  struct Edge {
    int from;
    int action;
    int to;
    int bwd_action;
  };
  std::vector<typename E::Instance> states;
  std::vector<std::string> keys;
  std::unordered_map<std::string, int> index;
  std::vector<std::vector<Edge>> edges_out;
  std::vector<int> legal_bwd_count;
  std::vector<char> is_terminal;
  int num_states() const { return static_cast<int>(states.size()); }
};

template <VectorEnv E>
StateGraph<E> enumerate_state_graph(const E& env, const typename E::Params& p,
                                    int64_t state_cap = 2000000) {
  StateGraph<E> g;
  const int a_count = env.num_actions(p);
  const int ab = env.num_backward_actions(p);
  std::vector<uint8_t> mask(std::max(a_count, ab));
  auto intern = [&](typename E::Instance inst) -> int {
    std::string key = env.encode_state(inst, p);
    auto it = g.index.find(key);
    if (it != g.index.end()) return it->second;
    const int id = g.num_states();
    if (id >= state_cap) throw config_error("state graph exceeds enumeration cap");
    g.keys.push_back(key);
    g.index.emplace(std::move(key), id);
    env.backward_action_mask(inst, p, mask.data());
    int cnt = 0;
    for (int i = 0; i < ab; ++i) cnt += mask[i] ? 1 : 0;
    g.legal_bwd_count.push_back(cnt);
    g.is_terminal.push_back(inst.is_terminal ? 1 : 0);
    g.states.push_back(std::move(inst));
    g.edges_out.emplace_back();
    return id;
  };
  intern(env.reset_instance(p));
  for (int cur = 0; cur < g.num_states(); ++cur) {
    if (g.is_terminal[cur]) continue;
    typename E::Instance snapshot = g.states[cur];
    env.action_mask(snapshot, p, mask.data());
    std::vector<uint8_t> amask(mask.begin(), mask.begin() + a_count);
    for (int a = 0; a < a_count; ++a) {
      if (!amask[a]) continue;
      typename E::Instance child = snapshot;
      env.step_instance(child, a, p);
      const int bwd = env.get_backward_action(snapshot, a, child, p);
      const int to = intern(std::move(child));
      g.edges_out[cur].push_back({cur, a, to, bwd});
    }
  }
  return g;
}

// Exact terminal marginal of the policy by dynamic programming over the
// state graph (states are batch-evaluated once).
template <VectorEnv E>
ExactDistribution exact_policy_marginal(const E& env, const typename E::Params& p,
                                        const StateGraph<E>& g, const MlpParams& policy) {
  const int a_count = env.num_actions(p);
  const int d = env.obs_dim(p);
  const int n = g.num_states();
  Tensor obs({n, d});
  std::vector<uint8_t> masks(static_cast<size_t>(n) * a_count, 0);
  for (int s = 0; s < n; ++s) {
    env.encode_obs(g.states[s], p, obs.data.data() + static_cast<size_t>(s) * d);
    env.action_mask(g.states[s], p, masks.data() + static_cast<size_t>(s) * a_count);
  }
  PolicyHeads heads = mlp_forward(policy, obs);
  masked_log_softmax_rows(heads.fwd_logits, masks);

  std::vector<double> prob(n, 0.0);
  prob[0] = 1.0;
  ExactDistribution dist;
  std::unordered_map<std::string, int> seen;
  for (int s = 0; s < n; ++s) {
    if (g.is_terminal[s]) {
      if (prob[s] < 0.0) throw numeric_error("negative path mass");
      const std::string key = env.encode_terminal(g.states[s], p);
      auto [it, inserted] = seen.emplace(key, static_cast<int>(dist.keys.size()));
      if (inserted)
        dist.add(key, prob[s]);
      else
        dist.probs[it->second] += prob[s];
      continue;
    }
    for (const auto& e : g.edges_out[s]) {
      const double pf =
          std::exp(heads.fwd_logits.data[static_cast<size_t>(s) * a_count + e.action]);
      prob[e.to] += prob[s] * pf;
    }
  }
  dist.normalize();
  return dist;
}

// Exact flows/policies balancing the reward under the fixed uniform backward
// policy: log F(x) = log R(x) at terminals, and going backward
// log F(s) = logsumexp over children of log F(s') - log #parents(s').
struct BalancedFlows {
  std::vector<double> log_flow;                // per state
  std::vector<std::vector<double>> edge_log_pf;  // aligned with edges_out
  double log_z = 0.0;
};

template <VectorEnv E>
BalancedFlows exact_balanced_flows(const E& env, const typename E::Params& p,
                                   const StateGraph<E>& g) {
  const int n = g.num_states();
  BalancedFlows f;
  f.log_flow.assign(n, 0.0);
  f.edge_log_pf.resize(n);
  for (int s = n - 1; s >= 0; --s) {
    if (g.is_terminal[s]) {
      f.log_flow[s] = env.log_reward_of(g.states[s], p);
      continue;
    }
    std::vector<double> terms;
    terms.reserve(g.edges_out[s].size());
    for (const auto& e : g.edges_out[s])
      terms.push_back(f.log_flow[e.to] - std::log(static_cast<double>(g.legal_bwd_count[e.to])));
    f.log_flow[s] = logsumexp(terms.data(), static_cast<int>(terms.size()));
    f.edge_log_pf[s].resize(terms.size());
    for (size_t i = 0; i < terms.size(); ++i)
      f.edge_log_pf[s][i] = terms[i] - f.log_flow[s];
  }
  f.log_z = f.log_flow[0];
  return f;
}

// Trajectories sampled from the exact policy together with head tensors
// holding the exact values, for plugging into the objectives.
struct BalancedBatch {
  TrajectoryBatch batch;
  Tensor fwd_logits;  // [N x A]
  Tensor bwd_logits;  // [N x Ab]
  Tensor log_flow;    // [N]
  double log_z = 0.0;
};

template <VectorEnv E>
BalancedBatch sample_balanced_batch(const E& env, const typename E::Params& p,
                                    const StateGraph<E>& g, const BalancedFlows& f,
                                    int num_traj, const RngKey& key) {
  const int a_count = env.num_actions(p);
  const int ab = env.num_backward_actions(p);
  const int steps = env.max_traj_len(p);
  BalancedBatch out;
  TrajectoryBatch& tb = out.batch;
  tb.allocate(num_traj, steps, a_count, ab, env.obs_dim(p));
  const int64_t rows = static_cast<int64_t>(num_traj) * (steps + 1);
  out.fwd_logits = Tensor({static_cast<int>(rows), a_count});
  out.bwd_logits = Tensor({static_cast<int>(rows), ab});
  out.log_flow = Tensor({static_cast<int>(rows)});
  out.log_z = f.log_z;

  std::vector<uint8_t> bmask(ab);
  for (int b = 0; b < num_traj; ++b) {
    int s = 0;
    int t = 0;
    const RngKey traj_key = fold_in(key, b);
    while (true) {
      const int64_t row = tb.state_row(b, t);
      env.encode_obs(g.states[s], p, tb.obs_row(b, t));
      env.action_mask(g.states[s], p, tb.fwd_mask_row(b, t));
      env.backward_action_mask(g.states[s], p, tb.bwd_mask_row(b, t));
      tb.energies[row] = env.energy(g.states[s], p);
      out.log_flow.data[row] = f.log_flow[s];
      for (size_t i = 0; i < g.edges_out[s].size(); ++i)
        out.fwd_logits.data[row * a_count + g.edges_out[s][i].action] = f.edge_log_pf[s][i];
      env.backward_action_mask(g.states[s], p, bmask.data());
      int cnt = 0;
      for (int i = 0; i < ab; ++i) cnt += bmask[i] ? 1 : 0;
      if (cnt > 0) {
        const double lp = -std::log(static_cast<double>(cnt));
        for (int i = 0; i < ab; ++i)
          if (bmask[i]) out.bwd_logits.data[row * ab + i] = lp;
      }
      if (g.is_terminal[s]) {
        tb.lengths[b] = t;
        tb.log_rewards[b] = env.log_reward_of(g.states[s], p);
        for (int tt = t + 1; tt <= steps; ++tt) {
          std::copy_n(tb.obs_row(b, t), tb.obs_dim, tb.obs_row(b, tt));
          out.log_flow.data[tb.state_row(b, tt)] = f.log_flow[s];
        }
        break;
      }
      std::vector<double> w(g.edges_out[s].size());
      for (size_t i = 0; i < w.size(); ++i) w[i] = std::exp(f.edge_log_pf[s][i]);
      const int pick = categorical(fold_in(traj_key, t), w.data(), static_cast<int>(w.size()));
      const auto& e = g.edges_out[s][pick];
      tb.fwd_actions[tb.step_index(b, t)] = e.action;
      tb.bwd_actions[tb.step_index(b, t)] = e.bwd_action;
      tb.pad_mask[tb.step_index(b, t)] = 1;
      tb.log_pb_uniform[tb.step_index(b, t)] =
          -std::log(static_cast<double>(g.legal_bwd_count[e.to]));
      if constexpr (E::kAllStatesTerminal) {
        if (!g.is_terminal[e.to])
          tb.delta_log_reward[tb.step_index(b, t)] =
              env.state_log_reward(g.states[e.to], p) - env.state_log_reward(g.states[s], p);
      }
      s = e.to;
      t += 1;
    }
  }
  return out;
}

// Monte-Carlo estimate of the terminal log-probability:
// log (1/N) sum_i P_F(tau_i) / P_B(tau_i | x), tau_i ~ P_B(.|x).
template <VectorEnv E>
double mc_terminal_logprob(const E& env, const typename E::Params& p, const MlpParams& policy,
                           bool learned_backward, const typename E::Instance& terminal,
                           int num_samples, const RngKey& key) {
  if (!terminal.is_terminal) throw contract_violation("mc_terminal_logprob: non-terminal input");
  EnvState<E> copies(num_samples, terminal);
  TrajectoryBatch batch = backward_rollout(env, p, &policy, learned_backward, copies, key);
  std::vector<double> log_pf, log_pb;
  score_trajectories(policy, batch, learned_backward, &log_pf, &log_pb);
  std::vector<double> terms(num_samples);
  for (int i = 0; i < num_samples; ++i) terms[i] = log_pf[i] - log_pb[i];
  return logsumexp(terms.data(), num_samples) - std::log(static_cast<double>(num_samples));
}

}  // namespace gfn
