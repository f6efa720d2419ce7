#pragma once
#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include "gfn/errors.hpp"
#include "gfn/nn.hpp"
#include "gfn/objectives.hpp"
#include "gfn/rng.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

// Environments are stateless: all per-episode data lives in Instance values,
// immutable configuration in Params. A batched State is a vector of
// instances; the wrappers below implement the shared batched contract
// (absorbing done instances, legality checks, padded rollouts).
//
// Conventions every environment follows:
//  - action indices are dense; when a stop action exists it is the last one;
//  - backward actions mirror forward structure; environments with a stop
//    action expose "un-stop" as the last backward action, so the uniform
//    backward policy over legal backward actions covers terminal copies
//    with probability one;
//  - Instance has is_terminal and step_count fields, with step_count equal
//    to the number of forward steps taken.
template <class E>
concept VectorEnv = requires(const E& env, const typename E::Params& p,
                             typename E::Instance& inst, const typename E::Instance& c,
                             int action, uint8_t* mask, double* obs) {
  { env.num_actions(p) } -> std::convertible_to<int>;
  { env.num_backward_actions(p) } -> std::convertible_to<int>;
  { env.obs_dim(p) } -> std::convertible_to<int>;
  { env.max_traj_len(p) } -> std::convertible_to<int>;
  { env.reset_instance(p) } -> std::same_as<typename E::Instance>;
  { env.step_instance(inst, action, p) } -> std::convertible_to<double>;
  { env.backward_step_instance(inst, action, p) };
  { env.action_mask(c, p, mask) };
  { env.backward_action_mask(c, p, mask) };
  { env.get_backward_action(c, action, c, p) } -> std::convertible_to<int>;
  { env.get_forward_action(c, action, c, p) } -> std::convertible_to<int>;
  { env.encode_obs(c, p, obs) };
  { env.encode_state(c, p) } -> std::convertible_to<std::string>;
  { env.encode_terminal(c, p) } -> std::convertible_to<std::string>;
  { env.energy(c, p) } -> std::convertible_to<double>;
  { env.log_reward_of(c, p) } -> std::convertible_to<double>;
  { E::kAllStatesTerminal } -> std::convertible_to<bool>;
  { c.is_terminal } -> std::convertible_to<bool>;
  { c.step_count } -> std::convertible_to<int>;
};

template <class E>
using EnvState = std::vector<typename E::Instance>;

struct BatchedStepResult {
  Tensor obs;  // [B x obs_dim]
  std::vector<double> log_reward;
  std::vector<uint8_t> done;
};

template <VectorEnv E>
Tensor encode_obs_batch(const E& env, const EnvState<E>& state, const typename E::Params& p) {
  const int d = env.obs_dim(p);
  Tensor obs({static_cast<int>(state.size()), d});
  for (size_t b = 0; b < state.size(); ++b)
    env.encode_obs(state[b], p, obs.data.data() + b * d);
  return obs;
}

template <VectorEnv E>
std::pair<Tensor, EnvState<E>> reset(const E& env, int num_envs, const typename E::Params& p,
                                     const RngKey& /*key*/ = {}) {
  if (num_envs < 1) throw config_error("reset: num_envs must be >= 1");
  EnvState<E> state;
  state.reserve(num_envs);
  for (int b = 0; b < num_envs; ++b) state.push_back(env.reset_instance(p));
  return {encode_obs_batch(env, state, p), std::move(state)};
}

// Batched forward step. Done instances absorb: their action is ignored and
// they keep emitting log_reward 0. Illegal actions on live instances are
// contract violations.
template <VectorEnv E>
BatchedStepResult step(const E& env, EnvState<E>& state, const std::vector<int>& actions,
                       const typename E::Params& p) {
  if (actions.size() != state.size()) throw contract_violation("step: action count mismatch");
  const int a_count = env.num_actions(p);
  std::vector<uint8_t> mask(a_count);
  BatchedStepResult out;
  out.log_reward.assign(state.size(), 0.0);
  out.done.assign(state.size(), 0);
  for (size_t b = 0; b < state.size(); ++b) {
    if (state[b].is_terminal) {
      out.done[b] = 1;
      continue;
    }
    const int a = actions[b];
    if (a < 0 || a >= a_count) throw contract_violation("step: action index out of range");
    env.action_mask(state[b], p, mask.data());
    if (!mask[a]) throw contract_violation("step: illegal action on live instance");
    out.log_reward[b] = env.step_instance(state[b], a, p);
    out.done[b] = state[b].is_terminal ? 1 : 0;
  }
  out.obs = encode_obs_batch(env, state, p);
  return out;
}

// Batched backward step. log_reward is always zero going backward.
template <VectorEnv E>
BatchedStepResult backward_step(const E& env, EnvState<E>& state,
                                const std::vector<int>& bwd_actions,
                                const typename E::Params& p) {
  if (bwd_actions.size() != state.size())
    throw contract_violation("backward_step: action count mismatch");
  const int ab = env.num_backward_actions(p);
  std::vector<uint8_t> mask(ab);
  for (size_t b = 0; b < state.size(); ++b) {
    const int a = bwd_actions[b];
    if (a < 0 || a >= ab) throw contract_violation("backward_step: action index out of range");
    env.backward_action_mask(state[b], p, mask.data());
    if (!mask[a]) throw contract_violation("backward_step: illegal backward action");
    env.backward_step_instance(state[b], a, p);
  }
  BatchedStepResult out;
  out.log_reward.assign(state.size(), 0.0);
  out.done.assign(state.size(), 0);
  out.obs = encode_obs_batch(env, state, p);
  return out;
}

namespace detail {

template <VectorEnv E>
void record_state_row(const E& env, const typename E::Params& p,
                      const typename E::Instance& inst, TrajectoryBatch& tb, int b, int t) {
  env.encode_obs(inst, p, tb.obs_row(b, t));
  env.action_mask(inst, p, tb.fwd_mask_row(b, t));
  env.backward_action_mask(inst, p, tb.bwd_mask_row(b, t));
  tb.energies[tb.state_row(b, t)] = env.energy(inst, p);
}

template <VectorEnv E>
void copy_state_row(TrajectoryBatch& tb, int b, int from_t, int to_t) {
  std::copy_n(tb.obs_row(b, from_t), tb.obs_dim, tb.obs_row(b, to_t));
  std::copy_n(tb.fwd_mask_row(b, from_t), tb.num_actions, tb.fwd_mask_row(b, to_t));
  std::copy_n(tb.bwd_mask_row(b, from_t), tb.num_bwd_actions, tb.bwd_mask_row(b, to_t));
  tb.energies[tb.state_row(b, to_t)] = tb.energies[tb.state_row(b, from_t)];
}

inline int count_legal(const uint8_t* mask, int n) {
  int c = 0;
  for (int i = 0; i < n; ++i) c += mask[i] ? 1 : 0;
  return c;
}

}  // namespace detail

struct RolloutOptions {
  bool record_delta_log_reward = false;  // envs where every state is terminal
};

// Drive a batch with a fixed action matrix (pad entries < 0). Shared by the
// sampled rollouts below; records everything the losses need.
template <VectorEnv E>
TrajectoryBatch rollout_from_actions(const E& env, const typename E::Params& p,
                                     const std::vector<std::vector<int>>& actions,
                                     const RolloutOptions& opt = {}) {
  const int num_envs = static_cast<int>(actions.size());
  const int steps = env.max_traj_len(p);
  const int a_count = env.num_actions(p);
  TrajectoryBatch tb;
  tb.allocate(num_envs, steps, a_count, env.num_backward_actions(p), env.obs_dim(p));
  EnvState<E> state;
  state.reserve(num_envs);
  for (int b = 0; b < num_envs; ++b) state.push_back(env.reset_instance(p));
  for (int b = 0; b < num_envs; ++b) detail::record_state_row(env, p, state[b], tb, b, 0);

  std::vector<uint8_t> mask(a_count);
  for (int t = 0; t < steps; ++t) {
    bool any_live = false;
    for (int b = 0; b < num_envs; ++b) {
      if (state[b].is_terminal || t >= static_cast<int>(actions[b].size()) ||
          actions[b][t] < 0) {
        detail::copy_state_row<E>(tb, b, t, t + 1);
        continue;
      }
      any_live = true;
      const int a = actions[b][t];
      env.action_mask(state[b], p, mask.data());
      if (a >= a_count || !mask[a])
        throw contract_violation("rollout: illegal action in replay");
      typename E::Instance prev = state[b];
      double prev_log_r = 0.0;
      if constexpr (E::kAllStatesTerminal) {
        if (opt.record_delta_log_reward) prev_log_r = env.state_log_reward(prev, p);
      }
      const double log_r = env.step_instance(state[b], a, p);
      tb.fwd_actions[tb.step_index(b, t)] = a;
      tb.bwd_actions[tb.step_index(b, t)] = env.get_backward_action(prev, a, state[b], p);
      tb.pad_mask[tb.step_index(b, t)] = 1;
      detail::record_state_row(env, p, state[b], tb, b, t + 1);
      const int legal_bwd =
          detail::count_legal(tb.bwd_mask_row(b, t + 1), tb.num_bwd_actions);
      if (legal_bwd < 1) throw contract_violation("rollout: reached state with no parent");
      tb.log_pb_uniform[tb.step_index(b, t)] = -std::log(static_cast<double>(legal_bwd));
      if constexpr (E::kAllStatesTerminal) {
        if (opt.record_delta_log_reward && !state[b].is_terminal)
          tb.delta_log_reward[tb.step_index(b, t)] =
              env.state_log_reward(state[b], p) - prev_log_r;
      }
      if (state[b].is_terminal) {
        tb.log_rewards[b] = log_r;
        tb.lengths[b] = t + 1;
        tb.terminal_keys[b] = env.encode_terminal(state[b], p);
      }
    }
    if (!any_live && t + 1 < steps) {
      for (int b = 0; b < num_envs; ++b)
        for (int tt = t + 1; tt < steps; ++tt) detail::copy_state_row<E>(tb, b, tt, tt + 1);
      break;
    }
  }
  for (int b = 0; b < num_envs; ++b)
    if (!state[b].is_terminal)
      throw contract_violation("rollout: trajectory did not reach a terminal state");
  return tb;
}

// Sample trajectories from the policy with epsilon-uniform exploration.
template <VectorEnv E>
TrajectoryBatch forward_rollout(const E& env, const typename E::Params& p,
                                const MlpParams& policy, int num_envs, const RngKey& key,
                                double exploration_eps, const RolloutOptions& opt = {}) {
  if (num_envs < 1) throw config_error("forward_rollout: num_envs must be >= 1");
  const int steps = env.max_traj_len(p);
  const int a_count = env.num_actions(p);
  const int d = env.obs_dim(p);
  EnvState<E> state;
  state.reserve(num_envs);
  for (int b = 0; b < num_envs; ++b) state.push_back(env.reset_instance(p));

  std::vector<std::vector<int>> actions(num_envs);
  Tensor obs({num_envs, d});
  std::vector<uint8_t> mask(static_cast<size_t>(num_envs) * a_count);
  for (int t = 0; t < steps; ++t) {
    bool any_live = false;
    for (int b = 0; b < num_envs; ++b)
      if (!state[b].is_terminal) any_live = true;
    if (!any_live) break;
    for (int b = 0; b < num_envs; ++b) {
      env.encode_obs(state[b], p, obs.data.data() + static_cast<size_t>(b) * d);
      env.action_mask(state[b], p, mask.data() + static_cast<size_t>(b) * a_count);
    }
    PolicyHeads heads = mlp_forward(policy, obs);
    if (!heads.fwd_logits.all_finite())
      throw numeric_error("forward_rollout: non-finite policy logits");
    const RngKey step_key = fold_in(key, t);
    for (int b = 0; b < num_envs; ++b) {
      if (state[b].is_terminal) {
        actions[b].push_back(-1);
        continue;
      }
      auto probs = eps_uniform(heads.fwd_logits.data.data() + static_cast<size_t>(b) * a_count,
                               mask.data() + static_cast<size_t>(b) * a_count, a_count,
                               exploration_eps);
      const int a = categorical(fold_in(step_key, b), probs.data(), a_count);
      actions[b].push_back(a);
      env.step_instance(state[b], a, p);
    }
  }
  return rollout_from_actions(env, p, actions, opt);
}

// Terminal instances sampled from the policy (no exploration noise).
template <VectorEnv E>
EnvState<E> sample_terminals(const E& env, const typename E::Params& p,
                             const MlpParams& policy, int num_envs, const RngKey& key,
                             double exploration_eps = 0.0) {
  const int steps = env.max_traj_len(p);
  const int a_count = env.num_actions(p);
  const int d = env.obs_dim(p);
  EnvState<E> state;
  state.reserve(num_envs);
  for (int b = 0; b < num_envs; ++b) state.push_back(env.reset_instance(p));
  Tensor obs({num_envs, d});
  std::vector<uint8_t> mask(static_cast<size_t>(num_envs) * a_count);
  for (int t = 0; t < steps; ++t) {
    bool any_live = false;
    for (int b = 0; b < num_envs; ++b)
      if (!state[b].is_terminal) any_live = true;
    if (!any_live) break;
    for (int b = 0; b < num_envs; ++b) {
      env.encode_obs(state[b], p, obs.data.data() + static_cast<size_t>(b) * d);
      env.action_mask(state[b], p, mask.data() + static_cast<size_t>(b) * a_count);
    }
    PolicyHeads heads = mlp_forward(policy, obs);
    const RngKey step_key = fold_in(key, t);
    for (int b = 0; b < num_envs; ++b) {
      if (state[b].is_terminal) continue;
      auto probs = eps_uniform(heads.fwd_logits.data.data() + static_cast<size_t>(b) * a_count,
                               mask.data() + static_cast<size_t>(b) * a_count, a_count,
                               exploration_eps);
      env.step_instance(state[b], categorical(fold_in(step_key, b), probs.data(), a_count), p);
    }
  }
  return state;
}

// Walk backward from supplied terminal instances (uniform backward policy,
// or the learned backward head when policy != nullptr and learned_backward),
// then replay forward so the batch is recorded in forward orientation.
template <VectorEnv E>
TrajectoryBatch backward_rollout(const E& env, const typename E::Params& p,
                                 const MlpParams* policy, bool learned_backward,
                                 const EnvState<E>& terminals, const RngKey& key,
                                 const RolloutOptions& opt = {}) {
  const int num_envs = static_cast<int>(terminals.size());
  if (num_envs < 1) throw config_error("backward_rollout: empty batch");
  for (const auto& inst : terminals)
    if (!inst.is_terminal) throw contract_violation("backward_rollout: non-terminal input");
  if (learned_backward && policy == nullptr)
    throw config_error("backward_rollout: learned backward policy requires parameters");

  const int ab = env.num_backward_actions(p);
  const int d = env.obs_dim(p);
  EnvState<E> state = terminals;
  std::vector<std::vector<int>> rev_actions(num_envs);  // forward actions, reversed
  Tensor obs({num_envs, d});
  std::vector<uint8_t> mask(static_cast<size_t>(num_envs) * ab);
  for (int t = 0;; ++t) {
    bool any_live = false;
    for (int b = 0; b < num_envs; ++b) {
      env.backward_action_mask(state[b], p, mask.data() + static_cast<size_t>(b) * ab);
      if (detail::count_legal(mask.data() + static_cast<size_t>(b) * ab, ab) > 0)
        any_live = true;
    }
    if (!any_live) break;
    if (t > env.max_traj_len(p))
      throw contract_violation("backward_rollout: did not reach the initial state");
    PolicyHeads heads;
    if (learned_backward) {
      for (int b = 0; b < num_envs; ++b)
        env.encode_obs(state[b], p, obs.data.data() + static_cast<size_t>(b) * d);
      heads = mlp_forward(*policy, obs);
    }
    const RngKey step_key = fold_in(key, t);
    for (int b = 0; b < num_envs; ++b) {
      const uint8_t* mrow = mask.data() + static_cast<size_t>(b) * ab;
      if (detail::count_legal(mrow, ab) == 0) continue;  // already at s0
      std::vector<double> probs;
      if (learned_backward) {
        probs = eps_uniform(heads.bwd_logits.data.data() + static_cast<size_t>(b) * ab, mrow,
                            ab, 0.0);
      } else {
        probs.assign(ab, 0.0);
        for (int i = 0; i < ab; ++i) probs[i] = mrow[i] ? 1.0 : 0.0;
      }
      const int a = categorical(fold_in(step_key, b), probs.data(), ab);
      typename E::Instance next = state[b];
      env.backward_step_instance(state[b], a, p);
      rev_actions[b].push_back(env.get_forward_action(state[b], a, next, p));
    }
  }
  std::vector<std::vector<int>> actions(num_envs);
  for (int b = 0; b < num_envs; ++b)
    actions[b].assign(rev_actions[b].rbegin(), rev_actions[b].rend());
  return rollout_from_actions(env, p, actions, opt);
}

}  // namespace gfn
