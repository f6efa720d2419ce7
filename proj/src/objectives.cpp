#include "gfn/objectives.hpp"

#include <cmath>
#include <limits>

#include "gfn/errors.hpp"

namespace gfn {

Objective objective_from_name(const std::string& name) {
  if (name == "db") return Objective::kDB;
  if (name == "tb") return Objective::kTB;
  if (name == "subtb") return Objective::kSubTB;
  if (name == "fldb") return Objective::kFLDB;
  if (name == "mdb") return Objective::kMDB;
  throw config_error("unknown objective: " + name);
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::kDB: return "db";
    case Objective::kTB: return "tb";
    case Objective::kSubTB: return "subtb";
    case Objective::kFLDB: return "fldb";
    case Objective::kMDB: return "mdb";
  }
  return "?";
}

namespace {

// Chosen-action log-probabilities for every real step, ordered by
// (trajectory, step). Returns the step owner list alongside.
struct StepGather {
  std::vector<int64_t> fwd_idx;   // into [N x A] flat
  std::vector<int64_t> bwd_idx;   // into [N x Ab] flat (learned backward only)
  std::vector<double> log_pb_uniform;
  std::vector<int> traj;  // b of each step
  std::vector<int> step;  // t of each step
};

StepGather gather_steps(const TrajectoryBatch& b) {
  StepGather g;
  for (int bi = 0; bi < b.num_traj; ++bi) {
    for (int t = 0; t < b.lengths[bi]; ++t) {
      const int a = b.fwd_actions[b.step_index(bi, t)];
      g.fwd_idx.push_back(b.state_row(bi, t) * b.num_actions + a);
      const int ba = b.bwd_actions[b.step_index(bi, t)];
      g.bwd_idx.push_back(b.state_row(bi, t + 1) * b.num_bwd_actions + (ba < 0 ? 0 : ba));
      g.log_pb_uniform.push_back(b.log_pb_uniform[b.step_index(bi, t)]);
      g.traj.push_back(bi);
      g.step.push_back(t);
    }
  }
  return g;
}

// log P_F(a_t|s_t) - log P_B(s_t|s_{t+1}) per real step.
Tape::Var step_log_ratio(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                         const LossConfig& cfg, const StepGather& g, Tape::Var logp_fwd) {
  Tape::Var pf = tape.take(logp_fwd, g.fwd_idx);
  if (cfg.learned_backward) {
    if (heads.bwd_logits < 0) throw contract_violation("learned backward policy needs bwd_logits");
    Tape::Var logp_bwd = tape.masked_log_softmax(heads.bwd_logits, batch.bwd_mask);
    return tape.sub(pf, tape.take(logp_bwd, g.bwd_idx));
  }
  Tensor neg_pb({static_cast<int>(g.log_pb_uniform.size())});
  for (size_t i = 0; i < g.log_pb_uniform.size(); ++i) neg_pb.data[i] = -g.log_pb_uniform[i];
  return tape.add_const(pf, std::move(neg_pb));
}

// Flow values with terminal rows replaced by consts: log R (DB/SubTB) or
// E(x) + log R (forward-looking flows). Padding rows are zeroed.
Tape::Var flow_with_terminal_subst(Tape& tape, const TrajectoryBatch& b, const HeadVars& heads,
                                   bool add_energy) {
  if (heads.log_flow < 0) throw contract_violation("objective needs a log-flow head");
  const int64_t n = static_cast<int64_t>(b.num_traj) * (b.max_steps + 1);
  Tensor keep({static_cast<int>(n)});
  Tensor repl({static_cast<int>(n)});
  for (int bi = 0; bi < b.num_traj; ++bi) {
    const int len = b.lengths[bi];
    for (int t = 0; t <= b.max_steps; ++t) {
      const int64_t r = b.state_row(bi, t);
      if (t < len) {
        keep.data[r] = 1.0;
      } else if (t == len) {
        repl.data[r] = b.log_rewards[bi] + (add_energy ? b.energies[r] : 0.0);
      }
    }
  }
  return tape.add_const(tape.mul_const(heads.log_flow, std::move(keep)), std::move(repl));
}

Tape::Var transition_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                          const LossConfig& cfg, bool forward_looking) {
  const StepGather g = gather_steps(batch);
  if (g.fwd_idx.empty()) return tape.constant(Tensor::scalar(0.0));
  Tape::Var logp_fwd = tape.masked_log_softmax(heads.fwd_logits, batch.fwd_mask);
  Tape::Var d = step_log_ratio(tape, batch, heads, cfg, g, logp_fwd);
  Tape::Var flows = flow_with_terminal_subst(tape, batch, heads, forward_looking);

  const size_t n_steps = g.fwd_idx.size();
  std::vector<int64_t> row_s(n_steps), row_s1(n_steps);
  Tensor energy_diff({static_cast<int>(n_steps)});
  std::vector<double> w(n_steps);
  for (size_t p = 0; p < n_steps; ++p) {
    const int bi = g.traj[p], t = g.step[p];
    row_s[p] = batch.state_row(bi, t);
    row_s1[p] = batch.state_row(bi, t + 1);
    if (forward_looking)
      energy_diff.data[p] = batch.energies[row_s1[p]] - batch.energies[row_s[p]];
    const bool terminal = (t == batch.lengths[bi] - 1);
    w[p] = (terminal ? cfg.terminal_penalty : 1.0) / static_cast<double>(n_steps);
  }
  Tape::Var r = tape.add(tape.sub(tape.take(flows, row_s), tape.take(flows, row_s1)), d);
  if (forward_looking) r = tape.add_const(r, std::move(energy_diff));
  return tape.weighted_sum(tape.square(r), std::move(w));
}

Tape::Var tb_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                  const LossConfig& cfg) {
  if (heads.log_z < 0) throw contract_violation("tb objective needs log_z");
  const StepGather g = gather_steps(batch);
  Tape::Var logp_fwd = tape.masked_log_softmax(heads.fwd_logits, batch.fwd_mask);
  Tape::Var d = step_log_ratio(tape, batch, heads, cfg, g, logp_fwd);
  // Per-trajectory sums via exclusive cumulative sums over a [B x (T+1)] grid.
  std::vector<int64_t> slots(g.fwd_idx.size());
  for (size_t p = 0; p < slots.size(); ++p)
    slots[p] = static_cast<int64_t>(g.traj[p]) * (batch.max_steps + 1) + g.step[p];
  Tape::Var grid = tape.scatter(d, slots, {batch.num_traj, batch.max_steps + 1});
  Tape::Var cum = tape.exclusive_row_cumsum(grid);
  std::vector<int64_t> last(batch.num_traj);
  Tensor neg_log_r({batch.num_traj});
  for (int bi = 0; bi < batch.num_traj; ++bi) {
    last[bi] = static_cast<int64_t>(bi) * (batch.max_steps + 1) + batch.lengths[bi];
    neg_log_r.data[bi] = -batch.log_rewards[bi];
  }
  Tape::Var traj_sum = tape.take(cum, last);
  Tape::Var r = tape.add_const(tape.add_scalar(traj_sum, heads.log_z), std::move(neg_log_r));
  std::vector<double> w(batch.num_traj, 1.0 / batch.num_traj);
  return tape.weighted_sum(tape.square(r), std::move(w));
}

Tape::Var subtb_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                     const LossConfig& cfg) {
  if (cfg.subtb_lambda <= 0.0 || cfg.subtb_lambda > 1.0)
    throw config_error("subtb lambda must lie in (0, 1]");
  const StepGather g = gather_steps(batch);
  if (g.fwd_idx.empty()) return tape.constant(Tensor::scalar(0.0));
  Tape::Var logp_fwd = tape.masked_log_softmax(heads.fwd_logits, batch.fwd_mask);
  Tape::Var d = step_log_ratio(tape, batch, heads, cfg, g, logp_fwd);
  Tape::Var flows = flow_with_terminal_subst(tape, batch, heads, false);
  std::vector<int64_t> slots(g.fwd_idx.size());
  for (size_t p = 0; p < slots.size(); ++p)
    slots[p] = static_cast<int64_t>(g.traj[p]) * (batch.max_steps + 1) + g.step[p];
  Tape::Var grid = tape.scatter(d, slots, {batch.num_traj, batch.max_steps + 1});
  Tape::Var cum = tape.exclusive_row_cumsum(grid);

  std::vector<int64_t> fj, fk, cj, ck;
  std::vector<double> w;
  for (int bi = 0; bi < batch.num_traj; ++bi) {
    const int len = batch.lengths[bi];
    double norm = 0.0;
    for (int j = 0; j < len; ++j)
      for (int k = j + 1; k <= len; ++k) norm += std::pow(cfg.subtb_lambda, k - j);
    if (norm <= 0.0) continue;
    for (int j = 0; j < len; ++j) {
      for (int k = j + 1; k <= len; ++k) {
        fj.push_back(batch.state_row(bi, j));
        fk.push_back(batch.state_row(bi, k));
        cj.push_back(static_cast<int64_t>(bi) * (batch.max_steps + 1) + j);
        ck.push_back(static_cast<int64_t>(bi) * (batch.max_steps + 1) + k);
        w.push_back(std::pow(cfg.subtb_lambda, k - j) / norm / batch.num_traj);
      }
    }
  }
  Tape::Var r = tape.add(tape.sub(tape.take(flows, fj), tape.take(flows, fk)),
                         tape.sub(tape.take(cum, ck), tape.take(cum, cj)));
  return tape.weighted_sum(tape.square(r), std::move(w));
}

// Balance condition for environments where every state may stop:
// log R(s) + log P_F(s'|s) + log P_F(stop|s') = log R(s') + log P_B(s|s') + log P_F(stop|s),
// applied to every non-stop transition, with log R(s') - log R(s) supplied
// as the recorded delta.
Tape::Var mdb_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                   const LossConfig& cfg) {
  if (cfg.stop_action < 0) throw config_error("mdb objective needs the stop action index");
  Tape::Var logp_fwd = tape.masked_log_softmax(heads.fwd_logits, batch.fwd_mask);
  Tape::Var logp_bwd = -1;
  if (cfg.learned_backward) {
    if (heads.bwd_logits < 0) throw contract_violation("learned backward policy needs bwd_logits");
    logp_bwd = tape.masked_log_softmax(heads.bwd_logits, batch.bwd_mask);
  }
  std::vector<int64_t> act_idx, stop_s, stop_s1, bwd_idx;
  std::vector<double> delta, pb_uniform;
  for (int bi = 0; bi < batch.num_traj; ++bi) {
    for (int t = 0; t + 1 < batch.lengths[bi]; ++t) {
      const int a = batch.fwd_actions[batch.step_index(bi, t)];
      if (a == cfg.stop_action) throw contract_violation("stop action before trajectory end");
      act_idx.push_back(batch.state_row(bi, t) * batch.num_actions + a);
      stop_s.push_back(batch.state_row(bi, t) * batch.num_actions + cfg.stop_action);
      stop_s1.push_back(batch.state_row(bi, t + 1) * batch.num_actions + cfg.stop_action);
      const int ba = batch.bwd_actions[batch.step_index(bi, t)];
      bwd_idx.push_back(batch.state_row(bi, t + 1) * batch.num_bwd_actions + (ba < 0 ? 0 : ba));
      delta.push_back(batch.delta_log_reward[batch.step_index(bi, t)]);
      pb_uniform.push_back(batch.log_pb_uniform[batch.step_index(bi, t)]);
    }
  }
  if (act_idx.empty()) return tape.constant(Tensor::scalar(0.0));
  const size_t n = act_idx.size();
  Tape::Var r = tape.add(tape.take(logp_fwd, act_idx),
                         tape.sub(tape.take(logp_fwd, stop_s1), tape.take(logp_fwd, stop_s)));
  if (cfg.learned_backward) {
    r = tape.sub(r, tape.take(logp_bwd, bwd_idx));
  } else {
    Tensor neg_pb({static_cast<int>(n)});
    for (size_t i = 0; i < n; ++i) neg_pb.data[i] = -pb_uniform[i];
    r = tape.add_const(r, std::move(neg_pb));
  }
  Tensor neg_delta({static_cast<int>(n)});
  for (size_t i = 0; i < n; ++i) neg_delta.data[i] = -delta[i];
  r = tape.add_const(r, std::move(neg_delta));
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return tape.weighted_sum(tape.square(r), std::move(w));
}

}  // namespace

Tape::Var build_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                     const LossConfig& cfg) {
  switch (cfg.objective) {
    case Objective::kDB: return transition_loss(tape, batch, heads, cfg, false);
    case Objective::kFLDB: return transition_loss(tape, batch, heads, cfg, true);
    case Objective::kTB: return tb_loss(tape, batch, heads, cfg);
    case Objective::kSubTB: return subtb_loss(tape, batch, heads, cfg);
    case Objective::kMDB: return mdb_loss(tape, batch, heads, cfg);
  }
  throw config_error("unknown objective");
}

std::vector<double> eps_uniform(const double* logits, const uint8_t* mask, int n, double eps) {
  if (eps < 0.0 || eps > 1.0) throw config_error("exploration eps must lie in [0,1]");
  int legal = 0;
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (mask[i]) {
      ++legal;
      if (logits[i] > hi) hi = logits[i];
    }
  if (legal == 0) throw contract_violation("eps_uniform: no legal action");
  if (!std::isfinite(hi)) throw numeric_error("eps_uniform: non-finite logits");
  double z = 0.0;
  std::vector<double> probs(n, 0.0);
  for (int i = 0; i < n; ++i)
    if (mask[i]) {
      probs[i] = std::exp(logits[i] - hi);
      z += probs[i];
    }
  const double u = eps / legal;
  for (int i = 0; i < n; ++i)
    if (mask[i]) probs[i] = (1.0 - eps) * probs[i] / z + u;
  return probs;
}

void masked_log_softmax_rows(Tensor& logits, const std::vector<uint8_t>& mask) {
  const int rows = logits.rows(), cols = logits.cols();
  if (static_cast<int64_t>(mask.size()) != logits.size())
    throw contract_violation("masked_log_softmax_rows: mask size mismatch");
  for (int r = 0; r < rows; ++r) {
    double* xr = logits.data.data() + static_cast<size_t>(r) * cols;
    const uint8_t* mr = mask.data() + static_cast<size_t>(r) * cols;
    double hi = -std::numeric_limits<double>::infinity();
    int legal = 0;
    for (int c = 0; c < cols; ++c)
      if (mr[c]) {
        ++legal;
        if (xr[c] > hi) hi = xr[c];
      }
    if (legal == 0) {
      const double u = -std::log(static_cast<double>(cols));
      for (int c = 0; c < cols; ++c) xr[c] = u;
      continue;
    }
    if (!std::isfinite(hi)) throw numeric_error("masked_log_softmax_rows: non-finite logits");
    double s = 0.0;
    for (int c = 0; c < cols; ++c)
      if (mr[c]) s += std::exp(xr[c] - hi);
    const double lse = hi + std::log(s);
    for (int c = 0; c < cols; ++c) xr[c] = mr[c] ? xr[c] - lse : Tape::kMaskedLogit;
  }
}

void score_trajectories(const MlpParams& policy, const TrajectoryBatch& batch,
                        bool learned_backward, std::vector<double>* log_pf,
                        std::vector<double>* log_pb) {
  PolicyHeads heads = mlp_forward(policy, batch.obs_tensor());
  masked_log_softmax_rows(heads.fwd_logits, batch.fwd_mask);
  if (learned_backward) masked_log_softmax_rows(heads.bwd_logits, batch.bwd_mask);
  log_pf->assign(batch.num_traj, 0.0);
  log_pb->assign(batch.num_traj, 0.0);
  for (int bi = 0; bi < batch.num_traj; ++bi) {
    for (int t = 0; t < batch.lengths[bi]; ++t) {
      const int a = batch.fwd_actions[batch.step_index(bi, t)];
      (*log_pf)[bi] += heads.fwd_logits.data[batch.state_row(bi, t) * batch.num_actions + a];
      if (learned_backward) {
        const int ba = batch.bwd_actions[batch.step_index(bi, t)];
        (*log_pb)[bi] +=
            heads.bwd_logits.data[batch.state_row(bi, t + 1) * batch.num_bwd_actions +
                                  (ba < 0 ? 0 : ba)];
      } else {
        (*log_pb)[bi] += batch.log_pb_uniform[batch.step_index(bi, t)];
      }
    }
  }
}

}  // namespace gfn
