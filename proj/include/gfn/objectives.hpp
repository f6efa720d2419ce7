#pragma once
#include <cstdint>
#include <vector>

#include "gfn/nn.hpp"
#include "gfn/tape.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

enum class Objective { kDB, kTB, kSubTB, kFLDB, kMDB };

Objective objective_from_name(const std::string& name);
std::string objective_name(Objective o);

struct LossConfig {
  Objective objective = Objective::kTB;
  double subtb_lambda = 0.9;
  bool learned_backward = false;  // default: fixed uniform backward policy
  double terminal_penalty = 1.0;  // extra weight on terminal-transition residuals
  int stop_action = -1;           // stop index, used by the modified-DB objective
};

// Head tensors evaluated on every state row of a TrajectoryBatch
// (N = B*(T+1) rows). bwd_logits/log_flow/log_z may be -1 when the
// objective does not use them.
struct HeadVars {
  Tape::Var fwd_logits = -1;  // [N x A], raw logits
  Tape::Var bwd_logits = -1;  // [N x Ab]
  Tape::Var log_flow = -1;    // [N]
  Tape::Var log_z = -1;       // [1]
};

// Assemble the configured objective as a scalar tape variable.
Tape::Var build_loss(Tape& tape, const TrajectoryBatch& batch, const HeadVars& heads,
                     const LossConfig& cfg);

// (1-eps) * softmax over legal entries + eps * uniform over legal entries.
// Illegal entries get probability 0. Throws if no action is legal.
std::vector<double> eps_uniform(const double* logits, const uint8_t* mask, int n, double eps);

// In-place row-wise masked log-softmax on plain data (no gradients).
// Rows with no legal entry become uniform over all columns.
void masked_log_softmax_rows(Tensor& logits, const std::vector<uint8_t>& mask);

// Per-trajectory sums of chosen-action log-probabilities under the policy.
// log_pb uses the learned backward head when learned_backward, otherwise the
// recorded uniform backward log-probabilities.
void score_trajectories(const MlpParams& policy, const TrajectoryBatch& batch,
                        bool learned_backward, std::vector<double>* log_pf,
                        std::vector<double>* log_pb);

}  // namespace gfn
