#pragma once
#include <vector>

#include "gfn/rng.hpp"
#include "gfn/tape.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

struct Dense {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

// ReLU trunk with three linear heads (forward logits, backward logits,
// log-flow) plus a standalone trainable log-Z scalar.
struct MlpParams {
  std::vector<Dense> trunk;
  Dense fwd_head;
  Dense bwd_head;
  Dense flow_head;
  Tensor log_z;  // shape {1}

  int in_dim() const { return trunk.front().weight.shape[0]; }
  int num_actions() const { return fwd_head.weight.shape[1]; }
  int num_backward_actions() const { return bwd_head.weight.shape[1]; }

  // All trainable tensors except log_z (which gets its own learning rate).
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

// Scaled-uniform fan-in init, zero biases. hidden must be non-empty.
MlpParams mlp_init(int in_dim, const std::vector<int>& hidden, int num_actions,
                   int num_backward_actions, const RngKey& key, double log_z_init = 0.0);

// Raw batched evaluation (no gradients).
struct PolicyHeads {
  Tensor fwd_logits;             // [B x A]
  Tensor bwd_logits;             // [B x Ab]
  std::vector<double> log_flow;  // [B]
  double log_z = 0.0;
};
PolicyHeads mlp_forward(const MlpParams& p, const Tensor& obs);

// Tape-bound evaluation for training. `leaves` aligns with p.tensors();
// log_z gets its own leaf.
struct MlpTapeBind {
  Tape::Var fwd_logits = -1;
  Tape::Var bwd_logits = -1;
  Tape::Var log_flow = -1;  // [B]
  Tape::Var log_z = -1;     // [1]
  std::vector<Tape::Var> leaves;
  Tape::Var log_z_leaf = -1;
};
MlpTapeBind mlp_forward_tape(Tape& tape, const MlpParams& p, const Tensor& obs,
                             bool need_bwd_head, bool need_flow_head);

}  // namespace gfn
