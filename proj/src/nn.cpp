#include "gfn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn {

std::vector<Tensor*> MlpParams::tensors() {
  std::vector<Tensor*> out;
  for (Dense& d : trunk) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  }
  for (Dense* d : {&fwd_head, &bwd_head, &flow_head}) {
    out.push_back(&d->weight);
    out.push_back(&d->bias);
  }
  return out;
}

std::vector<const Tensor*> MlpParams::tensors() const {
  auto mut = const_cast<MlpParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

namespace {

Dense dense_init(int in, int out, const RngKey& key) {
  if (in < 1 || out < 1) throw std::invalid_argument("mlp_init: zero-width layer");
  Dense d;
  d.weight = Tensor({in, out});
  d.bias = Tensor({out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto u = random_uniform(key, d.weight.data.size());
  for (size_t i = 0; i < u.size(); ++i) d.weight.data[i] = (2.0 * u[i] - 1.0) * bound;
  return d;
}

}  // namespace

MlpParams mlp_init(int in_dim, const std::vector<int>& hidden, int num_actions,
                   int num_backward_actions, const RngKey& key, double log_z_init) {
  if (hidden.empty()) throw std::invalid_argument("mlp_init: need at least one hidden layer");
  if (num_actions < 1 || num_backward_actions < 1)
    throw std::invalid_argument("mlp_init: head widths must be positive");
  MlpParams p;
  int prev = in_dim;
  int k = 0;
  for (int h : hidden) {
    p.trunk.push_back(dense_init(prev, h, fold_in(key, k++)));
    prev = h;
  }
  p.fwd_head = dense_init(prev, num_actions, fold_in(key, k++));
  p.bwd_head = dense_init(prev, num_backward_actions, fold_in(key, k++));
  p.flow_head = dense_init(prev, 1, fold_in(key, k++));
  p.log_z = Tensor::scalar(log_z_init);
  return p;
}

PolicyHeads mlp_forward(const MlpParams& p, const Tensor& obs) {
  if (obs.shape.size() != 2 || obs.shape[1] != p.in_dim())
    throw std::invalid_argument("mlp_forward: obs width " + obs.shape_str() + " does not match input layer");
  Tensor h = obs;
  for (const Dense& d : p.trunk) {
    Tensor z = matmul(h, d.weight);
    const int rows = z.shape[0], cols = z.shape[1];
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double& v = z(i, j);
        v += d.bias.data[j];
        if (v < 0.0) v = 0.0;
      }
    h = std::move(z);
  }
  auto head = [&](const Dense& d) {
    Tensor z = matmul(h, d.weight);
    const int rows = z.shape[0], cols = z.shape[1];
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) z(i, j) += d.bias.data[j];
    return z;
  };
  PolicyHeads out;
  out.fwd_logits = head(p.fwd_head);
  out.bwd_logits = head(p.bwd_head);
  Tensor flow = head(p.flow_head);
  out.log_flow.assign(flow.data.begin(), flow.data.end());
  out.log_z = p.log_z.data[0];
  return out;
}

MlpTapeBind mlp_forward_tape(Tape& tape, const MlpParams& p, const Tensor& obs,
                             bool need_bwd_head, bool need_flow_head) {
  if (obs.shape.size() != 2 || obs.shape[1] != p.in_dim())
    throw std::invalid_argument("mlp_forward_tape: obs width mismatch");
  MlpTapeBind bind;
  std::vector<Tape::Var> leaves;
  auto leaf_dense = [&](const Dense& d) {
    Tape::Var w = tape.leaf(d.weight);
    Tape::Var b = tape.leaf(d.bias);
    leaves.push_back(w);
    leaves.push_back(b);
    return std::pair<Tape::Var, Tape::Var>{w, b};
  };

  Tape::Var h = tape.constant(obs);
  for (const Dense& d : p.trunk) {
    auto [w, b] = leaf_dense(d);
    h = tape.relu(tape.add_rowvec(tape.matmul(h, w), b));
  }
  {
    auto [w, b] = leaf_dense(p.fwd_head);
    bind.fwd_logits = tape.add_rowvec(tape.matmul(h, w), b);
  }
  {
    auto [w, b] = leaf_dense(p.bwd_head);
    if (need_bwd_head) bind.bwd_logits = tape.add_rowvec(tape.matmul(h, w), b);
  }
  {
    auto [w, b] = leaf_dense(p.flow_head);
    if (need_flow_head) bind.log_flow = tape.row_sum(tape.add_rowvec(tape.matmul(h, w), b));
  }
  bind.log_z_leaf = tape.leaf(p.log_z);
  bind.log_z = bind.log_z_leaf;
  bind.leaves = std::move(leaves);
  return bind;
}

}  // namespace gfn
