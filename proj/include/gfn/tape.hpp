#pragma once
#include <cstdint>
#include <vector>

#include "gfn/tensor.hpp"

namespace gfn {

// Reverse-mode autodiff over a fixed primitive set. Build a graph forward,
// call backward(loss) once, then read gradients of leaves. The primitive set
// is exactly what the training objectives need; no general tape for
// arbitrary user code.
class Tape {
 public:
  using Var = int;

  Var leaf(Tensor value);
  Var constant(Tensor value);  // participates in forward only, no gradient

  const Tensor& value(Var v) const { return nodes_[v].value; }
  const Tensor& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_rowvec(Var a, Var bias);        // a[R x C] + bias[C] per row
  Var relu(Var a);
  Var scale(Var a, double s);
  Var add_scalar(Var a, Var s);           // broadcast scalar var s over a
  Var square(Var a);
  Var add_const(Var a, Tensor c);
  Var mul_const(Var a, Tensor c);
  // Rows with no legal entry produce a uniform constant row (finite, no grad).
  // Illegal entries are set to a large negative finite sentinel.
  Var masked_log_softmax(Var logits, std::vector<uint8_t> mask);
  Var take(Var a, std::vector<int64_t> idx);                       // out[i] = flat(a)[idx[i]]
  Var scatter(Var a, std::vector<int64_t> idx, std::vector<int> out_shape);  // out[idx[i]] = a[i]
  Var exclusive_row_cumsum(Var a);        // out[r,c] = sum_{c'<c} a[r,c']
  Var row_sum(Var a);                     // [R x C] -> [R]
  Var sum(Var a);                         // -> [1]
  Var mean(Var a);                        // -> [1]
  Var weighted_sum(Var a, std::vector<double> w);  // dot(a, w) -> [1]

  void backward(Var loss);
  void clear();
  size_t num_nodes() const { return nodes_.size(); }

  static constexpr double kMaskedLogit = -1e30;

 private:
  enum class Op {
    kLeaf, kConst, kMatmul, kAdd, kSub, kMul, kAddRowvec, kRelu, kScale,
    kAddScalar, kSquare, kAddConst, kMulConst, kMaskedLogSoftmax, kTake,
    kScatter, kExclusiveRowCumsum, kRowSum, kSum, kMean, kWeightedSum,
  };
  struct Node {
    Op op;
    Tensor value;
    Tensor grad;
    int a = -1, b = -1;
    double scalar = 0.0;
    std::vector<int64_t> idx;
    std::vector<uint8_t> mask;
    std::vector<double> weights;
    Tensor aux;
    bool needs_grad = false;
  };

  Var push(Node n);
  void backward_node(int i);
  std::vector<Node> nodes_;
};

}  // namespace gfn
