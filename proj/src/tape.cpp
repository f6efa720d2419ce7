#include "gfn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gfn {

namespace {
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
}  // namespace

Tape::Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

const Tensor& Tape::grad(Var v) const {
  if (!nodes_[v].needs_grad) throw std::logic_error("grad of non-differentiable node");
  return nodes_[v].grad;
}

Tape::Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = gfn::matmul(nodes_[a].value, nodes_[b].value);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& x = nodes_[a].value;
  const Tensor& y = nodes_[b].value;
  if (!x.same_shape(y)) throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = x;
  n.value.add_scaled(y, 1.0);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
  const Tensor& x = nodes_[a].value;
  const Tensor& y = nodes_[b].value;
  if (!x.same_shape(y)) throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = x;
  n.value.add_scaled(y, -1.0);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& x = nodes_[a].value;
  const Tensor& y = nodes_[b].value;
  if (!x.same_shape(y)) throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = x;
  for (int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= y.data[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& x = nodes_[a].value;
  const Tensor& v = nodes_[bias].value;
  if (x.shape.size() != 2 || v.size() != x.shape[1])
    throw std::invalid_argument("add_rowvec: shape mismatch");
  Node n;
  n.op = Op::kAddRowvec;
  n.a = a;
  n.b = bias;
  n.value = x;
  const int rows = x.shape[0], cols = x.shape[1];
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) n.value.data[static_cast<size_t>(i) * cols + j] += v.data[j];
  n.needs_grad = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.value = nodes_[a].value;
  for (double& v : n.value.data)
    if (v < 0.0) v = 0.0;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v *= s;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::add_scalar(Var a, Var s) {
  if (nodes_[s].value.size() != 1) throw std::invalid_argument("add_scalar: s must be scalar");
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.b = s;
  n.value = nodes_[a].value;
  const double sv = nodes_[s].value.data[0];
  for (double& v : n.value.data) v += sv;
  n.needs_grad = nodes_[a].needs_grad || nodes_[s].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::square(Var a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v *= v;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::add_const(Var a, Tensor c) {
  if (!nodes_[a].value.same_shape(c)) throw std::invalid_argument("add_const: shape mismatch");
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.value = nodes_[a].value;
  n.value.add_scaled(c, 1.0);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::mul_const(Var a, Tensor c) {
  if (!nodes_[a].value.same_shape(c)) throw std::invalid_argument("mul_const: shape mismatch");
  Node n;
  n.op = Op::kMulConst;
  n.a = a;
  n.value = nodes_[a].value;
  for (int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= c.data[i];
  n.aux = std::move(c);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::masked_log_softmax(Var logits, std::vector<uint8_t> mask) {
  const Tensor& x = nodes_[logits].value;
  if (x.shape.size() != 2) throw std::invalid_argument("masked_log_softmax: want matrix");
  if (static_cast<int64_t>(mask.size()) != x.size())
    throw std::invalid_argument("masked_log_softmax: mask size mismatch");
  const int rows = x.shape[0], cols = x.shape[1];
  Node n;
  n.op = Op::kMaskedLogSoftmax;
  n.a = logits;
  n.value = Tensor({rows, cols});
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + static_cast<size_t>(r) * cols;
    const uint8_t* mr = mask.data() + static_cast<size_t>(r) * cols;
    double* out = n.value.data.data() + static_cast<size_t>(r) * cols;
    double hi = -std::numeric_limits<double>::infinity();
    int legal = 0;
    for (int c = 0; c < cols; ++c)
      if (mr[c]) {
        ++legal;
        if (xr[c] > hi) hi = xr[c];
      }
    if (legal == 0) {
      const double u = -std::log(static_cast<double>(cols));
      for (int c = 0; c < cols; ++c) out[c] = u;
      continue;
    }
    if (!std::isfinite(hi)) throw numeric_error("masked_log_softmax: non-finite logits");
    double s = 0.0;
    for (int c = 0; c < cols; ++c)
      if (mr[c]) s += std::exp(xr[c] - hi);
    const double lse = hi + std::log(s);
    for (int c = 0; c < cols; ++c) out[c] = mr[c] ? xr[c] - lse : kMaskedLogit;
  }
  n.mask = std::move(mask);
  n.needs_grad = nodes_[logits].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::take(Var a, std::vector<int64_t> idx) {
  const Tensor& x = nodes_[a].value;
  Node n;
  n.op = Op::kTake;
  n.a = a;
  n.value = Tensor({static_cast<int>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.size()) throw std::out_of_range("take: index out of range");
    n.value.data[i] = x.data[idx[i]];
  }
  n.idx = std::move(idx);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::scatter(Var a, std::vector<int64_t> idx, std::vector<int> out_shape) {
  const Tensor& x = nodes_[a].value;
  if (static_cast<int64_t>(idx.size()) != x.size())
    throw std::invalid_argument("scatter: index count mismatch");
  Node n;
  n.op = Op::kScatter;
  n.a = a;
  n.value = Tensor(std::move(out_shape));
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n.value.size()) throw std::out_of_range("scatter: index out of range");
    n.value.data[idx[i]] += x.data[i];
  }
  n.idx = std::move(idx);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::exclusive_row_cumsum(Var a) {
  const Tensor& x = nodes_[a].value;
  if (x.shape.size() != 2) throw std::invalid_argument("exclusive_row_cumsum: want matrix");
  const int rows = x.shape[0], cols = x.shape[1];
  Node n;
  n.op = Op::kExclusiveRowCumsum;
  n.a = a;
  n.value = Tensor({rows, cols});
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) {
      n.value(r, c) = acc;
      acc += x(r, c);
    }
  }
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::row_sum(Var a) {
  const Tensor& x = nodes_[a].value;
  if (x.shape.size() != 2) throw std::invalid_argument("row_sum: want matrix");
  Node n;
  n.op = Op::kRowSum;
  n.a = a;
  n.value = Tensor({x.shape[0]});
  for (int r = 0; r < x.shape[0]; ++r) {
    double acc = 0.0;
    for (int c = 0; c < x.shape[1]; ++c) acc += x(r, c);
    n.value.data[r] = acc;
  }
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  double acc = 0.0;
  for (double v : nodes_[a].value.data) acc += v;
  n.value = Tensor::scalar(acc);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::mean(Var a) {
  Node n;
  n.op = Op::kMean;
  n.a = a;
  const int64_t count = nodes_[a].value.size();
  if (count == 0) throw std::invalid_argument("mean of empty tensor");
  double acc = 0.0;
  for (double v : nodes_[a].value.data) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(count));
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::weighted_sum(Var a, std::vector<double> w) {
  const Tensor& x = nodes_[a].value;
  if (static_cast<int64_t>(w.size()) != x.size())
    throw std::invalid_argument("weighted_sum: weight count mismatch");
  Node n;
  n.op = Op::kWeightedSum;
  n.a = a;
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data[i] * w[i];
  n.value = Tensor::scalar(acc);
  n.weights = std::move(w);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (nodes_[loss].value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  for (Node& n : nodes_) {
    if (n.needs_grad) {
      n.grad = Tensor(n.value.shape);
    }
  }
  if (!nodes_[loss].needs_grad) return;
  nodes_[loss].grad.data[0] = 1.0;
  for (int i = loss; i >= 0; --i) {
    if (nodes_[i].needs_grad) backward_node(i);
  }
}

void Tape::backward_node(int i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  auto gr = [&](int v) -> Tensor& { return nodes_[v].grad; };
  auto wants = [&](int v) { return v >= 0 && nodes_[v].needs_grad; };
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kMatmul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const int m = a.shape[0], k = a.shape[1], c = b.shape[1];
      if (wants(n.a))
        matmul_nt_acc(g.data.data(), b.data.data(), gr(n.a).data.data(), m, c, k);
      if (wants(n.b))
        matmul_tn_acc(a.data.data(), g.data.data(), gr(n.b).data.data(), m, k, c);
      break;
    }
    case Op::kAdd:
      if (wants(n.a)) gr(n.a).add_scaled(g, 1.0);
      if (wants(n.b)) gr(n.b).add_scaled(g, 1.0);
      break;
    case Op::kSub:
      if (wants(n.a)) gr(n.a).add_scaled(g, 1.0);
      if (wants(n.b)) gr(n.b).add_scaled(g, -1.0);
      break;
    case Op::kMul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      if (wants(n.a))
        for (int64_t j = 0; j < g.size(); ++j) gr(n.a).data[j] += g.data[j] * b.data[j];
      if (wants(n.b))
        for (int64_t j = 0; j < g.size(); ++j) gr(n.b).data[j] += g.data[j] * a.data[j];
      break;
    }
    case Op::kAddRowvec: {
      if (wants(n.a)) gr(n.a).add_scaled(g, 1.0);
      if (wants(n.b)) {
        const int rows = n.value.shape[0], cols = n.value.shape[1];
        Tensor& gb = gr(n.b);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gb.data[c] += g.data[static_cast<size_t>(r) * cols + c];
      }
      break;
    }
    case Op::kRelu:
      if (wants(n.a)) {
        const Tensor& a = nodes_[n.a].value;
        for (int64_t j = 0; j < g.size(); ++j)
          if (a.data[j] > 0.0) gr(n.a).data[j] += g.data[j];
      }
      break;
    case Op::kScale:
      if (wants(n.a)) gr(n.a).add_scaled(g, n.scalar);
      break;
    case Op::kAddScalar: {
      if (wants(n.a)) gr(n.a).add_scaled(g, 1.0);
      if (wants(n.b)) {
        double acc = 0.0;
        for (double v : g.data) acc += v;
        gr(n.b).data[0] += acc;
      }
      break;
    }
    case Op::kSquare:
      if (wants(n.a)) {
        const Tensor& a = nodes_[n.a].value;
        for (int64_t j = 0; j < g.size(); ++j) gr(n.a).data[j] += 2.0 * a.data[j] * g.data[j];
      }
      break;
    case Op::kAddConst:
      if (wants(n.a)) gr(n.a).add_scaled(g, 1.0);
      break;
    case Op::kMulConst:
      if (wants(n.a))
        for (int64_t j = 0; j < g.size(); ++j) gr(n.a).data[j] += g.data[j] * n.aux.data[j];
      break;
    case Op::kMaskedLogSoftmax: {
      if (!wants(n.a)) break;
      const int rows = n.value.shape[0], cols = n.value.shape[1];
      Tensor& ga = gr(n.a);
      for (int r = 0; r < rows; ++r) {
        const uint8_t* mr = n.mask.data() + static_cast<size_t>(r) * cols;
        const double* out = n.value.data.data() + static_cast<size_t>(r) * cols;
        const double* grow = g.data.data() + static_cast<size_t>(r) * cols;
        double gsum = 0.0;
        bool any = false;
        for (int c = 0; c < cols; ++c)
          if (mr[c]) {
            gsum += grow[c];
            any = true;
          }
        if (!any) continue;  // all-masked rows are constant
        double* garow = ga.data.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c)
          if (mr[c]) garow[c] += grow[c] - std::exp(out[c]) * gsum;
      }
      break;
    }
    case Op::kTake:
      if (wants(n.a))
        for (size_t j = 0; j < n.idx.size(); ++j) gr(n.a).data[n.idx[j]] += g.data[j];
      break;
    case Op::kScatter:
      if (wants(n.a))
        for (size_t j = 0; j < n.idx.size(); ++j) gr(n.a).data[j] += g.data[n.idx[j]];
      break;
    case Op::kExclusiveRowCumsum: {
      if (!wants(n.a)) break;
      const int rows = n.value.shape[0], cols = n.value.shape[1];
      Tensor& ga = gr(n.a);
      for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int c = cols - 1; c >= 0; --c) {
          // d out[r, c'] / d in[r, c] = 1 for c' > c
          ga(r, c) += acc;
          acc += g(r, c);
        }
      }
      break;
    }
    case Op::kRowSum: {
      if (!wants(n.a)) break;
      const Tensor& a = nodes_[n.a].value;
      const int rows = a.shape[0], cols = a.shape[1];
      Tensor& ga = gr(n.a);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) ga(r, c) += g.data[r];
      break;
    }
    case Op::kSum:
      if (wants(n.a)) {
        const double gv = g.data[0];
        for (double& v : gr(n.a).data) v += gv;
      }
      break;
    case Op::kMean:
      if (wants(n.a)) {
        const double gv = g.data[0] / static_cast<double>(nodes_[n.a].value.size());
        for (double& v : gr(n.a).data) v += gv;
      }
      break;
    case Op::kWeightedSum:
      if (wants(n.a)) {
        const double gv = g.data[0];
        for (size_t j = 0; j < n.weights.size(); ++j) gr(n.a).data[j] += gv * n.weights[j];
      }
      break;
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace gfn
