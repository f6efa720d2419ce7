#include "gfn/tensor.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gfn {

namespace {
int64_t shape_size(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(shape_size(shape), 0.0);
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(std::vector<int> s, std::vector<double> values) {
  Tensor t;
  t.shape = std::move(s);
  if (shape_size(t.shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: size mismatch");
  t.data = std::move(values);
  return t;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void Tensor::add_scaled(const Tensor& o, double s) {
  if (!same_shape(o)) throw std::invalid_argument("add_scaled: shape mismatch");
  const double* src = o.data.data();
  double* dst = data.data();
  const size_t n = data.size();
  for (size_t i = 0; i < n; ++i) dst[i] += s * src[i];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * n;
    double* crow = c + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  Tensor c({a.shape[0], b.shape[1]});
  matmul_acc(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1], b.shape[1]);
  return c;
}

double logsumexp(const double* x, int n) {
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (x[i] > hi) hi = x[i];
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - hi);
  return hi + std::log(s);
}

}  // namespace gfn
