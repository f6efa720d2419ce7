#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace gfn {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
// training kernel needs; higher ranks are stored flat with explicit strides
// managed by the caller.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<int> s, std::vector<double> values);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator()(int i) { return data[i]; }
  double operator()(int i) const { return data[i]; }
  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  void fill(double v);
  void add_scaled(const Tensor& o, double s);  // this += s * o
  bool all_finite() const;
  std::string shape_str() const;
};

// c[M x N] += a[M x K] * b[K x N]
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c[M x K] += a[M x N] * b[K x N]^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k);
// c[K x N] += a[M x K]^T * b[M x N]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

Tensor matmul(const Tensor& a, const Tensor& b);

double logsumexp(const double* x, int n);

}  // namespace gfn
