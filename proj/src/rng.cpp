#include "gfn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn {

namespace {

constexpr uint64_t kParity = 0x1BD11BDAA9FC1A22ULL;
constexpr int kRot[8] = {16, 42, 12, 31, 16, 32, 24, 21};

inline uint64_t rotl(uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

}  // namespace

RngKey make_key(uint64_t seed) { return RngKey{0x9E3779B97F4A7C15ULL, seed}; }

std::array<uint64_t, 2> threefry2x64(const RngKey& key, uint64_t c0, uint64_t c1) {
  const uint64_t ks[3] = {key.hi, key.lo, key.hi ^ key.lo ^ kParity};
  uint64_t x0 = c0 + ks[0];
  uint64_t x1 = c1 + ks[1];
  for (int round = 0; round < 20; ++round) {
    x0 += x1;
    x1 = rotl(x1, kRot[round % 8]);
    x1 ^= x0;
    if (round % 4 == 3) {
      const int s = round / 4 + 1;
      x0 += ks[s % 3];
      x1 += ks[(s + 1) % 3] + static_cast<uint64_t>(s);
    }
  }
  return {x0, x1};
}

RngKey fold_in(const RngKey& key, uint64_t index) {
  auto w = threefry2x64(key, index, 0x3C6EF372FE94F82BULL);
  return RngKey{w[0], w[1]};
}

std::pair<RngKey, RngKey> split(const RngKey& key) {
  return {fold_in(key, 0), fold_in(key, 1)};
}

namespace {

inline double to_unit(uint64_t w) {
  // top 53 bits -> [0,1)
  return static_cast<double>(w >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<double> random_uniform(const RngKey& key, size_t n) {
  std::vector<double> out(n);
  for (size_t i = 0; i < n; i += 2) {
    auto w = threefry2x64(key, i / 2, 0);
    out[i] = to_unit(w[0]);
    if (i + 1 < n) out[i + 1] = to_unit(w[1]);
  }
  return out;
}

double uniform_scalar(const RngKey& key) {
  return to_unit(threefry2x64(key, 0, 0)[0]);
}

std::vector<double> random_normal(const RngKey& key, size_t n) {
  std::vector<double> out(n);
  for (size_t i = 0; i < n; i += 2) {
    auto w = threefry2x64(key, i / 2, 1);
    double u1 = to_unit(w[0]);
    double u2 = to_unit(w[1]);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < n) out[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return out;
}

int random_range(const RngKey& key, int n) {
  if (n <= 0) throw std::invalid_argument("random_range: n must be positive");
  return static_cast<int>(uniform_scalar(key) * n) % n;
}

int categorical(const RngKey& key, const double* weights, int n) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += weights[i];
  if (!(total > 0.0)) throw std::runtime_error("categorical: no positive weight");
  const double u = uniform_scalar(key) * total;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (weights[i] > 0.0) return i;
  return n - 1;
}

}  // namespace gfn
