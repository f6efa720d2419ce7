#pragma once
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace gfn {

// Counter-based splittable PRNG (Threefry-2x64, 20 rounds). Every stochastic
// routine takes an explicit key; identical keys give identical draws and
// folded-in keys form independent streams.
struct RngKey {
  uint64_t hi = 0;
  uint64_t lo = 0;
  bool operator==(const RngKey&) const = default;
};

RngKey make_key(uint64_t seed);

// Raw block function: two 64-bit words from (key, counter).
std::array<uint64_t, 2> threefry2x64(const RngKey& key, uint64_t c0, uint64_t c1);

// Derive a new key from (key, index). Distinct indices give independent keys.
RngKey fold_in(const RngKey& key, uint64_t index);
std::pair<RngKey, RngKey> split(const RngKey& key);

std::vector<double> random_uniform(const RngKey& key, size_t n);  // [0,1)
double uniform_scalar(const RngKey& key);
std::vector<double> random_normal(const RngKey& key, size_t n);
int random_range(const RngKey& key, int n);  // uniform int in [0,n)

// Draw an index proportional to nonnegative weights (need not be normalized).
int categorical(const RngKey& key, const double* weights, int n);

}  // namespace gfn
