#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "gfn/errors.hpp"
#include "gfn/metrics.hpp"

namespace gfn {

// Fixed-capacity FIFO of encoded terminal objects; eviction is strictly
// oldest-first. Backs the empirical-distribution metrics.
class FifoBuffer {
 public:
  explicit FifoBuffer(int64_t capacity = 200000) : capacity_(capacity) {
    if (capacity < 1) throw config_error("FifoBuffer: capacity must be >= 1");
    ring_.resize(capacity);
  }

  void push(std::string item) {
    ring_[head_] = std::move(item);
    head_ = (head_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }

  void push_batch(const std::vector<std::string>& items) {
    for (const auto& it : items) push(it);
  }

  int64_t size() const { return size_; }
  int64_t capacity() const { return capacity_; }

  // Contents oldest-first.
  std::vector<std::string> snapshot() const {
    std::vector<std::string> out;
    out.reserve(size_);
    const int64_t start = size_ < capacity_ ? 0 : head_;
    for (int64_t i = 0; i < size_; ++i) out.push_back(ring_[(start + i) % capacity_]);
    return out;
  }

  EmpiricalDistribution empirical() const {
    if (size_ == 0) throw contract_violation("FifoBuffer: empirical of empty buffer");
    EmpiricalDistribution d;
    const int64_t start = size_ < capacity_ ? 0 : head_;
    for (int64_t i = 0; i < size_; ++i) d.add(ring_[(start + i) % capacity_]);
    return d;
  }

 private:
  int64_t capacity_;
  std::vector<std::string> ring_;
  int64_t head_ = 0;
  int64_t size_ = 0;
};

}  // namespace gfn
