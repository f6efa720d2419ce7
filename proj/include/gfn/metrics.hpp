#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn {

// Enumerated target distribution over terminal objects, keyed by the
// environment's canonical terminal encoding. Items are kept in a stable
// order so sampling and reporting are deterministic.
struct ExactDistribution {
  std::vector<std::string> keys;
  std::vector<double> probs;
  std::unordered_map<std::string, int> index;

  void add(std::string key, double prob);
  void normalize();
  double prob_of(const std::string& key) const;  // 0 when absent
  size_t size() const { return keys.size(); }
};

struct EmpiricalDistribution {
  std::unordered_map<std::string, int64_t> counts;
  int64_t total = 0;

  void add(const std::string& key, int64_t n = 1);
};

// 0.5 * sum |phat - p| over the union of supports.
double tv_distance(const EmpiricalDistribution& emp, const ExactDistribution& exact);
double tv_distance(const ExactDistribution& a, const ExactDistribution& b);

// Jensen-Shannon divergence, natural log, 0*log 0 := 0; bounded by log 2.
double jsd(const ExactDistribution& p, const ExactDistribution& q);
double jsd(const std::vector<double>& p, const std::vector<double>& q);

// Sample correlation coefficient.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// i.i.d. draws from an exact distribution ("perfect sampler").
std::vector<std::string> perfect_sampler(const ExactDistribution& exact, const RngKey& key,
                                         int64_t n);

// Mean reward of the k best samples plus their mean pairwise distance
// (Hamming for equal lengths, edit distance otherwise).
struct TopKResult {
  double mean_reward = 0.0;
  double diversity = 0.0;
};
TopKResult topk_reward_diversity(const std::vector<std::string>& samples,
                                 const std::vector<double>& rewards, int k);

int hamming(const std::string& x, const std::string& y);
int edit_distance(const std::string& x, const std::string& y);

}  // namespace gfn
