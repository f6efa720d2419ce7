#include "gfn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gfn/errors.hpp"

namespace gfn {

void ExactDistribution::add(std::string key, double prob) {
  if (prob < 0.0) throw numeric_error("ExactDistribution: negative probability");
  auto [it, inserted] = index.emplace(std::move(key), static_cast<int>(keys.size()));
  if (!inserted) throw contract_violation("ExactDistribution: duplicate key " + it->first);
  keys.push_back(it->first);
  probs.push_back(prob);
}

void ExactDistribution::normalize() {
  const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(z > 0.0)) throw numeric_error("ExactDistribution: zero total mass");
  for (double& p : probs) p /= z;
}

double ExactDistribution::prob_of(const std::string& key) const {
  auto it = index.find(key);
  return it == index.end() ? 0.0 : probs[it->second];
}

void EmpiricalDistribution::add(const std::string& key, int64_t n) {
  counts[key] += n;
  total += n;
}

double tv_distance(const EmpiricalDistribution& emp, const ExactDistribution& exact) {
  if (emp.total <= 0) throw contract_violation("tv_distance: empty empirical distribution");
  double acc = 0.0;
  double covered = 0.0;
  for (size_t i = 0; i < exact.keys.size(); ++i) {
    auto it = emp.counts.find(exact.keys[i]);
    const double phat =
        it == emp.counts.end() ? 0.0 : static_cast<double>(it->second) / emp.total;
    if (it != emp.counts.end()) covered += phat;
    acc += std::fabs(phat - exact.probs[i]);
  }
  acc += 1.0 - covered;  // empirical mass outside the exact support
  return 0.5 * acc;
}

double tv_distance(const ExactDistribution& a, const ExactDistribution& b) {
  double acc = 0.0;
  double covered = 0.0;
  for (size_t i = 0; i < a.keys.size(); ++i) {
    const double q = b.prob_of(a.keys[i]);
    covered += q;
    acc += std::fabs(a.probs[i] - q);
  }
  acc += 1.0 - covered;
  return 0.5 * acc;
}

namespace {
inline double xlogx_ratio(double p, double m) {
  if (p <= 0.0) return 0.0;
  return p * std::log(p / m);
}
}  // namespace

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw contract_violation("jsd: support size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (m <= 0.0) continue;
    acc += 0.5 * xlogx_ratio(p[i], m) + 0.5 * xlogx_ratio(q[i], m);
  }
  return acc;
}

double jsd(const ExactDistribution& p, const ExactDistribution& q) {
  // Union support: q mass outside p's keys still contributes.
  std::vector<double> pv, qv;
  pv.reserve(p.keys.size() + q.keys.size());
  for (size_t i = 0; i < p.keys.size(); ++i) {
    pv.push_back(p.probs[i]);
    qv.push_back(q.prob_of(p.keys[i]));
  }
  for (size_t i = 0; i < q.keys.size(); ++i) {
    if (p.index.count(q.keys[i])) continue;
    pv.push_back(0.0);
    qv.push_back(q.probs[i]);
  }
  return jsd(pv, qv);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw contract_violation("pearson: need two equal-length series");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw numeric_error("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<std::string> perfect_sampler(const ExactDistribution& exact, const RngKey& key,
                                         int64_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    const int idx = categorical(fold_in(key, static_cast<uint64_t>(i)), exact.probs.data(),
                                static_cast<int>(exact.probs.size()));
    out.push_back(exact.keys[idx]);
  }
  return out;
}

int hamming(const std::string& x, const std::string& y) {
  if (x.size() != y.size()) throw contract_violation("hamming: length mismatch");
  int d = 0;
  for (size_t i = 0; i < x.size(); ++i) d += x[i] != y[i];
  return d;
}

int edit_distance(const std::string& x, const std::string& y) {
  const size_t n = x.size(), m = y.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (x[i - 1] != y[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

TopKResult topk_reward_diversity(const std::vector<std::string>& samples,
                                 const std::vector<double>& rewards, int k) {
  if (samples.size() != rewards.size())
    throw contract_violation("topk: samples/rewards size mismatch");
  if (k < 1 || static_cast<size_t>(k) > samples.size())
    throw contract_violation("topk: k exceeds sample count");
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rewards[a] > rewards[b]; });
  TopKResult res;
  bool fixed_len = true;
  for (int i = 0; i < k; ++i) {
    res.mean_reward += rewards[order[i]];
    if (samples[order[i]].size() != samples[order[0]].size()) fixed_len = false;
  }
  res.mean_reward /= k;
  if (k == 1) return res;
  double acc = 0.0;
  int64_t pairs = 0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      acc += fixed_len ? hamming(samples[order[i]], samples[order[j]])
                       : edit_distance(samples[order[i]], samples[order[j]]);
      ++pairs;
    }
  res.diversity = acc / static_cast<double>(pairs);
  return res;
}

}  // namespace gfn
