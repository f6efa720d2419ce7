#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gfn/envs/hypergrid.hpp"
#include "gfn/exact.hpp"
#include "gfn/metrics.hpp"

using namespace gfn;

namespace {

ExactDistribution dist_of(std::vector<std::pair<std::string, double>> items) {
  ExactDistribution d;
  for (auto& [k, v] : items) d.add(std::move(k), v);
  return d;
}

}  // namespace

TEST_CASE("total variation hand values") {
  auto exact = dist_of({{"a", 0.5}, {"b", 0.5}});
  EmpiricalDistribution same;
  same.add("a", 5);
  same.add("b", 5);
  CHECK(tv_distance(same, exact) == doctest::Approx(0.0));
  EmpiricalDistribution skew;
  skew.add("a", 3);
  skew.add("b", 1);
  CHECK(tv_distance(skew, exact) == doctest::Approx(0.25));
  EmpiricalDistribution disjoint;
  disjoint.add("z", 4);
  CHECK(tv_distance(disjoint, exact) == doctest::Approx(1.0));
  EmpiricalDistribution empty;
  CHECK_THROWS_AS(tv_distance(empty, exact), contract_violation);
  CHECK(tv_distance(exact, exact) == doctest::Approx(0.0));
}

TEST_CASE("jensen-shannon divergence") {
  auto p = dist_of({{"a", 0.5}, {"b", 0.5}});
  CHECK(jsd(p, p) == doctest::Approx(0.0));
  auto da = dist_of({{"a", 1.0}});
  auto db = dist_of({{"b", 1.0}});
  CHECK(jsd(da, db) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // hand evaluation of the defining formula at ((1/2,1/2), (1,0)):
  // M = (3/4, 1/4); JSD = [KL(P||M) + KL(Q||M)] / 2 = 0.2157615...
  auto q = dist_of({{"a", 1.0}, {"b", 0.0}});
  const double expect = 0.5 * (0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25)) +
                        0.5 * std::log(1.0 / 0.75);
  CHECK(expect == doctest::Approx(0.2157615).epsilon(1e-6));
  CHECK(jsd(p, q) == doctest::Approx(expect).epsilon(1e-12));
  // symmetry and the log 2 bound on random distributions
  RngKey key = make_key(91);
  for (int trial = 0; trial < 20; ++trial) {
    auto u = random_uniform(fold_in(key, trial), 8);
    std::vector<double> pv(u.begin(), u.begin() + 4), qv(u.begin() + 4, u.end());
    double zp = 0, zq = 0;
    for (double v : pv) zp += v;
    for (double v : qv) zq += v;
    for (double& v : pv) v /= zp;
    for (double& v : qv) v /= zq;
    const double ab = jsd(pv, qv);
    CHECK(ab == doctest::Approx(jsd(qv, pv)).epsilon(1e-14));
    CHECK(ab <= std::log(2.0) + 1e-12);
    CHECK(ab >= 0.0);
  }
}

TEST_CASE("pearson correlation") {
  std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK(pearson(x, x) == doctest::Approx(1.0));
  std::vector<double> nx = {-1.0, -2.0, -3.0};
  CHECK(pearson(x, nx) == doctest::Approx(-1.0));
  std::vector<double> y = {1.0, 2.0, 4.0};
  CHECK(pearson(x, y) == doctest::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-12));
  std::vector<double> flat = {2.0, 2.0, 2.0};
  CHECK_THROWS_AS(pearson(x, flat), numeric_error);
  CHECK_THROWS_AS(pearson({1.0}, {2.0}), contract_violation);
}

TEST_CASE("edit distance") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "abc") == 0);
  CHECK(edit_distance("ab", "ba") == 2);
}

TEST_CASE("top-k reward and diversity") {
  std::vector<std::string> samples = {"AAAA", "AAAA", "AAAA"};
  std::vector<double> rewards = {1.0, 1.0, 1.0};
  auto res = topk_reward_diversity(samples, rewards, 3);
  CHECK(res.mean_reward == doctest::Approx(1.0));
  CHECK(res.diversity == doctest::Approx(0.0));

  std::vector<std::string> two = {"AAAB", "BBBB", "AAAA"};
  std::vector<double> r2 = {3.0, 2.0, 1.0};
  auto res2 = topk_reward_diversity(two, r2, 2);
  CHECK(res2.mean_reward == doctest::Approx(2.5));
  CHECK(res2.diversity == doctest::Approx(3.0));  // hamming("AAAB", "BBBB")

  // variable lengths fall back to edit distance
  std::vector<std::string> var = {"AB", "ABC"};
  std::vector<double> rv = {1.0, 1.0};
  CHECK(topk_reward_diversity(var, rv, 2).diversity == doctest::Approx(1.0));
  CHECK_THROWS_AS(topk_reward_diversity(var, rv, 3), contract_violation);
}

TEST_CASE("mc estimator agrees with exact marginals on the grid") {
  HypergridEnv env;
  HypergridEnv::Params p;
  p.dim = 2;
  p.side = 3;
  MlpParams policy = mlp_init(env.obs_dim(p), {16, 16}, env.num_actions(p),
                              env.num_backward_actions(p), make_key(92));
  auto g = enumerate_state_graph(env, p);
  auto marg = exact_policy_marginal(env, p, g, policy);

  HypergridEnv::Instance x = env.reset_instance(p);
  x.coords = {1, 1};
  x.is_terminal = true;
  x.step_count = 3;
  const double exact = marg.prob_of("1,1");

  // repeated estimates: the probability-space mean is unbiased
  const int repeats = 100;
  std::vector<double> estimates(repeats);
  for (int r = 0; r < repeats; ++r)
    estimates[r] =
        std::exp(mc_terminal_logprob(env, p, policy, false, x, 64, fold_in(make_key(93), r)));
  double mean = 0.0, var = 0.0;
  for (double v : estimates) mean += v;
  mean /= repeats;
  for (double v : estimates) var += (v - mean) * (v - mean);
  var /= (repeats - 1);
  const double se = std::sqrt(var / repeats);
  CHECK(std::fabs(mean - exact) < 3 * se + 1e-12);
  // determinism under a fixed key
  CHECK(mc_terminal_logprob(env, p, policy, false, x, 10, make_key(94)) ==
        mc_terminal_logprob(env, p, policy, false, x, 10, make_key(94)));
}

TEST_CASE("exact marginal sums to one for a random policy") {
  HypergridEnv env;
  HypergridEnv::Params p;
  p.dim = 2;
  p.side = 4;
  MlpParams policy = mlp_init(env.obs_dim(p), {8}, env.num_actions(p),
                              env.num_backward_actions(p), make_key(95));
  auto g = enumerate_state_graph(env, p);
  auto marg = exact_policy_marginal(env, p, g, policy);
  double total = 0.0;
  for (double q : marg.probs) total += q;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perfect sampler TV decays roughly like n^{-1/2}") {
  HypergridEnv::Params p;
  p.dim = 2;
  p.side = 8;
  auto exact = grid_exact_distribution(p);
  auto tv_at = [&](int64_t n, uint64_t seed) {
    EmpiricalDistribution emp;
    for (const auto& s : perfect_sampler(exact, make_key(seed), n)) emp.add(s);
    return tv_distance(emp, exact);
  };
  // averaged over seeds, quadrupling the sample count halves the distance
  double tv_small = 0.0, tv_big = 0.0;
  for (uint64_t s = 0; s < 5; ++s) {
    tv_small += tv_at(2000, 200 + s);
    tv_big += tv_at(8000, 300 + s);
  }
  const double ratio = tv_small / tv_big;
  CHECK(ratio > 1.4);
  CHECK(ratio < 2.9);
}
