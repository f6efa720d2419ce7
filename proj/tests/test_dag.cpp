#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "gfn/envs/dag.hpp"
#include "gfn/exact.hpp"

using namespace gfn;

namespace {

DagEnv::Params make_params(const DagDataset& data, const std::string& score = "lingauss") {
  DagEnv::Params p;
  p.d = data.d;
  if (score == "lingauss")
    p.score = std::make_shared<LocalScoreCache>(LocalScoreCache::lingauss(data));
  else
    p.score = std::make_shared<LocalScoreCache>(LocalScoreCache::bge(data));
  return p;
}

uint32_t parents_of(const std::vector<uint32_t>& adj, int j, int d) {
  uint32_t mask = 0;
  for (int u = 0; u < d; ++u)
    if (adj[u] & (1u << j)) mask |= 1u << u;
  return mask;
}

}  // namespace

TEST_CASE("closure updates match the from-scratch oracle") {
  SUBCASE("single edge") {
    std::vector<uint32_t> cl = closure_from_adjacency({0, 0, 0});
    closure_update(cl, 1, 2);  // add 1 -> 2
    const bool fwd = (cl[2] >> 1) & 1;  // 1 reaches 2, recorded transposed
    const bool rev = (cl[1] >> 2) & 1;
    CHECK(fwd);
    CHECK(!rev);
  }
  SUBCASE("chain closes transitively") {
    std::vector<uint32_t> adj(3, 0);
    std::vector<uint32_t> cl = closure_from_adjacency(adj);
    adj[0] |= 1u << 1;
    closure_update(cl, 0, 1);
    adj[1] |= 1u << 2;
    closure_update(cl, 1, 2);
    const bool reach = (cl[2] >> 0) & 1;  // path 0 ~> 2
    CHECK(reach);
    CHECK(cl == closure_from_adjacency(adj));
  }
  SUBCASE("idempotence") {
    std::vector<uint32_t> cl = closure_from_adjacency({2, 0, 0});  // edge 0 -> 1
    auto snapshot = cl;
    closure_update(cl, 0, 1);
    CHECK(cl == snapshot);
  }
}

TEST_CASE("fuzzed edge sequences keep mask equal to the closure oracle") {
  const int d = 6;
  RngKey key = make_key(51);
  for (int seq = 0; seq < 300; ++seq) {
    std::vector<uint32_t> adj(d, 0);
    std::vector<uint32_t> cl = closure_from_adjacency(adj);
    const RngKey seq_key = fold_in(key, seq);
    for (int step = 0; step < 12; ++step) {
      // legal additions under the incremental closure
      std::vector<std::pair<int, int>> legal;
      for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v) {
          if (u == v || (adj[u] >> v) & 1) continue;
          if ((cl[u] >> v) & 1) continue;
          legal.emplace_back(u, v);
        }
      // oracle: not present and acyclic after addition
      int oracle_count = 0;
      for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v) {
          if (u == v || (adj[u] >> v) & 1) continue;
          auto trial = adj;
          trial[u] |= 1u << v;
          if (is_acyclic(trial)) ++oracle_count;
        }
      CHECK(static_cast<int>(legal.size()) == oracle_count);
      if (legal.empty()) break;
      auto [u, v] = legal[random_range(fold_in(seq_key, step), static_cast<int>(legal.size()))];
      adj[u] |= 1u << v;
      closure_update(cl, u, v);
      CHECK(cl == closure_from_adjacency(adj));
    }
  }
}

TEST_CASE("dag enumeration counts") {
  CHECK(enumerate_dags(1).size() == 1);
  CHECK(enumerate_dags(2).size() == 3);
  CHECK(enumerate_dags(3).size() == 25);
  CHECK(enumerate_dags(4).size() == 543);
  CHECK_THROWS_AS(enumerate_dags(6), config_error);
}

TEST_CASE("er dataset generation") {
  SUBCASE("empty ground truth gives independent noise columns") {
    DagDataset data = generate_er_dataset(4, 0.0, 100000, make_key(52));
    for (uint32_t row : data.true_adj) CHECK(row == 0);
    for (int j = 0; j < 4; ++j) {
      double mean = 0.0, var = 0.0;
      for (int i = 0; i < data.n; ++i) mean += data.at(i, j);
      mean /= data.n;
      for (int i = 0; i < data.n; ++i) var += (data.at(i, j) - mean) * (data.at(i, j) - mean);
      var /= data.n;
      CHECK(std::fabs(var - 0.1) < 0.005);  // within 5 percent
      CHECK(std::fabs(mean) < 0.01);
    }
  }
  SUBCASE("expected in-degree is matched on average") {
    const int d = 5;
    double edges = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      DagDataset data = generate_er_dataset(d, 1.0, 1, fold_in(make_key(53), t));
      for (uint32_t row : data.true_adj) edges += __builtin_popcount(row);
    }
    CHECK(std::fabs(edges / trials / d - 1.0) < 0.05);  // mean parents per node
  }
  SUBCASE("fixed key reproduces the dataset") {
    DagDataset a = generate_er_dataset(5, 1.0, 50, make_key(54));
    DagDataset b = generate_er_dataset(5, 1.0, 50, make_key(54));
    CHECK(a.values == b.values);
    CHECK(a.true_adj == b.true_adj);
  }
  SUBCASE("file round trip") {
    DagDataset a = generate_er_dataset(4, 1.0, 20, make_key(55));
    save_dag_dataset(a, "/tmp/gfn_dag_test.csv", "/tmp/gfn_dag_test.json");
    DagDataset b = load_dag_dataset("/tmp/gfn_dag_test.csv", "/tmp/gfn_dag_test.json");
    CHECK(a.d == b.d);
    CHECK(a.n == b.n);
    CHECK(a.true_adj == b.true_adj);
    for (size_t i = 0; i < a.values.size(); ++i)
      CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-15));
    std::remove("/tmp/gfn_dag_test.csv");
    std::remove("/tmp/gfn_dag_test.json");
  }
}

TEST_CASE("linear-Gaussian marginal likelihood against an N-space evaluation") {
  DagDataset data = generate_er_dataset(4, 1.0, 20, make_key(56));
  auto cache = LocalScoreCache::lingauss(data);
  // direct evaluation: log N(y; 0, s2 I + w2 Phi Phi^T) with a dense N x N
  // covariance, per node and parent set
  const double s2 = 0.1, w2 = 1.0;
  const int n = data.n, d = data.d;
  for (int j = 0; j < d; ++j) {
    for (uint32_t mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << j)) continue;
      std::vector<double> cov(static_cast<size_t>(n) * n, 0.0);
      for (int r = 0; r < n; ++r) cov[static_cast<size_t>(r) * n + r] = s2;
      for (int u = 0; u < d; ++u) {
        if (!(mask & (1u << u))) continue;
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c)
            cov[static_cast<size_t>(r) * n + c] += w2 * data.at(r, u) * data.at(c, u);
      }
      // cholesky logdet + solve
      std::vector<double> l = cov;
      double logdet = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c <= i; ++c) {
          double acc = l[static_cast<size_t>(i) * n + c];
          for (int kk = 0; kk < c; ++kk)
            acc -= l[static_cast<size_t>(i) * n + kk] * l[static_cast<size_t>(c) * n + kk];
          if (i == c) {
            l[static_cast<size_t>(i) * n + c] = std::sqrt(acc);
            logdet += 2 * std::log(l[static_cast<size_t>(i) * n + c]);
          } else {
            l[static_cast<size_t>(i) * n + c] = acc / l[static_cast<size_t>(c) * n + c];
          }
        }
      }
      std::vector<double> y(n);
      for (int r = 0; r < n; ++r) y[r] = data.at(r, j);
      for (int i = 0; i < n; ++i) {
        double acc = y[i];
        for (int kk = 0; kk < i; ++kk) acc -= l[static_cast<size_t>(i) * n + kk] * y[kk];
        y[i] = acc / l[static_cast<size_t>(i) * n + i];
      }
      double quad = 0.0;
      for (int i = 0; i < n; ++i) quad += y[i] * y[i];
      const double direct = -0.5 * (n * std::log(2 * M_PI) + logdet + quad);
      CHECK(cache.local(j, mask) == doctest::Approx(direct).epsilon(1e-8));
    }
  }
}

TEST_CASE("lingauss no-parent marginal cross-checked by Monte Carlo") {
  // single observation, one parent: p(y) = E_w N(y; w x, s2)
  DagDataset data;
  data.d = 2;
  data.n = 1;
  data.values = {0.7, 0.4};  // x0 = 0.7, x1 = 0.4
  data.true_adj.assign(2, 0);
  data.true_weights.assign(4, 0.0);
  auto cache = LocalScoreCache::lingauss(data);
  // no parents: exact closed form
  const double direct = -0.5 * (std::log(2 * M_PI) + std::log(0.1) + 0.4 * 0.4 / 0.1);
  CHECK(cache.local(1, 0) == doctest::Approx(direct).epsilon(1e-12));
  // one parent: Monte-Carlo marginalization over w ~ N(0,1)
  auto w = random_normal(make_key(57), 1000000);
  double acc = 0.0, acc2 = 0.0;
  for (double wi : w) {
    const double diff = 0.4 - wi * 0.7;
    const double dens = std::exp(-0.5 * diff * diff / 0.1) / std::sqrt(2 * M_PI * 0.1);
    acc += dens;
    acc2 += dens * dens;
  }
  const double mc_mean = acc / w.size();
  const double mc_se = std::sqrt((acc2 / w.size() - mc_mean * mc_mean) / w.size());
  const double exact = std::exp(cache.local(1, 1u << 0));
  CHECK(std::fabs(exact - mc_mean) < 3 * mc_se);
}

TEST_CASE("bge no-parent marginal cross-checked by Monte Carlo") {
  DagDataset data;
  data.d = 2;
  data.n = 1;
  data.values = {0.9, -0.3};
  data.true_adj.assign(2, 0);
  data.true_weights.assign(4, 0.0);
  auto cache = LocalScoreCache::bge(data);
  // subset {0}: x ~ N(mu, 1/w), mu | w ~ N(0, 1/(alpha_mu w)), w ~ Gamma(dof/2, t/2)
  // with dof = alpha_w - d + 1 = 3 and t = T_{00} = 1.
  const RngKey key = make_key(58);
  const int n_mc = 1000000;
  auto normals = random_normal(key, 4 * n_mc);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    double chi2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double z = normals[4 * i + k];
      chi2 += z * z;
    }
    const double w = chi2;  // Gamma(3/2, 1/2)
    const double mu = normals[4 * i + 3] / std::sqrt(w);  // alpha_mu = 1
    const double diff = 0.9 - mu;
    const double dens = std::sqrt(w / (2 * M_PI)) * std::exp(-0.5 * w * diff * diff);
    acc += dens;
    acc2 += dens * dens;
  }
  const double mc_mean = acc / n_mc;
  const double mc_se = std::sqrt((acc2 / n_mc - mc_mean * mc_mean) / n_mc);
  const double exact = std::exp(cache.local(0, 0));
  CHECK(std::fabs(exact - mc_mean) < 3 * mc_se);
}

TEST_CASE("bge is score equivalent on Markov-equivalent structures") {
  DagDataset data = generate_er_dataset(3, 1.0, 30, make_key(59));
  auto cache = LocalScoreCache::bge(data);
  // chain 0 -> 1 -> 2, reversed chain, and the fork 1 -> 0, 1 -> 2 share a
  // skeleton with no v-structure
  const double chain = cache.local(0, 0) + cache.local(1, 1u << 0) + cache.local(2, 1u << 1);
  const double reversed =
      cache.local(2, 0) + cache.local(1, 1u << 2) + cache.local(0, 1u << 1);
  const double fork = cache.local(1, 0) + cache.local(0, 1u << 1) + cache.local(2, 1u << 1);
  CHECK(chain == doctest::Approx(reversed).epsilon(1e-8));
  CHECK(chain == doctest::Approx(fork).epsilon(1e-8));
  // two-node graphs 0 -> 1 and 1 -> 0
  DagDataset d2 = generate_er_dataset(2, 1.0, 25, make_key(60));
  auto c2 = LocalScoreCache::bge(d2);
  CHECK(c2.local(0, 0) + c2.local(1, 1) ==
        doctest::Approx(c2.local(1, 0) + c2.local(0, 2)).epsilon(1e-8));
}

TEST_CASE("delta scores") {
  DagDataset data = generate_er_dataset(5, 1.0, 40, make_key(61));
  auto cache = LocalScoreCache::lingauss(data);
  SUBCASE("adding then removing cancels") {
    CHECK(cache.delta(2, 0, 1) == doctest::Approx(-(cache.local(2, 0) - cache.local(2, 2))));
  }
  SUBCASE("delta equals a full recompute on random graphs") {
    RngKey key = make_key(62);
    for (int trial = 0; trial < 200; ++trial) {
      // random DAG by random topological order
      std::vector<uint32_t> adj(5, 0);
      const RngKey tk = fold_in(key, trial);
      for (int u = 0; u < 5; ++u)
        for (int v = 0; v < 5; ++v)
          if (u < v && uniform_scalar(fold_in(tk, u * 5 + v)) < 0.4) adj[u] |= 1u << v;
      // candidate new edge u2 -> v2 keeping acyclicity (upper triangular)
      const int u2 = random_range(fold_in(tk, 100), 4);
      const int v2 = u2 + 1 + random_range(fold_in(tk, 101), 4 - u2);
      if ((adj[u2] >> v2) & 1) continue;
      const double before = cache.graph_log_reward(adj);
      const double delta = cache.delta(v2, parents_of(adj, v2, 5), u2);
      auto adj2 = adj;
      adj2[u2] |= 1u << v2;
      CHECK(cache.graph_log_reward(adj2) ==
            doctest::Approx(before + delta).epsilon(1e-8));
    }
  }
  SUBCASE("delta ignores unrelated nodes") {
    const double base = cache.delta(3, 0, 1);
    CHECK(cache.delta(3, 1u << 0, 1) != doctest::Approx(base).epsilon(1e-12));  // related changes
    // augmenting node 4's parents does not touch node 3's delta
    CHECK(cache.delta(3, 0, 1) == base);
  }
}

TEST_CASE("dag environment contract") {
  DagDataset data = generate_er_dataset(3, 1.0, 30, make_key(63));
  auto p = make_params(data);
  DagEnv env;
  auto inst = env.reset_instance(p);
  std::vector<uint8_t> mask(env.num_actions(p));
  env.action_mask(inst, p, mask.data());
  int legal = 0;
  for (uint8_t m : mask) legal += m;
  CHECK(legal == 7);  // six edges plus stop
  SUBCASE("cycle-closing edges are masked") {
    env.step_instance(inst, DagEnv::edge_action(1, 2, 3), p);
    env.action_mask(inst, p, mask.data());
    CHECK(mask[DagEnv::edge_action(2, 1, 3)] == 0);
    env.step_instance(inst, DagEnv::edge_action(2, 0, 3), p);
    env.action_mask(inst, p, mask.data());
    CHECK(mask[DagEnv::edge_action(0, 1, 3)] == 0);  // would close 1->2->0->1
    CHECK(mask[DagEnv::edge_action(0, 2, 3)] == 0);
    CHECK(mask[env.stop_action(p)] == 1);
  }
  SUBCASE("stop yields the modular log reward") {
    env.step_instance(inst, DagEnv::edge_action(0, 1, 3), p);
    const double lr = env.step_instance(inst, env.stop_action(p), p);
    CHECK(inst.is_terminal);
    CHECK(lr == doctest::Approx(p.score->graph_log_reward(inst.adj)).epsilon(1e-12));
  }
  SUBCASE("round trips with closure recomputation") {
    RngKey key = make_key(64);
    DagEnv::Instance cur = env.reset_instance(p);
    for (int step = 0; step < 1500; ++step) {
      if (cur.is_terminal) cur = env.reset_instance(p);
      env.action_mask(cur, p, mask.data());
      std::vector<double> w(mask.begin(), mask.end());
      const int a = categorical(fold_in(key, step), w.data(), static_cast<int>(w.size()));
      DagEnv::Instance prev = cur;
      env.step_instance(cur, a, p);
      const int bwd = env.get_backward_action(prev, a, cur, p);
      DagEnv::Instance undone = cur;
      env.backward_step_instance(undone, bwd, p);
      CHECK(undone == prev);
      CHECK(env.get_forward_action(prev, bwd, cur, p) == a);
    }
  }
}

TEST_CASE("exact posterior and feature marginals") {
  DagDataset data = generate_er_dataset(3, 1.0, 40, make_key(65));
  auto cache = LocalScoreCache::lingauss(data);
  auto posterior = dag_exact_posterior(cache);
  CHECK(posterior.size() == 25);
  double total = 0.0;
  for (double q : posterior.probs) total += q;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(jsd(posterior, posterior) == doctest::Approx(0.0).epsilon(1e-14));

  SUBCASE("point-mass marginals") {
    ExactDistribution point;
    point.add(dag_key({2u, 0u, 0u}, 3), 1.0);  // single edge 0 -> 1
    Tensor edge = feature_marginals(point, 3, DagFeature::kEdge);
    CHECK(edge(0, 1) == 1.0);
    CHECK(edge(1, 0) == 0.0);
    ExactDistribution chain;
    chain.add(dag_key({2u, 4u, 0u}, 3), 1.0);  // 0 -> 1 -> 2
    Tensor path = feature_marginals(chain, 3, DagFeature::kPath);
    CHECK(path(0, 2) == 1.0);
    CHECK(path(2, 0) == 0.0);
    ExactDistribution copar;
    copar.add(dag_key({4u, 4u, 0u}, 3), 1.0);  // 0 -> 2 and 1 -> 2
    Tensor mb = feature_marginals(copar, 3, DagFeature::kMarkovBlanket);
    CHECK(mb(0, 1) == 1.0);  // co-parents are in each other's blanket
    CHECK(mb(0, 2) == 1.0);
  }
}

TEST_CASE("modularity: assembled rewards match stop rewards along rollouts") {
  DagDataset data = generate_er_dataset(3, 1.0, 25, make_key(66));
  auto p = make_params(data, "bge");
  DagEnv env;
  MlpParams policy = mlp_init(env.obs_dim(p), {16}, env.num_actions(p),
                              env.num_backward_actions(p), make_key(67));
  RolloutOptions opt;
  opt.record_delta_log_reward = true;
  auto batch = forward_rollout(env, p, policy, 16, make_key(68), 0.5, opt);
  for (int b = 0; b < batch.num_traj; ++b) {
    // deltas telescope to the final reward minus the empty-graph reward
    double acc = p.score->graph_log_reward(std::vector<uint32_t>(3, 0));
    for (int t = 0; t + 1 < batch.lengths[b]; ++t)
      acc += batch.delta_log_reward[batch.step_index(b, t)];
    CHECK(acc == doctest::Approx(batch.log_rewards[b]).epsilon(1e-8));
  }
}
