#include "gfn/envs/dag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gfn/errors.hpp"

namespace gfn {

namespace {

// Dense Cholesky for the tiny SPD systems in the score computations.
// Returns log-determinant; chol is lower-triangular in place.
double cholesky_logdet(std::vector<double>& a, int n) {
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<size_t>(i) * n + k] * a[static_cast<size_t>(j) * n + k];
      if (i == j) {
        if (!(s > 0.0)) throw numeric_error("cholesky: matrix not positive definite");
        a[static_cast<size_t>(i) * n + j] = std::sqrt(s);
        logdet += 2.0 * std::log(a[static_cast<size_t>(i) * n + j]);
      } else {
        a[static_cast<size_t>(i) * n + j] = s / a[static_cast<size_t>(j) * n + j];
      }
    }
  }
  return logdet;
}

// Solve L L^T x = b with L from cholesky_logdet.
std::vector<double> cholesky_solve(const std::vector<double>& l, int n,
                                   std::vector<double> b) {
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l[static_cast<size_t>(i) * n + k] * b[k];
    b[i] = s / l[static_cast<size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= l[static_cast<size_t>(k) * n + i] * b[k];
    b[i] = s / l[static_cast<size_t>(i) * n + i];
  }
  return b;
}

double log_multivariate_gamma(int ell, double a) {
  double v = 0.25 * ell * (ell - 1) * std::log(M_PI);
  for (int i = 1; i <= ell; ++i) v += std::lgamma(a + 0.5 * (1.0 - i));
  return v;
}

std::vector<int> mask_members(uint32_t mask, int d) {
  std::vector<int> out;
  for (int i = 0; i < d; ++i)
    if (mask & (1u << i)) out.push_back(i);
  return out;
}

}  // namespace

DagDataset generate_er_dataset(int d, double expected_in_degree, int n, const RngKey& key) {
  if (d < 1) throw config_error("er dataset: d must be >= 1");
  if (n < 1) throw config_error("er dataset: n must be >= 1");
  if (expected_in_degree < 0.0) throw config_error("er dataset: negative in-degree");
  DagDataset data;
  data.d = d;
  data.n = n;
  data.true_adj.assign(d, 0);
  data.true_weights.assign(static_cast<size_t>(d) * d, 0.0);

  // Uniform topological order.
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  for (int i = d - 1; i > 0; --i) {
    const int j = random_range(fold_in(key, 1000 + i), i + 1);
    std::swap(order[i], order[j]);
  }
  const double p = d > 1 ? std::min(1.0, 2.0 * expected_in_degree / (d - 1)) : 0.0;
  uint64_t draw = 0;
  const RngKey edge_key = fold_in(key, 1);
  const RngKey weight_key = fold_in(key, 2);
  auto weights = random_normal(weight_key, static_cast<size_t>(d) * d);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const int u = order[i], v = order[j];
      if (uniform_scalar(fold_in(edge_key, draw++)) < p) {
        data.true_adj[u] |= 1u << v;
        data.true_weights[static_cast<size_t>(u) * d + v] =
            weights[static_cast<size_t>(u) * d + v];
      }
    }
  }
  // Ancestral sampling in topological order.
  const double noise_sd = std::sqrt(data.noise_var);
  auto eps = random_normal(fold_in(key, 3), static_cast<size_t>(n) * d);
  data.values.assign(static_cast<size_t>(n) * d, 0.0);
  for (int row = 0; row < n; ++row) {
    for (int pos = 0; pos < d; ++pos) {
      const int j = order[pos];
      double mean = 0.0;
      for (int u = 0; u < d; ++u)
        if (data.true_adj[u] & (1u << j))
          mean += data.true_weights[static_cast<size_t>(u) * d + j] *
                  data.values[static_cast<size_t>(row) * d + u];
      data.values[static_cast<size_t>(row) * d + j] =
          mean + noise_sd * eps[static_cast<size_t>(row) * d + j];
    }
  }
  return data;
}

void save_dag_dataset(const DagDataset& data, const std::string& csv_path,
                      const std::string& meta_path) {
  std::ofstream os(csv_path);
  if (!os) throw config_error("dag dataset: cannot write " + csv_path);
  for (int j = 0; j < data.d; ++j) os << (j ? "," : "") << "x" << j;
  os << "\n";
  char buf[64];
  for (int i = 0; i < data.n; ++i) {
    for (int j = 0; j < data.d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.at(i, j));
      os << (j ? "," : "") << buf;
    }
    os << "\n";
  }
  nlohmann::json meta;
  meta["d"] = data.d;
  meta["n"] = data.n;
  meta["noise_var"] = data.noise_var;
  meta["seed"] = data.seed;
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < data.d; ++u)
    for (int v = 0; v < data.d; ++v)
      if (data.true_adj[u] & (1u << v)) edges.emplace_back(u, v);
  meta["true_edges"] = edges;
  meta["true_weights"] = data.true_weights;
  std::ofstream ms(meta_path);
  if (!ms) throw config_error("dag dataset: cannot write " + meta_path);
  ms << meta.dump(2) << "\n";
}

DagDataset load_dag_dataset(const std::string& csv_path, const std::string& meta_path) {
  std::ifstream ms(meta_path);
  if (!ms) throw config_error("dag dataset: cannot open " + meta_path);
  nlohmann::json meta = nlohmann::json::parse(ms);
  DagDataset data;
  data.d = meta.at("d").get<int>();
  data.n = meta.at("n").get<int>();
  data.noise_var = meta.at("noise_var").get<double>();
  data.seed = meta.at("seed").get<uint64_t>();
  data.true_adj.assign(data.d, 0);
  for (const auto& e : meta.at("true_edges"))
    data.true_adj[e[0].get<int>()] |= 1u << e[1].get<int>();
  data.true_weights = meta.at("true_weights").get<std::vector<double>>();

  std::ifstream is(csv_path);
  if (!is) throw config_error("dag dataset: cannot open " + csv_path);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t pos = 0;
    for (int j = 0; j < data.d; ++j) {
      size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      data.values.push_back(std::stod(line.substr(pos, next - pos)));
      pos = next + 1;
    }
  }
  if (static_cast<int>(data.values.size()) != data.n * data.d)
    throw config_error("dag dataset: row count mismatch");
  return data;
}

LocalScoreCache LocalScoreCache::lingauss(const DagDataset& data, const LinGaussConfig& cfg) {
  const int d = data.d;
  if (d > 16) throw config_error("score cache: d exceeds cache cap (16)");
  if (!(cfg.noise_var > 0.0) || !(cfg.weight_var > 0.0))
    throw config_error("score cache: variances must be positive");
  LocalScoreCache cache;
  cache.d_ = d;
  cache.scores_.assign(d, std::vector<double>(1u << d, 0.0));

  // Sufficient statistics: Gram = X^T X, column dot products.
  std::vector<double> gram(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < data.n; ++i)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b <= a; ++b) {
        const double v = data.at(i, a) * data.at(i, b);
        gram[static_cast<size_t>(a) * d + b] += v;
        if (a != b) gram[static_cast<size_t>(b) * d + a] += v;
      }
  const double s2 = cfg.noise_var, w2 = cfg.weight_var;
  const double n = static_cast<double>(data.n);
  for (int j = 0; j < d; ++j) {
    const double yy = gram[static_cast<size_t>(j) * d + j];
    for (uint32_t mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << j)) continue;
      const auto pa = mask_members(mask, d);
      const int p = static_cast<int>(pa.size());
      // log N(y; 0, s2 I + w2 Phi Phi^T) via the p x p system
      // B = I/w2 + Gram_pa/s2.
      double quad = yy / s2;
      double logdet = n * std::log(s2);
      if (p > 0) {
        std::vector<double> b(static_cast<size_t>(p) * p, 0.0);
        std::vector<double> v(p, 0.0);
        for (int a = 0; a < p; ++a) {
          v[a] = gram[static_cast<size_t>(pa[a]) * d + j];
          for (int c = 0; c < p; ++c)
            b[static_cast<size_t>(a) * p + c] =
                gram[static_cast<size_t>(pa[a]) * d + pa[c]] / s2 + (a == c ? 1.0 / w2 : 0.0);
        }
        const double logdet_b = cholesky_logdet(b, p);
        const auto x = cholesky_solve(b, p, v);
        double vx = 0.0;
        for (int a = 0; a < p; ++a) vx += v[a] * x[a];
        quad -= vx / (s2 * s2);
        logdet += p * std::log(w2) + logdet_b;
      }
      cache.scores_[j][mask] = -0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
    }
  }
  return cache;
}

LocalScoreCache LocalScoreCache::bge(const DagDataset& data, const BgeConfig& cfg) {
  const int d = data.d;
  if (d > 16) throw config_error("score cache: d exceeds cache cap (16)");
  const double alpha_mu = cfg.alpha_mu;
  const double alpha_w = cfg.alpha_w > 0.0 ? cfg.alpha_w : d + 2.0;
  if (!(alpha_mu > 0.0)) throw config_error("bge: alpha_mu must be positive");
  if (!(alpha_w > d - 1)) throw config_error("bge: alpha_w must exceed d - 1");
  const double n = static_cast<double>(data.n);

  // R = T + S_N + (n alpha_mu / (n + alpha_mu)) xbar xbar^T with T = I, nu = 0.
  std::vector<double> xbar(d, 0.0);
  for (int i = 0; i < data.n; ++i)
    for (int a = 0; a < d; ++a) xbar[a] += data.at(i, a);
  for (int a = 0; a < d; ++a) xbar[a] /= n;
  std::vector<double> r(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < data.n; ++i)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        r[static_cast<size_t>(a) * d + b] +=
            (data.at(i, a) - xbar[a]) * (data.at(i, b) - xbar[b]);
  const double shrink = n * alpha_mu / (n + alpha_mu);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) r[static_cast<size_t>(a) * d + b] += shrink * xbar[a] * xbar[b];
    r[static_cast<size_t>(a) * d + a] += 1.0;  // T = I
  }

  // log |R_Y| for every subset Y.
  std::vector<double> logdet_r(1u << d, 0.0);
  for (uint32_t mask = 1; mask < (1u << d); ++mask) {
    const auto mem = mask_members(mask, d);
    const int ell = static_cast<int>(mem.size());
    std::vector<double> sub(static_cast<size_t>(ell) * ell);
    for (int a = 0; a < ell; ++a)
      for (int b = 0; b < ell; ++b)
        sub[static_cast<size_t>(a) * ell + b] = r[static_cast<size_t>(mem[a]) * d + mem[b]];
    logdet_r[mask] = cholesky_logdet(sub, ell);
  }

  // log p(d_Y); T = I so the |T_Y| term vanishes.
  auto log_subset_ml = [&](uint32_t mask) {
    const int ell = __builtin_popcount(mask);
    if (ell == 0) return 0.0;
    const double dof = alpha_w - d + ell;
    double v = -0.5 * n * ell * std::log(M_PI);
    v += 0.5 * ell * std::log(alpha_mu / (n + alpha_mu));
    v += log_multivariate_gamma(ell, 0.5 * (n + dof));
    v -= log_multivariate_gamma(ell, 0.5 * dof);
    v -= 0.5 * (n + dof) * logdet_r[mask];
    return v;
  };
  std::vector<double> subset_ml(1u << d, 0.0);
  for (uint32_t mask = 1; mask < (1u << d); ++mask) subset_ml[mask] = log_subset_ml(mask);

  LocalScoreCache cache;
  cache.d_ = d;
  cache.scores_.assign(d, std::vector<double>(1u << d, 0.0));
  for (int j = 0; j < d; ++j)
    for (uint32_t mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << j)) continue;
      cache.scores_[j][mask] = subset_ml[mask | (1u << j)] - subset_ml[mask];
    }
  return cache;
}

double LocalScoreCache::local(int j, uint32_t parent_mask) const {
  if (j < 0 || j >= d_) throw contract_violation("score cache: node out of range");
  if (parent_mask & (1u << j)) throw contract_violation("score cache: node in own parent set");
  if (parent_mask >= (1u << d_)) throw contract_violation("score cache: bad parent mask");
  return scores_[j][parent_mask];
}

double LocalScoreCache::delta(int j, uint32_t parent_mask, int new_parent) const {
  if (parent_mask & (1u << new_parent))
    throw contract_violation("score cache: parent already present");
  return local(j, parent_mask | (1u << new_parent)) - local(j, parent_mask);
}

double LocalScoreCache::graph_log_reward(const std::vector<uint32_t>& adj) const {
  double acc = 0.0;
  for (int j = 0; j < d_; ++j) {
    uint32_t parents = 0;
    for (int u = 0; u < d_; ++u)
      if (adj[u] & (1u << j)) parents |= 1u << u;
    acc += scores_[j][parents];
  }
  return acc;
}

void closure_update(std::vector<uint32_t>& closure_t, int u, int v) {
  const int d = static_cast<int>(closure_t.size());
  const uint32_t row_u = closure_t[u];
  for (int a = 0; a < d; ++a)
    if (closure_t[a] & (1u << v)) closure_t[a] |= row_u;
}

std::vector<uint32_t> closure_from_adjacency(const std::vector<uint32_t>& adj) {
  const int d = static_cast<int>(adj.size());
  std::vector<uint32_t> cl(d);
  // Reflexive transpose reachability: cl[a] bit b = path a ~> b in G^T.
  for (int a = 0; a < d; ++a) {
    cl[a] = 1u << a;
    for (int b = 0; b < d; ++b)
      if (adj[b] & (1u << a)) cl[a] |= 1u << b;
  }
  for (int k = 0; k < d; ++k)
    for (int a = 0; a < d; ++a)
      if (cl[a] & (1u << k)) cl[a] |= cl[k];
  return cl;
}

bool is_acyclic(const std::vector<uint32_t>& adj) {
  const int d = static_cast<int>(adj.size());
  std::vector<int> indeg(d, 0);
  for (int u = 0; u < d; ++u)
    for (int v = 0; v < d; ++v)
      if (adj[u] & (1u << v)) ++indeg[v];
  std::vector<int> stack;
  for (int v = 0; v < d; ++v)
    if (indeg[v] == 0) stack.push_back(v);
  int seen = 0;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    ++seen;
    for (int v = 0; v < d; ++v)
      if (adj[u] & (1u << v))
        if (--indeg[v] == 0) stack.push_back(v);
  }
  return seen == d;
}

void DagEnv::validate(const Params& p) {
  if (p.d < 1 || p.d > 16) throw config_error("dag env: d must lie in [1, 16]");
  if (!p.score) throw config_error("dag env: missing score cache");
  if (p.score->dim() != p.d) throw config_error("dag env: score cache dimension mismatch");
}

int DagEnv::edge_action(int u, int v, int d) {
  if (u == v || u < 0 || v < 0 || u >= d || v >= d)
    throw contract_violation("dag: bad edge indices");
  return u * (d - 1) + (v < u ? v : v - 1);
}

std::pair<int, int> DagEnv::edge_from_action(int action, int d) {
  const int u = action / (d - 1);
  const int r = action % (d - 1);
  return {u, r < u ? r : r + 1};
}

DagEnv::Instance DagEnv::reset_instance(const Params& p) const {
  validate(p);
  Instance inst;
  inst.adj.assign(p.d, 0);
  inst.closure_t.assign(p.d, 0);
  for (int a = 0; a < p.d; ++a) inst.closure_t[a] = 1u << a;
  return inst;
}

double DagEnv::step_instance(Instance& inst, int action, const Params& p) const {
  inst.step_count += 1;
  if (action == stop_action(p)) {
    inst.is_terminal = true;
    return state_log_reward(inst, p);
  }
  const auto [u, v] = edge_from_action(action, p.d);
  inst.adj[u] |= 1u << v;
  closure_update(inst.closure_t, u, v);
  inst.num_edges += 1;
  return 0.0;
}

void DagEnv::backward_step_instance(Instance& inst, int bwd_action, const Params& p) const {
  inst.step_count -= 1;
  if (bwd_action == stop_action(p)) {
    inst.is_terminal = false;
    return;
  }
  const auto [u, v] = edge_from_action(bwd_action, p.d);
  inst.adj[u] &= ~(1u << v);
  inst.closure_t = closure_from_adjacency(inst.adj);
  inst.num_edges -= 1;
}

void DagEnv::action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int n = num_actions(p);
  std::fill(out, out + n, 0);
  if (inst.is_terminal) return;
  for (int u = 0; u < p.d; ++u)
    for (int v = 0; v < p.d; ++v) {
      if (u == v) continue;
      const bool present = inst.adj[u] & (1u << v);
      const bool cycle = inst.closure_t[u] & (1u << v);  // v already reaches u
      if (!present && !cycle) out[edge_action(u, v, p.d)] = 1;
    }
  out[stop_action(p)] = 1;
}

void DagEnv::backward_action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int n = num_backward_actions(p);
  std::fill(out, out + n, 0);
  if (inst.is_terminal) {
    out[stop_action(p)] = 1;  // un-stop
    return;
  }
  for (int u = 0; u < p.d; ++u)
    for (int v = 0; v < p.d; ++v)
      if (u != v && (inst.adj[u] & (1u << v))) out[edge_action(u, v, p.d)] = 1;
}

int DagEnv::get_backward_action(const Instance& prev, int action, const Instance& next,
                                const Params& p) const {
  if (action == stop_action(p)) {
    if (!next.is_terminal || prev.adj != next.adj)
      throw contract_violation("dag: inconsistent stop transition");
    return stop_action(p);
  }
  const auto [u, v] = edge_from_action(action, p.d);
  if (!(next.adj[u] & (1u << v))) throw contract_violation("dag: inconsistent edge transition");
  return action;
}

int DagEnv::get_forward_action(const Instance&, int bwd_action, const Instance&,
                               const Params&) const {
  return bwd_action;  // removals and un-stop mirror additions and stop
}

void DagEnv::encode_obs(const Instance& inst, const Params& p, double* out) const {
  for (int u = 0; u < p.d; ++u)
    for (int v = 0; v < p.d; ++v)
      out[static_cast<size_t>(u) * p.d + v] = (inst.adj[u] & (1u << v)) ? 1.0 : 0.0;
}

std::string DagEnv::encode_state(const Instance& inst, const Params& p) const {
  std::string s = dag_key(inst.adj, p.d);
  if (inst.is_terminal) s += "|T";
  return s;
}

std::string DagEnv::encode_terminal(const Instance& inst, const Params& p) const {
  return dag_key(inst.adj, p.d);
}

double DagEnv::state_log_reward(const Instance& inst, const Params& p) const {
  return p.score->graph_log_reward(inst.adj);
}

std::vector<std::vector<uint32_t>> enumerate_dags(int d) {
  if (d < 1 || d > 5) throw config_error("enumerate_dags: d must lie in [1, 5]");
  const int slots = d * (d - 1);
  std::vector<std::vector<uint32_t>> out;
  std::vector<std::pair<int, int>> slot_edges;
  for (int u = 0; u < d; ++u)
    for (int v = 0; v < d; ++v)
      if (u != v) slot_edges.emplace_back(u, v);
  for (uint64_t bits = 0; bits < (1ull << slots); ++bits) {
    std::vector<uint32_t> adj(d, 0);
    for (int s = 0; s < slots; ++s)
      if (bits & (1ull << s)) adj[slot_edges[s].first] |= 1u << slot_edges[s].second;
    if (is_acyclic(adj)) out.push_back(std::move(adj));
  }
  return out;
}

ExactDistribution dag_exact_posterior(const LocalScoreCache& cache) {
  const int d = cache.dim();
  auto dags = enumerate_dags(d);
  std::vector<double> log_scores(dags.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < dags.size(); ++i) {
    log_scores[i] = cache.graph_log_reward(dags[i]);
    hi = std::max(hi, log_scores[i]);
  }
  ExactDistribution dist;
  for (size_t i = 0; i < dags.size(); ++i)
    dist.add(dag_key(dags[i], d), std::exp(log_scores[i] - hi));
  dist.normalize();
  return dist;
}

std::string dag_key(const std::vector<uint32_t>& adj, int d) {
  std::string s;
  s.reserve(static_cast<size_t>(d) * d);
  for (int u = 0; u < d; ++u)
    for (int v = 0; v < d; ++v) s += (adj[u] & (1u << v)) ? '1' : '0';
  return s;
}

std::vector<uint32_t> dag_from_key(const std::string& key, int d) {
  if (static_cast<int>(key.size()) != d * d) throw contract_violation("dag_from_key: bad key");
  std::vector<uint32_t> adj(d, 0);
  for (int u = 0; u < d; ++u)
    for (int v = 0; v < d; ++v)
      if (key[static_cast<size_t>(u) * d + v] == '1') adj[u] |= 1u << v;
  return adj;
}

Tensor feature_marginals(const ExactDistribution& posterior, int d, DagFeature kind) {
  Tensor out({d, d});
  for (size_t g = 0; g < posterior.keys.size(); ++g) {
    const auto adj = dag_from_key(posterior.keys[g], d);
    const double pg = posterior.probs[g];
    std::vector<uint32_t> reach;
    if (kind == DagFeature::kPath) reach = closure_from_adjacency(adj);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        if (i == j) continue;
        bool hit = false;
        switch (kind) {
          case DagFeature::kEdge:
            hit = adj[i] & (1u << j);
            break;
          case DagFeature::kPath:
            // reach[a] bit b = path a ~> b in G^T = path b ~> a in G
            hit = (reach[j] & (1u << i)) && i != j;
            break;
          case DagFeature::kMarkovBlanket: {
            const bool parent = adj[i] & (1u << j);
            const bool child = adj[j] & (1u << i);
            bool coparent = false;
            for (int k = 0; k < d && !coparent; ++k)
              if (k != i && k != j && (adj[i] & (1u << k)) && (adj[j] & (1u << k)))
                coparent = true;
            hit = parent || child || coparent;
            break;
          }
        }
        if (hit) out(i, j) += pg;
      }
  }
  return out;
}

}  // namespace gfn
