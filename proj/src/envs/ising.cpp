#include "gfn/envs/ising.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gfn/errors.hpp"
#include "gfn/objectives.hpp"

namespace gfn {

IsingCoupling toroidal_coupling(int side, double sigma) {
  if (side < 2) throw config_error("ising: lattice side must be >= 2");
  IsingCoupling c;
  c.side = side;
  const int d = side * side;
  c.j.assign(static_cast<size_t>(d) * d, 0.0);
  auto site = [side](int r, int col) { return ((r + side) % side) * side + (col + side) % side; };
  for (int r = 0; r < side; ++r)
    for (int col = 0; col < side; ++col) {
      const int a = site(r, col);
      for (const auto& [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int b = site(r + dr, col + dc);
        if (a != b) c.at(a, b) = sigma;
      }
    }
  return c;
}

IsingCoupling zero_coupling(int side) {
  IsingCoupling c;
  c.side = side;
  c.j.assign(static_cast<size_t>(side) * side * side * side, 0.0);
  return c;
}

double ising_energy(const std::vector<int8_t>& spins, const IsingCoupling& j) {
  const int d = j.dim();
  if (static_cast<int>(spins.size()) != d) throw contract_violation("ising_energy: size mismatch");
  double quad = 0.0;
  for (int a = 0; a < d; ++a) {
    if (spins[a] == 0) throw contract_violation("ising_energy: incomplete configuration");
    double row = 0.0;
    for (int b = 0; b < d; ++b) row += j.at(a, b) * spins[b];
    quad += spins[a] * row;
  }
  return -quad;
}

void IsingEnv::validate(const Params& p) {
  if (!p.coupling) throw config_error("ising env: missing coupling");
  if (p.coupling->side < 2) throw config_error("ising env: lattice side must be >= 2");
  const int d = p.coupling->dim();
  for (int a = 0; a < d; ++a) {
    if (p.coupling->at(a, a) != 0.0) throw config_error("ising env: nonzero diagonal");
    for (int b = 0; b < a; ++b)
      if (p.coupling->at(a, b) != p.coupling->at(b, a))
        throw config_error("ising env: coupling must be symmetric");
  }
}

IsingEnv::Instance IsingEnv::reset_instance(const Params& p) const {
  validate(p);
  Instance inst;
  inst.spins.assign(p.coupling->dim(), 0);
  return inst;
}

double IsingEnv::step_instance(Instance& inst, int action, const Params& p) const {
  const int site = action / 2;
  inst.spins[site] = (action & 1) ? 1 : -1;
  inst.assigned += 1;
  inst.step_count += 1;
  if (inst.assigned == p.coupling->dim()) {
    inst.is_terminal = true;
    return log_reward_of(inst, p);
  }
  return 0.0;
}

void IsingEnv::backward_step_instance(Instance& inst, int bwd_action, const Params&) const {
  inst.spins[bwd_action] = 0;
  inst.assigned -= 1;
  inst.step_count -= 1;
  inst.is_terminal = false;
}

void IsingEnv::action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int d = p.coupling->dim();
  if (inst.is_terminal) {
    std::fill(out, out + 2 * d, 0);
    return;
  }
  for (int site = 0; site < d; ++site) {
    const uint8_t free = inst.spins[site] == 0 ? 1 : 0;
    out[2 * site] = free;
    out[2 * site + 1] = free;
  }
}

void IsingEnv::backward_action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int d = p.coupling->dim();
  for (int site = 0; site < d; ++site) out[site] = inst.spins[site] != 0 ? 1 : 0;
}

int IsingEnv::get_backward_action(const Instance& prev, int action, const Instance& next,
                                  const Params&) const {
  const int site = action / 2;
  if (prev.spins[site] != 0 || next.spins[site] == 0)
    throw contract_violation("ising: inconsistent assignment transition");
  return site;
}

int IsingEnv::get_forward_action(const Instance&, int bwd_action, const Instance& next,
                                 const Params&) const {
  return 2 * bwd_action + (next.spins[bwd_action] > 0 ? 1 : 0);
}

void IsingEnv::encode_obs(const Instance& inst, const Params& p, double* out) const {
  const int d = p.coupling->dim();
  std::fill(out, out + 3 * d, 0.0);
  for (int site = 0; site < d; ++site) {
    const int v = inst.spins[site] == 0 ? 2 : (inst.spins[site] > 0 ? 1 : 0);
    out[3 * site + v] = 1.0;
  }
}

std::string IsingEnv::encode_state(const Instance& inst, const Params&) const {
  std::string s;
  s.reserve(inst.spins.size());
  for (int8_t v : inst.spins) s += v == 0 ? '.' : (v > 0 ? '+' : '-');
  return s;
}

std::string IsingEnv::encode_terminal(const Instance& inst, const Params& p) const {
  if (!inst.is_terminal) throw contract_violation("ising: encode_terminal on live state");
  return encode_state(inst, p);
}

double IsingEnv::log_reward_of(const Instance& inst, const Params& p) const {
  return -ising_energy(inst.spins, *p.coupling);
}

IsingEnv::Instance IsingEnv::terminal_from_spins(const std::vector<int8_t>& spins,
                                                 const Params& p) const {
  Instance inst = reset_instance(p);
  if (spins.size() != inst.spins.size())
    throw contract_violation("ising: terminal spin count mismatch");
  for (int8_t v : spins)
    if (v != 1 && v != -1) throw contract_violation("ising: incomplete terminal spins");
  inst.spins = spins;
  inst.assigned = p.coupling->dim();
  inst.step_count = inst.assigned;
  inst.is_terminal = true;
  return inst;
}

double heat_bath_prob_up(const std::vector<int8_t>& spins, int site, const IsingCoupling& j,
                         double beta) {
  const int d = j.dim();
  double h = 0.0;
  for (int b = 0; b < d; ++b)
    if (b != site) h += j.at(site, b) * spins[b];
  return 1.0 / (1.0 + std::exp(-4.0 * beta * h));
}

namespace {

void gibbs_sweep(std::vector<int8_t>& spins, const IsingCoupling& j, double beta,
                 const RngKey& key) {
  const int d = j.dim();
  for (int site = 0; site < d; ++site) {
    const double p_up = heat_bath_prob_up(spins, site, j, beta);
    spins[site] = uniform_scalar(fold_in(key, site)) < p_up ? 1 : -1;
  }
}

}  // namespace

std::vector<std::vector<int8_t>> gibbs_data_sampler(const IsingCoupling& j, const RngKey& key,
                                                    int64_t n_samples, const GibbsConfig& cfg) {
  const int d = j.dim();
  if (cfg.num_chains < 1) throw config_error("gibbs: need at least one chain");
  const int chains = cfg.num_chains;
  std::vector<double> betas(chains, 1.0);
  for (int c = 1; c < chains; ++c) {
    const double frac = static_cast<double>(c) / (chains - 1);
    betas[c] = std::exp(std::log(1.0) + frac * (std::log(cfg.hottest_beta)));
  }
  std::vector<std::vector<int8_t>> state(chains, std::vector<int8_t>(d));
  for (int c = 0; c < chains; ++c) {
    auto u = random_uniform(fold_in(fold_in(key, 7777), c), d);
    for (int a = 0; a < d; ++a) state[c][a] = u[a] < 0.5 ? -1 : 1;
  }
  std::vector<std::vector<int8_t>> out;
  out.reserve(n_samples);
  int64_t sweep = 0;
  while (static_cast<int64_t>(out.size()) < n_samples) {
    const RngKey sweep_key = fold_in(key, sweep);
    for (int c = 0; c < chains; ++c)
      gibbs_sweep(state[c], j, betas[c], fold_in(sweep_key, c));
    if (chains > 1) {
      // swap adjacent temperatures, alternating parity between sweeps
      for (int c = static_cast<int>(sweep % 2); c + 1 < chains; c += 2) {
        const double e_lo = ising_energy(state[c], j);
        const double e_hi = ising_energy(state[c + 1], j);
        const double log_a = (betas[c] - betas[c + 1]) * (e_lo - e_hi);
        if (std::log(uniform_scalar(fold_in(fold_in(sweep_key, 999), c))) < log_a)
          std::swap(state[c], state[c + 1]);
      }
    }
    ++sweep;
    if (sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thinning == 0)
      out.push_back(state[0]);
  }
  return out;
}

std::vector<double> cd_gradient(const std::vector<std::vector<int8_t>>& data_batch,
                                const std::vector<std::vector<int8_t>>& proposal_batch,
                                const IsingCoupling& j) {
  if (data_batch.size() != proposal_batch.size() || data_batch.empty())
    throw contract_violation("cd_gradient: batch size mismatch");
  const int d = j.dim();
  std::vector<double> grad(static_cast<size_t>(d) * d, 0.0);
  const double scale = 1.0 / static_cast<double>(data_batch.size());
  for (size_t i = 0; i < data_batch.size(); ++i) {
    const auto& x = data_batch[i];
    const auto& y = proposal_batch[i];
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        if (a == b) continue;
        // grad_J E(x) = -x x^T
        grad[static_cast<size_t>(a) * d + b] +=
            scale * (-static_cast<double>(x[a]) * x[b] + static_cast<double>(y[a]) * y[b]);
      }
  }
  // symmetrize
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < a; ++b) {
      const double m = 0.5 * (grad[static_cast<size_t>(a) * d + b] +
                              grad[static_cast<size_t>(b) * d + a]);
      grad[static_cast<size_t>(a) * d + b] = m;
      grad[static_cast<size_t>(b) * d + a] = m;
    }
  return grad;
}

std::vector<BackAndForthResult> back_and_forth_batch(
    const IsingEnv& env, const IsingEnv::Params& p, const MlpParams& policy,
    bool learned_backward, const std::vector<std::vector<int8_t>>& xs, int k,
    const RngKey& key) {
  const int d = p.coupling->dim();
  if (k < 0 || k > d) throw config_error("back_and_forth: k must lie in [0, D]");
  const int batch = static_cast<int>(xs.size());
  std::vector<BackAndForthResult> out(batch);
  for (int b = 0; b < batch; ++b) out[b].proposal = xs[b];
  if (k == 0) return out;

  using Inst = IsingEnv::Instance;
  std::vector<Inst> cur(batch);
  for (int b = 0; b < batch; ++b) cur[b] = env.terminal_from_spins(xs[b], p);

  const int a_count = env.num_actions(p);
  const int ab = env.num_backward_actions(p);
  const int od = env.obs_dim(p);
  Tensor obs({batch, od});
  std::vector<uint8_t> fmask(static_cast<size_t>(batch) * a_count);
  std::vector<uint8_t> bmask(static_cast<size_t>(batch) * ab);
  auto eval_heads = [&](bool need) -> PolicyHeads {
    if (!need) return {};
    for (int b = 0; b < batch; ++b)
      env.encode_obs(cur[b], p, obs.data.data() + static_cast<size_t>(b) * od);
    return mlp_forward(policy, obs);
  };

  // Phase 1: k backward steps, accumulating log P_B(tau | x).
  std::vector<std::vector<int>> removed(batch);  // site order, newest first
  for (int step = 0; step < k; ++step) {
    PolicyHeads heads = eval_heads(learned_backward);
    const RngKey step_key = fold_in(fold_in(key, 100), step);
    for (int b = 0; b < batch; ++b) {
      env.backward_action_mask(cur[b], p, bmask.data() + static_cast<size_t>(b) * ab);
      const uint8_t* mrow = bmask.data() + static_cast<size_t>(b) * ab;
      std::vector<double> probs;
      if (learned_backward) {
        probs = eps_uniform(heads.bwd_logits.data.data() + static_cast<size_t>(b) * ab, mrow,
                            ab, 0.0);
      } else {
        probs.assign(ab, 0.0);
        for (int i = 0; i < ab; ++i) probs[i] = mrow[i] ? 1.0 : 0.0;
      }
      const int site = categorical(fold_in(step_key, b), probs.data(), ab);
      double total = 0.0;
      for (double v : probs) total += v;
      out[b].log_ratio -= std::log(probs[site] / total);  // - log P_B(tau | x)
      env.backward_step_instance(cur[b], site, p);
      removed[b].push_back(site);
    }
  }
  std::vector<Inst> partial = cur;  // k sites unassigned

  // Phase 2: score the forward replay of tau, x rebuilt from the partial state.
  for (int step = 0; step < k; ++step) {
    PolicyHeads heads = eval_heads(true);
    for (int b = 0; b < batch; ++b) {
      env.action_mask(cur[b], p, fmask.data() + static_cast<size_t>(b) * a_count);
      const int site = removed[b][k - 1 - step];
      const int action = 2 * site + (xs[b][site] > 0 ? 1 : 0);
      auto probs = eps_uniform(heads.fwd_logits.data.data() + static_cast<size_t>(b) * a_count,
                               fmask.data() + static_cast<size_t>(b) * a_count, a_count, 0.0);
      out[b].log_ratio += std::log(probs[action]);  // + log P_F(tau)
      env.step_instance(cur[b], action, p);
    }
  }

  // Phase 3: sample k fresh forward steps from the partial state (tau').
  cur = partial;
  std::vector<std::vector<int>> added(batch);
  for (int step = 0; step < k; ++step) {
    PolicyHeads heads = eval_heads(true);
    const RngKey step_key = fold_in(fold_in(key, 300), step);
    for (int b = 0; b < batch; ++b) {
      env.action_mask(cur[b], p, fmask.data() + static_cast<size_t>(b) * a_count);
      auto probs = eps_uniform(heads.fwd_logits.data.data() + static_cast<size_t>(b) * a_count,
                               fmask.data() + static_cast<size_t>(b) * a_count, a_count, 0.0);
      const int action = categorical(fold_in(step_key, b), probs.data(), a_count);
      out[b].log_ratio -= std::log(probs[action]);  // - log P_F(tau')
      env.step_instance(cur[b], action, p);
      added[b].push_back(action / 2);
    }
  }
  for (int b = 0; b < batch; ++b) out[b].proposal = cur[b].spins;

  // Phase 4: score the backward replay of tau' from x'.
  for (int step = 0; step < k; ++step) {
    PolicyHeads heads = eval_heads(learned_backward);
    for (int b = 0; b < batch; ++b) {
      env.backward_action_mask(cur[b], p, bmask.data() + static_cast<size_t>(b) * ab);
      const uint8_t* mrow = bmask.data() + static_cast<size_t>(b) * ab;
      const int site = added[b][k - 1 - step];
      double logp;
      if (learned_backward) {
        auto probs = eps_uniform(heads.bwd_logits.data.data() + static_cast<size_t>(b) * ab,
                                 mrow, ab, 0.0);
        logp = std::log(probs[site]);
      } else {
        int legal = 0;
        for (int i = 0; i < ab; ++i) legal += mrow[i] ? 1 : 0;
        logp = -std::log(static_cast<double>(legal));
      }
      out[b].log_ratio += logp;  // + log P_B(tau' | x')
      env.backward_step_instance(cur[b], site, p);
    }
  }
  return out;
}

BackAndForthResult back_and_forth_proposal(const IsingEnv& env, const IsingEnv::Params& p,
                                           const MlpParams& policy, bool learned_backward,
                                           const std::vector<int8_t>& x, int k,
                                           const RngKey& key) {
  return back_and_forth_batch(env, p, policy, learned_backward, {x}, k, key)[0];
}

bool mh_accept(double energy_x, double energy_proposal, double log_ratio, const RngKey& key) {
  const double log_a = -energy_proposal + energy_x + log_ratio;
  if (log_a >= 0.0) return true;
  return std::log(uniform_scalar(key)) < log_a;
}

double neg_log_rmse(const IsingCoupling& j_true, const IsingCoupling& j_model) {
  if (j_true.dim() != j_model.dim()) throw contract_violation("neg_log_rmse: shape mismatch");
  const int d = j_true.dim();
  double acc = 0.0;
  for (size_t i = 0; i < j_true.j.size(); ++i) {
    const double diff = j_true.j[i] - j_model.j[i];
    acc += diff * diff;
  }
  const double rmse = std::sqrt(acc / (static_cast<double>(d) * d));
  if (rmse == 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(rmse);
}

ExactDistribution ising_exact_distribution(const IsingCoupling& j) {
  const int d = j.dim();
  if (d > 20) throw config_error("ising exact distribution: 2^D exceeds enumeration cap");
  ExactDistribution dist;
  std::vector<int8_t> spins(d);
  std::vector<double> log_w(1u << d);
  double hi = -std::numeric_limits<double>::infinity();
  for (uint32_t bits = 0; bits < (1u << d); ++bits) {
    for (int a = 0; a < d; ++a) spins[a] = (bits >> a) & 1 ? 1 : -1;
    log_w[bits] = -ising_energy(spins, j);
    hi = std::max(hi, log_w[bits]);
  }
  for (uint32_t bits = 0; bits < (1u << d); ++bits) {
    for (int a = 0; a < d; ++a) spins[a] = (bits >> a) & 1 ? 1 : -1;
    dist.add(spins_key(spins), std::exp(log_w[bits] - hi));
  }
  dist.normalize();
  return dist;
}

std::string spins_key(const std::vector<int8_t>& spins) {
  std::string s;
  s.reserve(spins.size());
  for (int8_t v : spins) s += v > 0 ? '+' : '-';
  return s;
}

void save_ising_samples(const IsingSampleFile& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw config_error("ising samples: cannot write " + path);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", f.sigma);
  os << "N=" << f.side << " sigma=" << buf << "\n";
  for (const auto& row : f.samples) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? " " : "") << static_cast<int>(row[i]);
    os << "\n";
  }
}

IsingSampleFile load_ising_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("ising samples: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw config_error("ising samples: empty file");
  IsingSampleFile f;
  if (std::sscanf(header.c_str(), "N=%d sigma=%lf", &f.side, &f.sigma) != 2)
    throw config_error("ising samples: bad header: " + header);
  const int d = f.side * f.side;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<int8_t> row;
    std::istringstream ss(line);
    int v;
    while (ss >> v) {
      if (v != 1 && v != -1) throw config_error("ising samples: values must be +-1");
      row.push_back(static_cast<int8_t>(v));
    }
    if (static_cast<int>(row.size()) != d)
      throw config_error("ising samples: row width mismatch");
    f.samples.push_back(std::move(row));
  }
  return f;
}

}  // namespace gfn
