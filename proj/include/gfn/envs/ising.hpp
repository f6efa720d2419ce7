#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gfn/metrics.hpp"
#include "gfn/nn.hpp"
#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

// Symmetric zero-diagonal coupling matrix over D = N*N spins. The energy is
// E_J(x) = -x^T J x and log R(x) = -E.
struct IsingCoupling {
  int side = 0;  // N
  std::vector<double> j;  // D x D

  int dim() const { return side * side; }
  double at(int a, int b) const { return j[static_cast<size_t>(a) * dim() + b]; }
  double& at(int a, int b) { return j[static_cast<size_t>(a) * dim() + b]; }
};

// J = sigma * A_N for the toroidal lattice adjacency A_N.
IsingCoupling toroidal_coupling(int side, double sigma);
IsingCoupling zero_coupling(int side);

double ising_energy(const std::vector<int8_t>& spins, const IsingCoupling& j);

// Spin-assignment environment: ternary states over D sites, actions pick an
// unassigned site and a sign (action = 2*site + bit), terminal after D steps.
class IsingEnv {
 public:
  struct Params {
    std::shared_ptr<const IsingCoupling> coupling;
  };
  struct Instance {
    std::vector<int8_t> spins;  // 0 = unassigned, +-1 otherwise
    int assigned = 0;
    bool is_terminal = false;
    int step_count = 0;
    bool operator==(const Instance&) const = default;
  };

  static constexpr bool kAllStatesTerminal = false;

  static void validate(const Params& p);

  int num_actions(const Params& p) const { return 2 * p.coupling->dim(); }
  int num_backward_actions(const Params& p) const { return p.coupling->dim(); }
  int obs_dim(const Params& p) const { return 3 * p.coupling->dim(); }
  int max_traj_len(const Params& p) const { return p.coupling->dim(); }

  Instance reset_instance(const Params& p) const;
  double step_instance(Instance& inst, int action, const Params& p) const;
  void backward_step_instance(Instance& inst, int bwd_action, const Params& p) const;
  void action_mask(const Instance& inst, const Params& p, uint8_t* out) const;
  void backward_action_mask(const Instance& inst, const Params& p, uint8_t* out) const;
  int get_backward_action(const Instance& prev, int action, const Instance& next,
                          const Params& p) const;
  int get_forward_action(const Instance& prev, int bwd_action, const Instance& next,
                         const Params& p) const;
  void encode_obs(const Instance& inst, const Params& p, double* out) const;
  std::string encode_state(const Instance& inst, const Params& p) const;
  std::string encode_terminal(const Instance& inst, const Params& p) const;
  double energy(const Instance&, const Params&) const { return 0.0; }
  double log_reward_of(const Instance& inst, const Params& p) const;

  Instance terminal_from_spins(const std::vector<int8_t>& spins, const Params& p) const;
};

// Heat-bath single-site Gibbs sampler: p(x_i = +1 | rest) = logistic(4 h_i),
// h_i = sum_b J_ib x_b. Optional parallel tempering with a geometric
// temperature ladder and adjacent-chain swaps.
struct GibbsConfig {
  int64_t burn_in = 2000;
  int64_t thinning = 10;
  int num_chains = 1;       // > 1 enables parallel tempering
  double hottest_beta = 0.2;  // inverse temperature of the hottest chain
};
std::vector<std::vector<int8_t>> gibbs_data_sampler(const IsingCoupling& j, const RngKey& key,
                                                    int64_t n_samples,
                                                    const GibbsConfig& cfg = {});

// Conditional of the heat-bath kernel (the sampler's single-site update).
double heat_bath_prob_up(const std::vector<int8_t>& spins, int site, const IsingCoupling& j,
                         double beta = 1.0);

// Batched proposals (one backward/forward walk per input configuration).
struct BackAndForthResult;
std::vector<BackAndForthResult> back_and_forth_batch(
    const IsingEnv& env, const IsingEnv::Params& p, const MlpParams& policy,
    bool learned_backward, const std::vector<std::vector<int8_t>>& xs, int k,
    const RngKey& key);

// Mean over pairs of grad_J E(x) - grad_J E(x'), symmetrized, zero diagonal;
// grad_J E(x) = -x x^T.
std::vector<double> cd_gradient(const std::vector<std::vector<int8_t>>& data_batch,
                                const std::vector<std::vector<int8_t>>& proposal_batch,
                                const IsingCoupling& j);

// K backward steps from x under the backward policy, then K forward steps
// under the forward policy. Returns x' and the Hastings correction for the
// path-wise kernel, log [P_B(tau'|x') P_F(tau)] - log [P_B(tau|x) P_F(tau')]:
// the proposal probability of the move enters the denominator and the
// reverse move's the numerator, which keeps the chain in detailed balance
// (at K = D this reduces to the independence-sampler correction with the
// single-path estimate of the terminal marginal).
struct BackAndForthResult {
  std::vector<int8_t> proposal;
  double log_ratio = 0.0;
};
BackAndForthResult back_and_forth_proposal(const IsingEnv& env, const IsingEnv::Params& p,
                                           const MlpParams& policy, bool learned_backward,
                                           const std::vector<int8_t>& x, int k,
                                           const RngKey& key);

// Metropolis-Hastings accept/reject with A = min(1, e^{-E(x')}/e^{-E(x)} * ratio).
bool mh_accept(double energy_x, double energy_proposal, double log_ratio, const RngKey& key);

// -log sqrt(mean((J_true - J_model)^2)); +inf sentinel when the error is zero.
double neg_log_rmse(const IsingCoupling& j_true, const IsingCoupling& j_model);

// All 2^D configurations with their Gibbs probabilities (D <= 20), keyed
// like IsingEnv::encode_terminal.
ExactDistribution ising_exact_distribution(const IsingCoupling& j);

std::string spins_key(const std::vector<int8_t>& spins);

// File format: header "N=<side> sigma=<s>", then rows of space-separated +-1.
struct IsingSampleFile {
  int side = 0;
  double sigma = 0.0;
  std::vector<std::vector<int8_t>> samples;
};
void save_ising_samples(const IsingSampleFile& f, const std::string& path);
IsingSampleFile load_ising_samples(const std::string& path);

}  // namespace gfn
