#include "gfn/envs/hypergrid.hpp"

#include <cmath>

#include "gfn/errors.hpp"

namespace gfn {

void HypergridEnv::validate(const Params& p) {
  if (p.dim < 1) throw config_error("hypergrid: dim must be >= 1");
  if (p.side < 2) throw config_error("hypergrid: side must be >= 2");
  if (p.r0 < 0.0 || p.r1 < 0.0 || p.r2 < 0.0)
    throw config_error("hypergrid: reward terms must be nonnegative");
  if (p.r0 <= 0.0) throw config_error("hypergrid: r0 must be positive for log rewards");
}

HypergridEnv::Instance HypergridEnv::reset_instance(const Params& p) const {
  validate(p);
  Instance inst;
  inst.coords.assign(p.dim, 0);
  return inst;
}

double HypergridEnv::step_instance(Instance& inst, int action, const Params& p) const {
  inst.step_count += 1;
  if (action == stop_action(p)) {
    inst.is_terminal = true;
    return grid_log_reward(inst.coords, p);
  }
  inst.coords[action] += 1;
  return 0.0;
}

void HypergridEnv::backward_step_instance(Instance& inst, int bwd_action, const Params& p) const {
  inst.step_count -= 1;
  if (bwd_action == p.dim) {
    inst.is_terminal = false;
    return;
  }
  inst.coords[bwd_action] -= 1;
}

void HypergridEnv::action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  if (inst.is_terminal) {
    for (int i = 0; i <= p.dim; ++i) out[i] = 0;
    return;
  }
  for (int i = 0; i < p.dim; ++i) out[i] = inst.coords[i] < p.side - 1 ? 1 : 0;
  out[p.dim] = 1;  // stop always legal on live states
}

void HypergridEnv::backward_action_mask(const Instance& inst, const Params& p,
                                        uint8_t* out) const {
  if (inst.is_terminal) {
    for (int i = 0; i < p.dim; ++i) out[i] = 0;
    out[p.dim] = 1;  // un-stop
    return;
  }
  for (int i = 0; i < p.dim; ++i) out[i] = inst.coords[i] > 0 ? 1 : 0;
  out[p.dim] = 0;
}

int HypergridEnv::get_backward_action(const Instance& prev, int action, const Instance& next,
                                      const Params& p) const {
  if (action == stop_action(p)) {
    if (!next.is_terminal || prev.coords != next.coords)
      throw contract_violation("hypergrid: inconsistent stop transition");
    return p.dim;
  }
  if (next.coords[action] != prev.coords[action] + 1)
    throw contract_violation("hypergrid: inconsistent increment transition");
  return action;
}

int HypergridEnv::get_forward_action(const Instance& prev, int bwd_action, const Instance& next,
                                     const Params& p) const {
  (void)prev;
  (void)next;
  return bwd_action == p.dim ? stop_action(p) : bwd_action;
}

void HypergridEnv::encode_obs(const Instance& inst, const Params& p, double* out) const {
  for (int i = 0; i < p.dim * p.side; ++i) out[i] = 0.0;
  for (int i = 0; i < p.dim; ++i) out[i * p.side + inst.coords[i]] = 1.0;
}

std::string HypergridEnv::encode_state(const Instance& inst, const Params& p) const {
  std::string s = grid_key(inst.coords);
  (void)p;
  if (inst.is_terminal) s += "|T";
  return s;
}

std::string HypergridEnv::encode_terminal(const Instance& inst, const Params&) const {
  return grid_key(inst.coords);
}

double HypergridEnv::state_log_reward(const Instance& inst, const Params& p) const {
  return grid_log_reward(inst.coords, p);
}

std::string grid_key(const std::vector<int>& coords) {
  std::string s;
  for (size_t i = 0; i < coords.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(coords[i]);
  }
  return s;
}

double grid_log_reward(const std::vector<int>& coords, const HypergridEnv::Params& p) {
  double prod1 = 1.0, prod2 = 1.0;
  for (int c : coords) {
    const double x = std::fabs(static_cast<double>(c) / (p.side - 1) - 0.5);
    if (!(0.25 < x)) prod1 = 0.0;
    if (!(0.3 < x && x < 0.4)) prod2 = 0.0;
  }
  return std::log(p.r0 + p.r1 * prod1 + p.r2 * prod2);
}

ExactDistribution grid_exact_distribution(const HypergridEnv::Params& p, int64_t enumeration_cap) {
  HypergridEnv::validate(p);
  int64_t cells = 1;
  for (int i = 0; i < p.dim; ++i) {
    cells *= p.side;
    if (cells > enumeration_cap)
      throw config_error("hypergrid: state space exceeds enumeration cap");
  }
  ExactDistribution dist;
  std::vector<int> coords(p.dim, 0);
  for (int64_t n = 0; n < cells; ++n) {
    dist.add(grid_key(coords), std::exp(grid_log_reward(coords, p)));
    for (int i = p.dim - 1; i >= 0; --i) {
      if (++coords[i] < p.side) break;
      coords[i] = 0;
    }
  }
  dist.normalize();
  return dist;
}

}  // namespace gfn
