#pragma once
#include <string>
#include <vector>

#include "gfn/metrics.hpp"

namespace gfn {

// d-dimensional grid of side H. Actions increment one coordinate (masked at
// the H-1 face) or stop (last index); stopping moves the cell to its terminal
// copy. Backward actions are the d decrements plus un-stop (last index).
class HypergridEnv {
 public:
  struct Params {
    int dim = 2;
    int side = 8;
    double r0 = 1e-3;
    double r1 = 0.5;
    double r2 = 2.0;
  };
  struct Instance {
    std::vector<int> coords;
    bool is_terminal = false;
    int step_count = 0;
    bool operator==(const Instance&) const = default;
  };

  static constexpr bool kAllStatesTerminal = true;

  static void validate(const Params& p);

  int num_actions(const Params& p) const { return p.dim + 1; }
  int num_backward_actions(const Params& p) const { return p.dim + 1; }
  int stop_action(const Params& p) const { return p.dim; }
  int obs_dim(const Params& p) const { return p.dim * p.side; }
  int max_traj_len(const Params& p) const { return p.dim * (p.side - 1) + 1; }

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
  double state_log_reward(const Instance& inst, const Params& p) const;
  double log_reward_of(const Instance& inst, const Params& p) const {
    return state_log_reward(inst, p);
  }
};

// log of R0 + R1*prod 1[0.25 < |s_i/(H-1) - 0.5|] + R2*prod 1[0.3 < |..| < 0.4]
double grid_log_reward(const std::vector<int>& coords, const HypergridEnv::Params& p);

// pi(x) = R(x)/Z over all H^d cells; throws when H^d exceeds the cap.
ExactDistribution grid_exact_distribution(const HypergridEnv::Params& p,
                                          int64_t enumeration_cap = 1000000);

std::string grid_key(const std::vector<int>& coords);

}  // namespace gfn
