#pragma once
#include <cstdint>
#include <string>
#include <stdexcept>
#include <vector>

#include "gfn/tensor.hpp"

namespace gfn {

// Padded batch of construction trajectories. States are stored as encoded
// observations plus the forward/backward masks needed to re-evaluate the
// policy on every visited state. Entries at steps >= lengths[b] are padding
// and excluded from every loss via pad_mask.
struct TrajectoryBatch {
  int num_traj = 0;   // B
  int max_steps = 0;  // T
  int num_actions = 0;
  int num_bwd_actions = 0;
  int obs_dim = 0;

  std::vector<double> obs;        // B*(T+1)*obs_dim, row per visited state
  std::vector<uint8_t> fwd_mask;  // B*(T+1)*A
  std::vector<uint8_t> bwd_mask;  // B*(T+1)*Ab
  std::vector<int> fwd_actions;   // B*T, -1 on padding
  std::vector<int> bwd_actions;   // B*T, -1 on padding
  std::vector<double> log_pb_uniform;  // B*T, -log(#legal backward at s_{t+1})
  std::vector<double> log_rewards;     // B, terminal log-reward
  std::vector<int> lengths;            // B
  std::vector<uint8_t> pad_mask;       // B*T, 1 = real step
  std::vector<double> energies;        // B*(T+1), 0 unless env defines state energy
  std::vector<double> delta_log_reward;  // B*T, 0 unless recorded
  std::vector<std::string> terminal_keys;  // B, canonical terminal encodings

  void allocate(int b, int t, int a, int ab, int d) {
    num_traj = b;
    max_steps = t;
    num_actions = a;
    num_bwd_actions = ab;
    obs_dim = d;
    const int64_t rows = static_cast<int64_t>(b) * (t + 1);
    obs.assign(rows * d, 0.0);
    fwd_mask.assign(rows * a, 0);
    bwd_mask.assign(rows * ab, 0);
    fwd_actions.assign(static_cast<int64_t>(b) * t, -1);
    bwd_actions.assign(static_cast<int64_t>(b) * t, -1);
    log_pb_uniform.assign(static_cast<int64_t>(b) * t, 0.0);
    log_rewards.assign(b, 0.0);
    lengths.assign(b, 0);
    pad_mask.assign(static_cast<int64_t>(b) * t, 0);
    energies.assign(rows, 0.0);
    delta_log_reward.assign(static_cast<int64_t>(b) * t, 0.0);
    terminal_keys.assign(b, "");
  }

  int64_t state_row(int b, int t) const {
    return static_cast<int64_t>(b) * (max_steps + 1) + t;
  }
  int64_t step_index(int b, int t) const { return static_cast<int64_t>(b) * max_steps + t; }

  double* obs_row(int b, int t) {
    return obs.data() + state_row(b, t) * obs_dim;
  }
  const double* obs_row(int b, int t) const { return obs.data() + state_row(b, t) * obs_dim; }
  uint8_t* fwd_mask_row(int b, int t) { return fwd_mask.data() + state_row(b, t) * num_actions; }
  uint8_t* bwd_mask_row(int b, int t) { return bwd_mask.data() + state_row(b, t) * num_bwd_actions; }
  const uint8_t* fwd_mask_row(int b, int t) const {
    return fwd_mask.data() + state_row(b, t) * num_actions;
  }
  const uint8_t* bwd_mask_row(int b, int t) const {
    return bwd_mask.data() + state_row(b, t) * num_bwd_actions;
  }

  // Observations of all B*(T+1) state rows as a matrix.
  Tensor obs_tensor() const {
    return Tensor::from({num_traj * (max_steps + 1), obs_dim}, obs);
  }

  // Concatenate batches with identical layout (used by mixed-source training).
  static TrajectoryBatch concat(const TrajectoryBatch& x, const TrajectoryBatch& y) {
    if (x.max_steps != y.max_steps || x.num_actions != y.num_actions ||
        x.num_bwd_actions != y.num_bwd_actions || x.obs_dim != y.obs_dim)
      throw std::invalid_argument("TrajectoryBatch::concat: layout mismatch");
    TrajectoryBatch out = x;
    out.num_traj = x.num_traj + y.num_traj;
    auto app = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    app(out.obs, y.obs);
    app(out.fwd_mask, y.fwd_mask);
    app(out.bwd_mask, y.bwd_mask);
    app(out.fwd_actions, y.fwd_actions);
    app(out.bwd_actions, y.bwd_actions);
    app(out.log_pb_uniform, y.log_pb_uniform);
    app(out.log_rewards, y.log_rewards);
    app(out.lengths, y.lengths);
    app(out.pad_mask, y.pad_mask);
    app(out.energies, y.energies);
    app(out.delta_log_reward, y.delta_log_reward);
    app(out.terminal_keys, y.terminal_keys);
    return out;
  }
};

}  // namespace gfn
