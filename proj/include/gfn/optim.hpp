#pragma once
#include <cstdint>
#include <vector>

#include "gfn/nn.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW); 0 recovers plain Adam
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;
};

AdamState adam_init(const std::vector<Tensor*>& params);
// Bias-corrected Adam step; lr_override >= 0 replaces cfg.lr (for schedules).
void adam_step(AdamState& st, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, const AdamConfig& cfg,
               double lr_override = -1.0);

struct Schedule {
  enum class Kind { kConstant, kLinear, kCosine };
  Kind kind = Kind::kConstant;
  double start_value = 0.0;
  double end_value = 0.0;
  int64_t warmup = 0;   // linear ramp 0 -> start_value over this many steps
  int64_t horizon = 0;  // steps from warmup end to end_value
};

double schedule_value(const Schedule& s, int64_t step);

// shadow <- (1 - tau) * shadow + tau * live
void ema_update(MlpParams& shadow, const MlpParams& live, double tau);

}  // namespace gfn
