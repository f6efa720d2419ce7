#pragma once
#include <string>

#include "gfn/nn.hpp"
#include "gfn/optim.hpp"

namespace gfn {

// Versioned binary checkpoint: little-endian, 64-bit doubles, lossless
// round trip. Layout: magic "GFNCKPT1", then the policy tensors (trunk
// depth, per-tensor rank/dims/values, log_z), then both optimizer states
// and the step counter.
struct Checkpoint {
  MlpParams params;
  AdamState opt_main;
  AdamState opt_z;
  int64_t step = 0;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gfn
