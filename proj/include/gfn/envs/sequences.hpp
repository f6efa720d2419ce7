#pragma once
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn {

// The four sequence-generation schemes. Fixed-length schemes terminate
// automatically at full length; the variable-length autoregressive scheme
// has a stop action (last index).
enum class SeqScheme {
  kAutoregressiveFixed,
  kAutoregressiveVariable,
  kPrependAppend,
  kNonAutoregressive,
};

SeqScheme seq_scheme_from_name(const std::string& name);
std::string seq_scheme_name(SeqScheme s);

// Terminal rewards are computed on the canonical terminal string (symbol
// characters, or 0/1 characters when the environment expands tokens to bit
// blocks).
struct SequenceReward {
  virtual ~SequenceReward() = default;
  virtual double log_reward(const std::string& terminal) const = 0;
};

struct ConstantReward final : SequenceReward {
  double value = 0.0;  // log scale
  explicit ConstantReward(double log_r = 0.0) : value(log_r) {}
  double log_reward(const std::string&) const override { return value; }
};

// R(x) = exp(-beta * min_{m in modes} hamming(x, m) / n)
struct ModeSet final : SequenceReward {
  std::vector<std::string> modes;
  double beta = 3.0;
  int n_bits = 0;
  double log_reward(const std::string& terminal) const override;
};

// Table lookup with optional lower clamp r_min and reward exponent:
// log R = exponent * log(max(table[x], r_min)). Missing keys are errors.
struct RewardTable final : SequenceReward {
  std::unordered_map<std::string, double> table;
  double r_min = 0.0;
  double exponent = 1.0;
  int vocab = 0;
  int length = 0;
  double log_reward(const std::string& terminal) const override;
};

// The five seed words the mode construction concatenates.
const std::vector<std::string>& mode_seed_words();

// |modes| = min(target_count, #distinct concatenations); requires 8 | n.
ModeSet generate_modes(int n_bits, double beta, int target_count, const RngKey& key);

// One item per (mode, flip count i) for 0 <= i < n; flips i distinct bits.
std::vector<std::string> generate_test_set(const ModeSet& modes, const RngKey& key);

// File format: header "vocab=<m> length=<n>", then "sequence,reward" rows.
std::shared_ptr<RewardTable> load_reward_table(const std::string& path);
void save_reward_table(const RewardTable& table, const std::string& path);

// File format: header "n=<bits> beta=<b>", then one bit string per line.
void save_modes(const ModeSet& modes, const std::string& path);
ModeSet load_modes(const std::string& path);

class SequenceEnv {
 public:
  struct Params {
    SeqScheme scheme = SeqScheme::kAutoregressiveFixed;
    int max_len = 4;    // n (slots for the non-autoregressive scheme)
    int vocab = 2;      // m (2^k for bit blocks)
    int bit_block = 0;  // k > 0 expands tokens to k-bit words in terminal keys
    std::shared_ptr<const SequenceReward> reward;
  };
  struct Instance {
    std::vector<int> tokens;  // -1 = empty slot
    int lo = 0, hi = 0;       // prepend/append window
    int filled = 0;
    bool is_terminal = false;
    int step_count = 0;
    bool operator==(const Instance&) const = default;
  };

  static constexpr bool kAllStatesTerminal = false;

  static void validate(const Params& p);

  int num_actions(const Params& p) const;
  int num_backward_actions(const Params& p) const;
  int stop_action(const Params& p) const;  // -1 unless variable-length scheme
  int obs_dim(const Params& p) const { return p.max_len * (p.vocab + 1) + 1; }
  int max_traj_len(const Params& p) const {
    return p.scheme == SeqScheme::kAutoregressiveVariable ? p.max_len + 1 : p.max_len;
  }

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

  // Terminal instance holding the given terminal key (symbols or bits).
  Instance terminal_from_key(const std::string& key, const Params& p) const;
};

char seq_symbol(int token);
int seq_token(char symbol);

}  // namespace gfn
