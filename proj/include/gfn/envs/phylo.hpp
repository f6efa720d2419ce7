#pragma once
#include <memory>
#include <string>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn {

// Observed species characters. Rectangular matrix of L sites over a small
// alphabet (bitmask-encoded per site).
struct SpeciesData {
  int num_species = 0;
  int num_sites = 0;
  std::string alphabet = "ACGT";
  std::vector<std::string> names;
  std::vector<std::string> rows;  // characters, one string of length L per species

  int char_index(char c) const;
};

SpeciesData synth_species(int n, int sites, const std::string& alphabet, const RngKey& key);
// File format: header "n=<n> L=<L> alphabet=<S>", then "name,sequence" rows.
SpeciesData load_species(const std::string& path);
void save_species(const SpeciesData& data, const std::string& path);

// Rooted binary trees built by merging forest roots pairwise. Roots are kept
// packed and sorted by smallest contained leaf, which keeps states canonical
// without re-sorting: a merged pair (i, j), i < j, lands in slot i. Fitch
// candidate sets and subtree mutation counts are maintained incrementally.
class PhyloEnv {
 public:
  struct Params {
    std::shared_ptr<const SpeciesData> species;
    double alpha = 4.0;  // reward temperature
    double c = 0.0;      // reward constant
  };
  struct Node {
    int left = -1, right = -1;
    int leaf_id = -1;
    int min_leaf = 0;
    int cost = 0;
    std::vector<uint8_t> sets;  // per-site Fitch candidate bitmask
  };
  struct Instance {
    std::vector<Node> nodes;
    std::vector<int> roots;  // node ids, sorted by min_leaf
    bool is_terminal = false;
    int step_count = 0;
  };

  static constexpr bool kAllStatesTerminal = false;

  static void validate(const Params& p);

  int num_actions(const Params& p) const {
    const int n = p.species->num_species;
    return n * (n - 1) / 2;
  }
  int num_backward_actions(const Params& p) const { return p.species->num_species; }
  int obs_dim(const Params& p) const {
    return p.species->num_species * (3 + static_cast<int>(p.species->alphabet.size())) + 1;
  }
  int max_traj_len(const Params& p) const { return p.species->num_species - 1; }

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
  // E(s) = (sum of per-root Fitch costs) / alpha; zero on the initial forest.
  double energy(const Instance& inst, const Params& p) const;
  double log_reward_of(const Instance& inst, const Params& p) const;

  // Parsimony score of a complete tree (the root's accumulated Fitch cost).
  int parsimony(const Instance& inst, const Params& p) const;

  // Unordered pair (i, j), i < j, over n slots <-> action index.
  static int pair_index(int i, int j, int n);
  static std::pair<int, int> pair_from_index(int idx, int n);

  std::string canonical_tree(const Instance& inst, int node_id) const;
};

}  // namespace gfn
