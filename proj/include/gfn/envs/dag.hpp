#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gfn/metrics.hpp"
#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

// N x d observations with the generating ground truth attached.
struct DagDataset {
  int d = 0;
  int n = 0;
  std::vector<double> values;        // row-major n x d
  std::vector<uint32_t> true_adj;    // ground-truth adjacency, bitmask rows
  std::vector<double> true_weights;  // d x d
  double noise_var = 0.1;
  uint64_t seed = 0;

  double at(int row, int col) const { return values[static_cast<size_t>(row) * d + col]; }
};

// Ground truth sampled over a uniform topological order with edge
// probability 2 * expected_in_degree / (d - 1); linear-Gaussian weights
// are standard normal, observation noise variance 0.1.
DagDataset generate_er_dataset(int d, double expected_in_degree, int n, const RngKey& key);

void save_dag_dataset(const DagDataset& data, const std::string& csv_path,
                      const std::string& meta_path);
DagDataset load_dag_dataset(const std::string& csv_path, const std::string& meta_path);

enum class DagScoreKind { kLinearGaussian, kBge };

// Complete table of LocalScore(X_j | parent set) for every node and parent
// bitmask. log R(G) = sum_j cache[j][parents_G(j)].
class LocalScoreCache {
 public:
  struct LinGaussConfig {
    double noise_var = 0.1;
    double weight_var = 1.0;
  };
  struct BgeConfig {
    double alpha_mu = 1.0;
    double alpha_w = 0.0;  // 0 means d + 2
  };

  static LocalScoreCache lingauss(const DagDataset& data, const LinGaussConfig& cfg);
  static LocalScoreCache lingauss(const DagDataset& data) {
    return lingauss(data, LinGaussConfig{});
  }
  static LocalScoreCache bge(const DagDataset& data, const BgeConfig& cfg);
  static LocalScoreCache bge(const DagDataset& data) { return bge(data, BgeConfig{}); }

  int dim() const { return d_; }
  double local(int j, uint32_t parent_mask) const;
  double delta(int j, uint32_t parent_mask, int new_parent) const;
  double graph_log_reward(const std::vector<uint32_t>& adj) const;

 private:
  int d_ = 0;
  std::vector<std::vector<double>> scores_;  // [j][mask]
};

// Edge-by-edge DAG construction with an incrementally maintained transitive
// closure of the transpose graph (reflexive). Every state may stop; the stop
// action is the last index and un-stop is the last backward action.
class DagEnv {
 public:
  struct Params {
    int d = 5;
    std::shared_ptr<const LocalScoreCache> score;
  };
  struct Instance {
    std::vector<uint32_t> adj;       // adj[u] bit v = edge u -> v
    std::vector<uint32_t> closure_t;  // closure_t[a] bit b = path b ~> a (reflexive)
    int num_edges = 0;
    bool is_terminal = false;
    int step_count = 0;
    bool operator==(const Instance&) const = default;
  };

  static constexpr bool kAllStatesTerminal = true;

  static void validate(const Params& p);

  int num_actions(const Params& p) const { return p.d * (p.d - 1) + 1; }
  int num_backward_actions(const Params& p) const { return p.d * (p.d - 1) + 1; }
  int stop_action(const Params& p) const { return p.d * (p.d - 1); }
  int obs_dim(const Params& p) const { return p.d * p.d; }
  int max_traj_len(const Params& p) const { return p.d * (p.d - 1) / 2 + 1; }

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

  static int edge_action(int u, int v, int d);
  static std::pair<int, int> edge_from_action(int action, int d);
};

// closure' = closure OR outer(column v of closure, row u of closure).
void closure_update(std::vector<uint32_t>& closure_t, int u, int v);
// Reflexive transitive closure of the transpose graph, from scratch.
std::vector<uint32_t> closure_from_adjacency(const std::vector<uint32_t>& adj);
bool is_acyclic(const std::vector<uint32_t>& adj);

// All DAGs on d nodes (d <= 5), as adjacency bitmask rows.
std::vector<std::vector<uint32_t>> enumerate_dags(int d);

// Exact posterior P(G | data) over enumerate_dags(d), keyed like
// DagEnv::encode_terminal.
ExactDistribution dag_exact_posterior(const LocalScoreCache& cache);

std::string dag_key(const std::vector<uint32_t>& adj, int d);
std::vector<uint32_t> dag_from_key(const std::string& key, int d);

enum class DagFeature { kEdge, kPath, kMarkovBlanket };
// P(feature(i, j) | posterior) for all ordered pairs, as a d x d matrix.
Tensor feature_marginals(const ExactDistribution& posterior, int d, DagFeature kind);

}  // namespace gfn
