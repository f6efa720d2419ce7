#include "gfn/envs/phylo.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "gfn/errors.hpp"

namespace gfn {

int SpeciesData::char_index(char c) const {
  const auto pos = alphabet.find(c);
  if (pos == std::string::npos)
    throw config_error(std::string("species data: character '") + c + "' not in alphabet");
  return static_cast<int>(pos);
}

SpeciesData synth_species(int n, int sites, const std::string& alphabet, const RngKey& key) {
  if (n < 2) throw config_error("species data: need at least 2 species");
  if (sites < 1) throw config_error("species data: need at least 1 site");
  if (alphabet.empty() || alphabet.size() > 8)
    throw config_error("species data: alphabet size must lie in [1, 8]");
  SpeciesData d;
  d.num_species = n;
  d.num_sites = sites;
  d.alphabet = alphabet;
  uint64_t draw = 0;
  for (int i = 0; i < n; ++i) {
    d.names.push_back("sp" + std::to_string(i));
    std::string row;
    for (int s = 0; s < sites; ++s)
      row += alphabet[random_range(fold_in(key, draw++), static_cast<int>(alphabet.size()))];
    d.rows.push_back(std::move(row));
  }
  return d;
}

SpeciesData load_species(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("species file: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw config_error("species file: empty file");
  SpeciesData d;
  char alpha_buf[16] = {0};
  if (std::sscanf(header.c_str(), "n=%d L=%d alphabet=%15s", &d.num_species, &d.num_sites,
                  alpha_buf) != 3)
    throw config_error("species file: bad header: " + header);
  d.alphabet = alpha_buf;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw config_error("species file: missing comma: " + line);
    d.names.push_back(line.substr(0, comma));
    d.rows.push_back(line.substr(comma + 1));
    if (static_cast<int>(d.rows.back().size()) != d.num_sites)
      throw config_error("species file: row length mismatch for " + d.names.back());
  }
  if (static_cast<int>(d.rows.size()) != d.num_species)
    throw config_error("species file: row count mismatch");
  return d;
}

void save_species(const SpeciesData& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw config_error("species file: cannot write " + path);
  os << "n=" << d.num_species << " L=" << d.num_sites << " alphabet=" << d.alphabet << "\n";
  for (int i = 0; i < d.num_species; ++i) os << d.names[i] << "," << d.rows[i] << "\n";
}

void PhyloEnv::validate(const Params& p) {
  if (!p.species) throw config_error("phylo env: missing species data");
  if (p.species->num_species < 2) throw config_error("phylo env: need at least 2 species");
  if (!(p.alpha > 0.0)) throw config_error("phylo env: alpha must be positive");
}

int PhyloEnv::pair_index(int i, int j, int n) {
  if (i < 0 || j <= i || j >= n) throw contract_violation("phylo: bad slot pair");
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

std::pair<int, int> PhyloEnv::pair_from_index(int idx, int n) {
  for (int i = 0; i < n - 1; ++i) {
    const int row = n - 1 - i;
    if (idx < row) return {i, i + 1 + idx};
    idx -= row;
  }
  throw contract_violation("phylo: pair index out of range");
}

PhyloEnv::Instance PhyloEnv::reset_instance(const Params& p) const {
  validate(p);
  const SpeciesData& sp = *p.species;
  Instance inst;
  inst.nodes.reserve(2 * sp.num_species);
  for (int i = 0; i < sp.num_species; ++i) {
    Node node;
    node.leaf_id = i;
    node.min_leaf = i;
    node.sets.resize(sp.num_sites);
    for (int s = 0; s < sp.num_sites; ++s)
      node.sets[s] = static_cast<uint8_t>(1u << sp.char_index(sp.rows[i][s]));
    inst.nodes.push_back(std::move(node));
    inst.roots.push_back(i);
  }
  return inst;
}

double PhyloEnv::step_instance(Instance& inst, int action, const Params& p) const {
  const int n = p.species->num_species;
  const auto [i, j] = pair_from_index(action, n);
  const Node& a = inst.nodes[inst.roots[i]];
  const Node& b = inst.nodes[inst.roots[j]];
  Node merged;
  merged.left = inst.roots[i];
  merged.right = inst.roots[j];
  merged.min_leaf = a.min_leaf;  // roots are sorted, so a.min_leaf < b.min_leaf
  merged.cost = a.cost + b.cost;
  merged.sets.resize(a.sets.size());
  for (size_t s = 0; s < a.sets.size(); ++s) {
    const uint8_t inter = a.sets[s] & b.sets[s];
    if (inter) {
      merged.sets[s] = inter;
    } else {
      merged.sets[s] = a.sets[s] | b.sets[s];
      merged.cost += 1;
    }
  }
  inst.nodes.push_back(std::move(merged));
  inst.roots[i] = static_cast<int>(inst.nodes.size()) - 1;
  inst.roots.erase(inst.roots.begin() + j);
  inst.step_count += 1;
  if (inst.roots.size() == 1) {
    inst.is_terminal = true;
    return log_reward_of(inst, p);
  }
  return 0.0;
}

void PhyloEnv::backward_step_instance(Instance& inst, int bwd_action, const Params& p) const {
  (void)p;
  const Node& node = inst.nodes[inst.roots[bwd_action]];
  if (node.leaf_id >= 0) throw contract_violation("phylo: cannot split a leaf");
  const int left = node.left, right = node.right;
  inst.roots[bwd_action] = left;  // same min_leaf, position stays sorted
  const int rm = inst.nodes[right].min_leaf;
  auto it = std::upper_bound(inst.roots.begin(), inst.roots.end(), rm,
                             [&](int v, int id) { return v < inst.nodes[id].min_leaf; });
  inst.roots.insert(it, right);
  inst.is_terminal = false;
  inst.step_count -= 1;
}

void PhyloEnv::action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int n = p.species->num_species;
  std::fill(out, out + num_actions(p), 0);
  if (inst.is_terminal) return;
  const int r = static_cast<int>(inst.roots.size());
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) out[pair_index(i, j, n)] = 1;
}

void PhyloEnv::backward_action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int n = p.species->num_species;
  std::fill(out, out + n, 0);
  for (size_t r = 0; r < inst.roots.size(); ++r)
    if (inst.nodes[inst.roots[r]].leaf_id < 0) out[r] = 1;
}

int PhyloEnv::get_backward_action(const Instance& prev, int action, const Instance& next,
                                  const Params& p) const {
  (void)next;
  const auto [i, j] = pair_from_index(action, p.species->num_species);
  (void)j;
  if (i >= static_cast<int>(prev.roots.size()))
    throw contract_violation("phylo: inconsistent merge transition");
  return i;
}

int PhyloEnv::get_forward_action(const Instance& prev, int bwd_action, const Instance& next,
                                 const Params& p) const {
  const Node& merged = next.nodes[next.roots[bwd_action]];
  const int ml = next.nodes[merged.left].min_leaf;
  const int mr = next.nodes[merged.right].min_leaf;
  int i = -1, j = -1;
  for (size_t r = 0; r < prev.roots.size(); ++r) {
    if (prev.nodes[prev.roots[r]].min_leaf == ml) i = static_cast<int>(r);
    if (prev.nodes[prev.roots[r]].min_leaf == mr) j = static_cast<int>(r);
  }
  if (i < 0 || j < 0) throw contract_violation("phylo: split children missing in parent state");
  return pair_index(i, j, p.species->num_species);
}

void PhyloEnv::encode_obs(const Instance& inst, const Params& p, double* out) const {
  const SpeciesData& sp = *p.species;
  const int a = static_cast<int>(sp.alphabet.size());
  const int slot_width = 3 + a;
  std::fill(out, out + obs_dim(p), 0.0);
  for (size_t r = 0; r < inst.roots.size(); ++r) {
    const Node& node = inst.nodes[inst.roots[r]];
    double* slot = out + r * slot_width;
    slot[0] = 1.0;
    slot[1] = node.leaf_id >= 0 ? 1.0 : 0.0;
    slot[2] = static_cast<double>(node.cost) / std::max(1, sp.num_sites);
    for (int s = 0; s < sp.num_sites; ++s)
      for (int c = 0; c < a; ++c)
        if (node.sets[s] & (1u << c)) slot[3 + c] += 1.0 / sp.num_sites;
  }
  out[sp.num_species * slot_width] =
      static_cast<double>(inst.roots.size()) / sp.num_species;
}

std::string PhyloEnv::canonical_tree(const Instance& inst, int node_id) const {
  const Node& node = inst.nodes[node_id];
  if (node.leaf_id >= 0) return "L" + std::to_string(node.leaf_id);
  return "(" + canonical_tree(inst, node.left) + "," + canonical_tree(inst, node.right) + ")";
}

std::string PhyloEnv::encode_state(const Instance& inst, const Params&) const {
  std::string s;
  for (size_t r = 0; r < inst.roots.size(); ++r) {
    if (r) s += ';';
    s += canonical_tree(inst, inst.roots[r]);
  }
  return s;
}

std::string PhyloEnv::encode_terminal(const Instance& inst, const Params& p) const {
  if (!inst.is_terminal) throw contract_violation("phylo: encode_terminal on live state");
  return encode_state(inst, p);
}

double PhyloEnv::energy(const Instance& inst, const Params& p) const {
  int total = 0;
  for (int r : inst.roots) total += inst.nodes[r].cost;
  return static_cast<double>(total) / p.alpha;
}

int PhyloEnv::parsimony(const Instance& inst, const Params&) const {
  if (inst.roots.size() != 1) throw contract_violation("phylo: parsimony of incomplete forest");
  return inst.nodes[inst.roots[0]].cost;
}

double PhyloEnv::log_reward_of(const Instance& inst, const Params& p) const {
  return (p.c - static_cast<double>(parsimony(inst, p))) / p.alpha;
}

}  // namespace gfn
