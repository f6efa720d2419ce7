#include "gfn/envs/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "gfn/errors.hpp"
#include "gfn/metrics.hpp"

namespace gfn {

namespace {
constexpr const char* kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
constexpr int kAlphabetSize = 64;
}  // namespace

char seq_symbol(int token) {
  if (token < 0 || token >= kAlphabetSize) throw contract_violation("token outside alphabet");
  return kAlphabet[token];
}

int seq_token(char symbol) {
  const char* p = std::strchr(kAlphabet, symbol);
  if (p == nullptr || symbol == '\0') throw contract_violation("symbol outside alphabet");
  return static_cast<int>(p - kAlphabet);
}

SeqScheme seq_scheme_from_name(const std::string& name) {
  if (name == "autoregressive") return SeqScheme::kAutoregressiveFixed;
  if (name == "autoregressive-variable") return SeqScheme::kAutoregressiveVariable;
  if (name == "prepend-append") return SeqScheme::kPrependAppend;
  if (name == "non-autoregressive") return SeqScheme::kNonAutoregressive;
  throw config_error("unknown sequence scheme: " + name);
}

std::string seq_scheme_name(SeqScheme s) {
  switch (s) {
    case SeqScheme::kAutoregressiveFixed: return "autoregressive";
    case SeqScheme::kAutoregressiveVariable: return "autoregressive-variable";
    case SeqScheme::kPrependAppend: return "prepend-append";
    case SeqScheme::kNonAutoregressive: return "non-autoregressive";
  }
  return "?";
}

double ModeSet::log_reward(const std::string& terminal) const {
  if (modes.empty()) throw contract_violation("ModeSet: empty mode set");
  int best = n_bits + 1;
  for (const auto& m : modes) best = std::min(best, hamming(terminal, m));
  return -beta * static_cast<double>(best) / static_cast<double>(n_bits);
}

double RewardTable::log_reward(const std::string& terminal) const {
  auto it = table.find(terminal);
  if (it == table.end())
    throw contract_violation("RewardTable: sequence not covered: " + terminal);
  const double v = std::max(it->second, r_min);
  if (!(v > 0.0)) throw numeric_error("RewardTable: nonpositive reward for " + terminal);
  return exponent * std::log(v);
}

const std::vector<std::string>& mode_seed_words() {
  static const std::vector<std::string> words = {
      "00000000", "11111111", "11110000", "00001111", "00111100"};
  return words;
}

ModeSet generate_modes(int n_bits, double beta, int target_count, const RngKey& key) {
  if (n_bits <= 0 || n_bits % 8 != 0) throw config_error("generate_modes: need 8 | n");
  if (target_count < 1) throw config_error("generate_modes: target_count must be positive");
  const auto& words = mode_seed_words();
  const int blocks = n_bits / 8;
  double distinct = 1.0;
  for (int i = 0; i < blocks; ++i) distinct *= static_cast<double>(words.size());
  const int cap = distinct < static_cast<double>(target_count)
                      ? static_cast<int>(distinct)
                      : target_count;
  ModeSet ms;
  ms.beta = beta;
  ms.n_bits = n_bits;
  std::set<std::string> seen;
  uint64_t draw = 0;
  while (static_cast<int>(seen.size()) < cap) {
    std::string mode;
    mode.reserve(n_bits);
    for (int b = 0; b < blocks; ++b) {
      const int w = random_range(fold_in(key, draw++), static_cast<int>(words.size()));
      mode += words[w];
    }
    seen.insert(std::move(mode));
  }
  ms.modes.assign(seen.begin(), seen.end());
  return ms;
}

std::vector<std::string> generate_test_set(const ModeSet& ms, const RngKey& key) {
  std::vector<std::string> out;
  out.reserve(ms.modes.size() * ms.n_bits);
  uint64_t draw = 0;
  for (const auto& mode : ms.modes) {
    for (int flips = 0; flips < ms.n_bits; ++flips) {
      std::string item = mode;
      // choose `flips` distinct positions
      std::vector<int> pos(ms.n_bits);
      for (int i = 0; i < ms.n_bits; ++i) pos[i] = i;
      for (int i = 0; i < flips; ++i) {
        const int j = i + random_range(fold_in(key, draw++), ms.n_bits - i);
        std::swap(pos[i], pos[j]);
        item[pos[i]] = item[pos[i]] == '0' ? '1' : '0';
      }
      out.push_back(std::move(item));
    }
  }
  return out;
}

std::shared_ptr<RewardTable> load_reward_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("reward table: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw config_error("reward table: empty file " + path);
  auto table = std::make_shared<RewardTable>();
  if (std::sscanf(header.c_str(), "vocab=%d length=%d", &table->vocab, &table->length) != 2)
    throw config_error("reward table: bad header: " + header);
  if (table->vocab < 1 || table->length < 1)
    throw config_error("reward table: bad vocab/length values");
  std::string line;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw config_error("reward table: missing comma at line " + std::to_string(lineno));
    std::string seq = line.substr(0, comma);
    const double value = std::stod(line.substr(comma + 1));
    if (!table->table.emplace(std::move(seq), value).second)
      throw config_error("reward table: duplicate sequence at line " + std::to_string(lineno));
  }
  return table;
}

void save_reward_table(const RewardTable& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw config_error("reward table: cannot write " + path);
  os << "vocab=" << table.vocab << " length=" << table.length << "\n";
  std::vector<std::string> keys;
  keys.reserve(table.table.size());
  for (const auto& [k, _] : table.table) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  char buf[64];
  for (const auto& k : keys) {
    std::snprintf(buf, sizeof buf, "%.17g", table.table.at(k));
    os << k << "," << buf << "\n";
  }
}

void save_modes(const ModeSet& ms, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw config_error("modes file: cannot write " + path);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", ms.beta);
  os << "n=" << ms.n_bits << " beta=" << buf << "\n";
  for (const auto& m : ms.modes) os << m << "\n";
}

ModeSet load_modes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("modes file: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw config_error("modes file: empty file");
  ModeSet ms;
  if (std::sscanf(header.c_str(), "n=%d beta=%lf", &ms.n_bits, &ms.beta) != 2)
    throw config_error("modes file: bad header: " + header);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (static_cast<int>(line.size()) != ms.n_bits)
      throw config_error("modes file: mode length mismatch: " + line);
    ms.modes.push_back(line);
  }
  if (ms.modes.empty()) throw config_error("modes file: no modes");
  return ms;
}

void SequenceEnv::validate(const Params& p) {
  if (p.max_len < 1) throw config_error("sequence env: max_len must be >= 1");
  if (p.vocab < 1 || p.vocab > kAlphabetSize)
    throw config_error("sequence env: vocab must lie in [1, 64]");
  if (p.bit_block < 0 || p.bit_block > 16) throw config_error("sequence env: bad bit_block");
  if (p.bit_block > 0 && p.vocab != (1 << p.bit_block))
    throw config_error("sequence env: vocab must equal 2^bit_block");
  if (!p.reward) throw config_error("sequence env: missing reward module");
}

int SequenceEnv::num_actions(const Params& p) const {
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed: return p.vocab;
    case SeqScheme::kAutoregressiveVariable: return p.vocab + 1;
    case SeqScheme::kPrependAppend: return 2 * p.vocab;
    case SeqScheme::kNonAutoregressive: return p.max_len * p.vocab;
  }
  return 0;
}

int SequenceEnv::num_backward_actions(const Params& p) const {
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed: return 1;
    case SeqScheme::kAutoregressiveVariable: return 2;  // remove-last, un-stop
    case SeqScheme::kPrependAppend: return 2;           // remove-front, remove-back
    case SeqScheme::kNonAutoregressive: return p.max_len;
  }
  return 0;
}

int SequenceEnv::stop_action(const Params& p) const {
  return p.scheme == SeqScheme::kAutoregressiveVariable ? p.vocab : -1;
}

SequenceEnv::Instance SequenceEnv::reset_instance(const Params& p) const {
  validate(p);
  Instance inst;
  if (p.scheme == SeqScheme::kPrependAppend) {
    inst.tokens.assign(2 * p.max_len, -1);
    inst.lo = inst.hi = p.max_len;
  } else {
    inst.tokens.assign(p.max_len, -1);
  }
  return inst;
}

double SequenceEnv::step_instance(Instance& inst, int action, const Params& p) const {
  inst.step_count += 1;
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      inst.tokens[inst.filled++] = action;
      break;
    case SeqScheme::kAutoregressiveVariable:
      if (action == stop_action(p)) {
        inst.is_terminal = true;
        return log_reward_of(inst, p);
      }
      inst.tokens[inst.filled++] = action;
      return 0.0;
    case SeqScheme::kPrependAppend:
      if (action < p.vocab) {
        inst.tokens[--inst.lo] = action;  // prepend
      } else {
        inst.tokens[inst.hi++] = action - p.vocab;  // append
      }
      inst.filled += 1;
      break;
    case SeqScheme::kNonAutoregressive: {
      const int pos = action / p.vocab;
      inst.tokens[pos] = action % p.vocab;
      inst.filled += 1;
      break;
    }
  }
  if (p.scheme != SeqScheme::kAutoregressiveVariable && inst.filled == p.max_len) {
    inst.is_terminal = true;
    return log_reward_of(inst, p);
  }
  return 0.0;
}

void SequenceEnv::backward_step_instance(Instance& inst, int bwd_action, const Params& p) const {
  inst.step_count -= 1;
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      inst.tokens[--inst.filled] = -1;
      inst.is_terminal = false;
      break;
    case SeqScheme::kAutoregressiveVariable:
      if (bwd_action == 1) {
        inst.is_terminal = false;
        return;
      }
      inst.tokens[--inst.filled] = -1;
      break;
    case SeqScheme::kPrependAppend:
      if (bwd_action == 0) {
        inst.tokens[inst.lo++] = -1;  // remove front
      } else {
        inst.tokens[--inst.hi] = -1;  // remove back
      }
      inst.filled -= 1;
      inst.is_terminal = false;
      break;
    case SeqScheme::kNonAutoregressive:
      inst.tokens[bwd_action] = -1;
      inst.filled -= 1;
      inst.is_terminal = false;
      break;
  }
}

void SequenceEnv::action_mask(const Instance& inst, const Params& p, uint8_t* out) const {
  const int n = num_actions(p);
  std::fill(out, out + n, 0);
  if (inst.is_terminal) return;
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      std::fill(out, out + p.vocab, 1);
      break;
    case SeqScheme::kAutoregressiveVariable:
      if (inst.filled < p.max_len) std::fill(out, out + p.vocab, 1);
      out[p.vocab] = 1;  // stop is always available
      break;
    case SeqScheme::kPrependAppend:
      if (inst.filled == 0) {
        std::fill(out + p.vocab, out + 2 * p.vocab, 1);  // first symbol is an append
      } else {
        std::fill(out, out + 2 * p.vocab, 1);
      }
      break;
    case SeqScheme::kNonAutoregressive:
      for (int pos = 0; pos < p.max_len; ++pos)
        if (inst.tokens[pos] < 0)
          std::fill(out + pos * p.vocab, out + (pos + 1) * p.vocab, 1);
      break;
  }
}

void SequenceEnv::backward_action_mask(const Instance& inst, const Params& p,
                                       uint8_t* out) const {
  const int n = num_backward_actions(p);
  std::fill(out, out + n, 0);
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      out[0] = inst.filled > 0 ? 1 : 0;
      break;
    case SeqScheme::kAutoregressiveVariable:
      if (inst.is_terminal) {
        out[1] = 1;  // un-stop
      } else {
        out[0] = inst.filled > 0 ? 1 : 0;
      }
      break;
    case SeqScheme::kPrependAppend:
      out[0] = inst.filled >= 2 ? 1 : 0;  // remove-front needs length 2
      out[1] = inst.filled >= 1 ? 1 : 0;
      break;
    case SeqScheme::kNonAutoregressive:
      for (int pos = 0; pos < p.max_len; ++pos) out[pos] = inst.tokens[pos] >= 0 ? 1 : 0;
      break;
  }
}

int SequenceEnv::get_backward_action(const Instance& prev, int action, const Instance& next,
                                     const Params& p) const {
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      if (next.filled != prev.filled + 1) throw contract_violation("sequence: bad transition");
      return 0;
    case SeqScheme::kAutoregressiveVariable:
      if (action == stop_action(p)) {
        if (!next.is_terminal) throw contract_violation("sequence: bad stop transition");
        return 1;
      }
      return 0;
    case SeqScheme::kPrependAppend:
      return action < p.vocab ? 0 : 1;
    case SeqScheme::kNonAutoregressive: {
      const int pos = action / p.vocab;
      if (next.tokens[pos] != action % p.vocab)
        throw contract_violation("sequence: bad placement transition");
      return pos;
    }
  }
  throw contract_violation("sequence: unknown scheme");
}

int SequenceEnv::get_forward_action(const Instance& prev, int bwd_action, const Instance& next,
                                    const Params& p) const {
  (void)prev;
  switch (p.scheme) {
    case SeqScheme::kAutoregressiveFixed:
      return next.tokens[next.filled - 1];
    case SeqScheme::kAutoregressiveVariable:
      if (bwd_action == 1) return stop_action(p);
      return next.tokens[next.filled - 1];
    case SeqScheme::kPrependAppend:
      if (bwd_action == 0) return next.tokens[next.lo];            // was a prepend
      return p.vocab + next.tokens[next.hi - 1];                   // was an append
    case SeqScheme::kNonAutoregressive:
      return bwd_action * p.vocab + next.tokens[bwd_action];
  }
  throw contract_violation("sequence: unknown scheme");
}

void SequenceEnv::encode_obs(const Instance& inst, const Params& p, double* out) const {
  const int width = p.vocab + 1;
  std::fill(out, out + obs_dim(p), 0.0);
  for (int i = 0; i < p.max_len; ++i) {
    int tok = -1;
    if (p.scheme == SeqScheme::kPrependAppend) {
      if (i < inst.filled) tok = inst.tokens[inst.lo + i];
    } else {
      tok = inst.tokens[i];
    }
    out[i * width + (tok < 0 ? p.vocab : tok)] = 1.0;
  }
  out[p.max_len * width] = static_cast<double>(inst.filled) / p.max_len;
}

std::string SequenceEnv::encode_state(const Instance& inst, const Params& p) const {
  std::string s;
  s.reserve(p.max_len + 2);
  for (int i = 0; i < p.max_len; ++i) {
    int tok = -1;
    if (p.scheme == SeqScheme::kPrependAppend) {
      if (i < inst.filled) tok = inst.tokens[inst.lo + i];
    } else {
      tok = inst.tokens[i];
    }
    s += tok < 0 ? '.' : seq_symbol(tok);
  }
  if (inst.is_terminal) s += "|T";
  return s;
}

std::string SequenceEnv::encode_terminal(const Instance& inst, const Params& p) const {
  std::string s;
  const int base = p.scheme == SeqScheme::kPrependAppend ? inst.lo : 0;
  for (int i = 0; i < inst.filled; ++i) {
    const int tok = inst.tokens[base + i];
    if (p.bit_block > 0) {
      for (int b = p.bit_block - 1; b >= 0; --b) s += ((tok >> b) & 1) ? '1' : '0';
    } else {
      s += seq_symbol(tok);
    }
  }
  return s;
}

double SequenceEnv::log_reward_of(const Instance& inst, const Params& p) const {
  return p.reward->log_reward(encode_terminal(inst, p));
}

SequenceEnv::Instance SequenceEnv::terminal_from_key(const std::string& key,
                                                     const Params& p) const {
  Instance inst = reset_instance(p);
  std::vector<int> tokens;
  if (p.bit_block > 0) {
    if (key.size() % p.bit_block != 0)
      throw contract_violation("terminal_from_key: bit string length mismatch");
    for (size_t i = 0; i < key.size(); i += p.bit_block) {
      int w = 0;
      for (int b = 0; b < p.bit_block; ++b) {
        if (key[i + b] != '0' && key[i + b] != '1')
          throw contract_violation("terminal_from_key: not a bit string");
        w = (w << 1) | (key[i + b] == '1');
      }
      tokens.push_back(w);
    }
  } else {
    for (char c : key) tokens.push_back(seq_token(c));
  }
  const bool fixed_len = p.scheme != SeqScheme::kAutoregressiveVariable;
  if (fixed_len && static_cast<int>(tokens.size()) != p.max_len)
    throw contract_violation("terminal_from_key: wrong terminal length");
  if (static_cast<int>(tokens.size()) > p.max_len)
    throw contract_violation("terminal_from_key: sequence too long");
  const int base = p.scheme == SeqScheme::kPrependAppend ? inst.lo : 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= p.vocab) throw contract_violation("terminal_from_key: token out of vocab");
    inst.tokens[base + i] = tokens[i];
  }
  if (p.scheme == SeqScheme::kPrependAppend) inst.hi = inst.lo + static_cast<int>(tokens.size());
  inst.filled = static_cast<int>(tokens.size());
  inst.step_count = inst.filled + (p.scheme == SeqScheme::kAutoregressiveVariable ? 1 : 0);
  inst.is_terminal = true;
  return inst;
}

}  // namespace gfn
