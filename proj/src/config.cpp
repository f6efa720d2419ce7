#include "gfn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gfn/errors.hpp"

namespace gfn {

namespace {
std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}
}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("config: cannot open " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: missing '=' at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("config: empty key at line " + std::to_string(lineno));
    if (cfg.from_file_.count(key))
      throw config_error("config: duplicate key '" + key + "' at line " + std::to_string(lineno));
    cfg.values_[key] = value;
    cfg.from_file_.insert(key);
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  from_file_.insert(key);
}

void Config::set_default(const std::string& key, const std::string& value) {
  values_.emplace(key, value);
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("config: missing key '" + key + "'");
  consumed_.insert(key);
  return it->second;
}

int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);  // accepts 1e5 style counts
    if (pos != v.size()) throw config_error("");
    const int64_t i = static_cast<int64_t>(d);
    if (static_cast<double>(i) != d) throw config_error("");
    return i;
  } catch (...) {
    throw config_error("config: key '" + key + "' is not an integer: " + v);
  }
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw config_error("");
    return d;
  } catch (...) {
    throw config_error("config: key '" + key + "' is not a number: " + v);
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config: key '" + key + "' is not a boolean: " + v);
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(std::stol(item)));
  }
  if (out.empty()) throw config_error("config: key '" + key + "' is an empty list");
  return out;
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string Config::get_string(const std::string& key, const std::string& def) {
  set_default(key, def);
  return get_string(key);
}

int64_t Config::get_int(const std::string& key, int64_t def) {
  set_default(key, std::to_string(def));
  return get_int(key);
}

double Config::get_double(const std::string& key, double def) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", def);
  set_default(key, buf);
  return get_double(key);
}

bool Config::get_bool(const std::string& key, bool def) {
  set_default(key, def ? "true" : "false");
  return get_bool(key);
}

std::vector<int> Config::get_int_list(const std::string& key, const std::vector<int>& def) {
  std::string s;
  for (size_t i = 0; i < def.size(); ++i) s += (i ? "," : "") + std::to_string(def[i]);
  set_default(key, s);
  return get_int_list(key);
}

void Config::ensure_all_consumed() const {
  std::string unknown;
  for (const auto& key : from_file_)
    if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  if (!unknown.empty()) throw config_error("config: unknown keys: " + unknown);
}

std::string Config::resolved() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace gfn
