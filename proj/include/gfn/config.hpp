#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace gfn {

// Flat dotted-key configuration. Values come from defaults installed by the
// run builder plus a `key = value` text file; unknown file keys are hard
// errors so hyperparameter typos cannot pass silently.
class Config {
 public:
  static Config from_file(const std::string& path);
  Config() = default;

  void set(const std::string& key, const std::string& value);  // file/CLI override
  void set_default(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;  // comma separated
  std::vector<std::string> get_string_list(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def);
  int64_t get_int(const std::string& key, int64_t def);
  double get_double(const std::string& key, double def);
  bool get_bool(const std::string& key, bool def);
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def);

  // Throws config_error listing file keys that nothing consumed.
  void ensure_all_consumed() const;
  // Deterministic echo of the resolved configuration (sorted keys).
  std::string resolved() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> from_file_;
  mutable std::set<std::string> consumed_;
};

}  // namespace gfn
