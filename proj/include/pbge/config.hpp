#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pbge/common.hpp"

namespace pbge {

/// Flat `key = value` text with `#` comments. Keys may be dotted
/// (`ppo.n_steps`); later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& origin = "<stream>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void merge(const KeyValueConfig& other);

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Entries under `prefix.` with the prefix stripped.
  KeyValueConfig section(const std::string& prefix) const;
  std::vector<std::string> keys() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal that reads back to the same double.
std::string format_double(double value);

}  // namespace pbge
