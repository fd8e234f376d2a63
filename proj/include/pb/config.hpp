#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pb {

// config file problem: exit code 2 territory
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value configuration with [section] headers. Keys are flattened
// to "section.key"; bare "key=value" arguments override file entries.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& file);
  static Config from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  // comma-separated list of reals
  std::vector<double> get_list(const std::string& key,
                               std::vector<double> fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  // canonical one-line-per-key echo used in manifests
  std::string echo() const;

 private:
  std::map<std::string, std::string> kv_;
};

// FNV-1a content hash, hex-encoded; identifies config inputs in manifests
std::string content_hash(const std::string& bytes);

}  // namespace pb
