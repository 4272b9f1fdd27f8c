#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clt/common.hpp"

namespace clt {

// Flat UTF-8 key = value file with optional [section] headers; keys under a
// section are addressed as "section.key". Comments start with '#'. Insertion
// order is preserved so serialization is deterministic.
class KvFile {
 public:
  static KvFile parse_file(const std::string& path);
  static KvFile parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t value);
  void set_double(const std::string& key, double value);
  void set_bool(const std::string& key, bool value);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string serialize() const;
  void write_file(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace clt
