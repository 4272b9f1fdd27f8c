#include "clt/kvconfig.hpp"

#include <fstream>
#include <sstream>

namespace clt {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvFile KvFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

KvFile KvFile::parse_string(const std::string& text) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config: malformed section header at line " + std::to_string(lineno));
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at line " + std::to_string(lineno) + ": " + t);
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
    if (!section.empty()) key = section + "." + key;
    kv.set(key, value);
  }
  return kv;
}

bool KvFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KvFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw ConfigError("config: missing key '" + key + "'");
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::int64_t KvFile::get_int(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  try {
    return std::stoll(v);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not an integer: " + v);
  }
}

double KvFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: " + v);
  }
}

bool KvFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvFile::set_int(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KvFile::set_double(const std::string& key, double value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  set(key, os.str());
}

void KvFile::set_bool(const std::string& key, bool value) {
  set(key, value ? "true" : "false");
}

std::string KvFile::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

void KvFile::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  out << serialize();
}

}  // namespace clt
