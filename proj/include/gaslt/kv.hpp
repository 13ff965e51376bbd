#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaslt/errors.hpp"

namespace gaslt {

// Flat key=value file: one pair per line, '#' comments, blank lines ignored.
// Configs, manifests and metric reports all use this shape.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t eol = text.find('\n', pos);
      std::string line = text.substr(
          pos, eol == std::string::npos ? std::string::npos : eol - pos);
      pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
      ++line_no;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": expected key=value, got '" + line + "'");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    try {
      return parse(text);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (index_.count(key)) throw ConfigError("duplicate key '" + key + "'");
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
  }

  bool has(const std::string& key) const { return index_.count(key) > 0; }

  const std::string& require(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing key '" + key + "'");
    return entries_[it->second].second;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = index_.find(key);
    return it == index_.end() ? fallback : entries_[it->second].second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, require(key)) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? to_int(key, require(key)) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = require(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v +
                      "'");
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << serialize();
    if (!out) throw IoError("failed writing " + path.string());
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }
  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v +
                        "'");
    }
  }
  static long long to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + v +
                        "'");
    }
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gaslt
