#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "bilevel/errors.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Flat key-value configuration with dotted keys:
///   # comment
///   solver.kind = adabim
///   budget.max_grad_evals = 100000
class KvConfig {
 public:
  static KvConfig parse(std::istream& in) {
    KvConfig cfg;
    std::string line;
    long long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) +
                          ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string val = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      cfg.kv_[key] = val;
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in);
  }

  void set(const std::string& key, const std::string& val) { kv_[key] = val; }

  /// Applies a "key=value" override (the CLI --set flag).
  void set_pair(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + pair + "'");
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad number '" + it->second + "'");
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad integer '" + it->second +
                        "'");
    }
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second == "true" || it->second == "on" || it->second == "1")
      return true;
    if (it->second == "false" || it->second == "off" || it->second == "0")
      return false;
    throw ConfigError("key '" + key + "': bad boolean '" + it->second + "'");
  }

  /// Comma-separated list of doubles, e.g. "1,2.5,-3".
  Vec get_vec(const std::string& key, const Vec& dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    Vec out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': bad number '" + tok + "'");
      }
    }
    return out;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace bilevel
