#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdha/errors.hpp"

namespace sdha {

// `key = value` lines, `#` comments, dotted keys.
class ConfigFile {
 public:
  struct Entry {
    std::string key, value;
    int line = 0;
  };

  static ConfigFile parse(std::istream& in, const std::string& source) {
    ConfigFile cf;
    cf.source_ = source;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
      if (e.key.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
      for (char c : e.key)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_'))
          throw ParseError(source + ":" + std::to_string(lineno) + ": invalid key '" + e.key + "'");
      if (cf.index_.count(e.key))
        throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate key '" + e.key + "'");
      cf.index_[e.key] = cf.entries_.size();
      cf.entries_.push_back(std::move(e));
    }
    return cf;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open config file");
    return parse(in, path);
  }

  const std::string& source() const { return source_; }
  const std::vector<Entry>& entries() const { return entries_; }
  bool has(const std::string& key) const { return index_.count(key) > 0; }

  const Entry* find(const std::string& key) const {
    const auto it = index_.find(key);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::string where(const std::string& key) const {
    const Entry* e = find(key);
    return source_ + (e ? ":" + std::to_string(e->line) : std::string()) + ": ";
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ParseError(where(key) + msg); }

  std::string str(const std::string& key, const std::string& def) const {
    const Entry* e = find(key);
    return e ? e->value : def;
  }
  std::string str(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ParseError(source_ + ": missing required key '" + key + "'");
    return e->value;
  }

  double num(const std::string& key) const { return to_double(key, str(key)); }
  double num(const std::string& key, double def) const { return has(key) ? num(key) : def; }

  long long integer(const std::string& key) const {
    const std::string v = str(key);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used == v.size()) return x;
    } catch (const std::logic_error&) {
    }
    fail(key, "'" + v + "' is not an integer");
  }
  long long integer(const std::string& key, long long def) const { return has(key) ? integer(key) : def; }

  std::uint64_t u64(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const std::string v = str(key);
    try {
      std::size_t used = 0;
      const unsigned long long x = std::stoull(v, &used, 0);
      if (used == v.size() && v.find('-') == std::string::npos) return x;
    } catch (const std::logic_error&) {
    }
    fail(key, "'" + v + "' is not an unsigned integer");
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::string item;
    std::istringstream ss(str(key));
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
  }
  std::vector<std::string> words(const std::string& key, const std::string& def) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(str(key, def));
    while (std::getline(ss, item, ','))
      if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
  }

  // every key must be in `allowed` or start with one of `prefixes`
  void restrict_keys(const std::set<std::string>& allowed, const std::vector<std::string>& prefixes = {}) const {
    for (const auto& e : entries_) {
      if (allowed.count(e.key)) continue;
      bool ok = false;
      for (const auto& p : prefixes) ok = ok || e.key.rfind(p, 0) == 0;
      if (!ok) throw ParseError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
  }

  static std::string trim(const std::string& x) {
    const auto b = x.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = x.find_last_not_of(" \t\r");
    return x.substr(b, e - b + 1);
  }

 private:
  double to_double(const std::string& key, const std::string& v) const {
    std::istringstream ss(v);
    ss.imbue(std::locale::classic());
    double x;
    if (ss >> x) {
      ss >> std::ws;
      if (ss.eof()) return x;
    }
    fail(key, "'" + v + "' is not a number");
  }

  std::string source_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace sdha
