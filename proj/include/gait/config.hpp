#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

/// Flat sectioned key-value configuration. Keys are addressed as
/// "section.key" ("key" alone for the unsectioned prologue). The canonical
/// rendering (sections and keys sorted) backs a stable 64-bit hash that
/// tags checkpoints and reports.
namespace gait::cfg {

struct Config {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { kv[key] = value; }

  std::string str(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double num(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;

  /// Comma-separated list value, items trimmed.
  std::vector<std::string> list(const std::string& key) const;
};

Config parse(const std::string& text);
Config parse_file(const std::string& path);

/// Sorted, normalized `[section]` / `key = value` text; parsing it back
/// yields an equal Config.
std::string canonical(const Config& c);

/// FNV-1a of the canonical text.
std::uint64_t hash(const Config& c);

}  // namespace gait::cfg
