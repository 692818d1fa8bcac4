#include "gait/config.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

#include "gait/errors.hpp"
#include "gait/io.hpp"

namespace gait::cfg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key, double fallback) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "' is not a number: '" + it->second + "'");
  return v;
}

std::int64_t Config::integer(const std::string& key, std::int64_t fallback) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "' is not an integer: '" + it->second + "'");
  return v;
}

bool Config::boolean(const std::string& key, bool fallback) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
  std::vector<std::string> out;
  const auto it = kv.find(key);
  if (it == kv.end()) return out;
  std::string item;
  std::istringstream ss(it->second);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Config parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    c.kv[section.empty() ? key : section + "." + key] = value;
  }
  return c;
}

Config parse_file(const std::string& path) { return parse(io::read_text(path)); }

std::string canonical(const Config& c) {
  // bucket by section; std::map already orders both levels
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [key, value] : c.kv) {
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      sections[""][key] = value;
    else
      sections[key.substr(0, dot)][key.substr(dot + 1)] = value;
  }
  std::ostringstream os;
  for (const auto& [name, keys] : sections) {
    if (!name.empty()) os << '[' << name << "]\n";
    for (const auto& [k, v] : keys) os << k << " = " << v << '\n';
  }
  return os.str();
}

std::uint64_t hash(const Config& c) {
  const std::string text = canonical(c);
  return io::fnv1a64(text.data(), text.size());
}

}  // namespace gait::cfg
