#include "mafia/config.hpp"

#include <fstream>
#include <sstream>

namespace mafia {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string ConfigFile::get(const std::string& key,
                            const std::string& dflt) const {
  auto it = values.find(key);
  return it == values.end() ? dflt : it->second;
}

u64 ConfigFile::get_u64(const std::string& key, u64 dflt) const {
  auto it = values.find(key);
  if (it == values.end()) return dflt;
  try {
    size_t pos = 0;
    const u64 v = std::stoull(it->second, &pos, 0);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ToolError("config key '" + key + "': not a number: " + it->second);
  }
}

bool ConfigFile::get_bool(const std::string& key, bool dflt) const {
  auto it = values.find(key);
  if (it == values.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ToolError("config key '" + key + "': not a boolean: " + v);
}

std::vector<std::string> ConfigFile::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = values.find(key);
  if (it == values.end()) return out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile cf;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ToolError("config line " + std::to_string(lineno) +
                      ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ToolError("config line " + std::to_string(lineno) + ": empty key");
    cf.values[key] = val;
  }
  return cf;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ToolError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace mafia
