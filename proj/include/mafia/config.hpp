#pragma once

#include <map>
#include <string>
#include <vector>

#include "mafia/common.hpp"

namespace mafia {

// Campaign description files: flat key = value lines, '#' or ';' comments,
// blank lines ignored. Values keep their raw text; the typed getters parse
// on demand and throw ToolError with the offending key in the message.
struct ConfigFile {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get(const std::string& key, const std::string& dflt) const;
  u64 get_u64(const std::string& key, u64 dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  // Comma-separated list, items trimmed, empty items dropped.
  std::vector<std::string> get_list(const std::string& key) const;
};

ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);

}  // namespace mafia
