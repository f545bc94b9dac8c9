#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tatrack {

/// Flat "key = value" settings. '#' starts a comment; blank lines are skipped.
using KeyValues = std::map<std::string, std::string>;

/// LoadError naming file and line on malformed input.
KeyValues read_key_values(const std::filesystem::path& file);
/// Parses "key=value" strings (command-line overrides) into `kv`, replacing
/// existing keys. ConfigError on a missing '='.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& overrides);

double parse_double(const std::string& key, const std::string& value);
int64_t parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace tatrack
