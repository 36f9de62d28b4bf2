#pragma once

// TOML-style key/value configuration: `key = value` lines, `#` comments,
// optional `[section]` headers that prefix keys as `section.key`. Values
// are numbers, booleans, quoted strings or flat arrays of those.

#include <filesystem>
#include <istream>
#include <string>

#include "json.hpp"

namespace mapgo {

nlohmann::json parse_config_value(const std::string& text);
/// Flat object of every key in the stream. Throws ParseError with the line
/// number on malformed input or duplicate keys.
nlohmann::json parse_config(std::istream& in);
nlohmann::json load_config(const std::filesystem::path& path);
/// Applies a `key=value` override onto a flat object.
void apply_assignment(nlohmann::json& cfg, const std::string& assignment);
/// Writes a flat object back in the same format, keys sorted.
std::string format_config(const nlohmann::json& cfg);

}  // namespace mapgo
