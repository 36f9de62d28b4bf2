#include "mapgo/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "mapgo/errors.hpp"

namespace mapgo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

nlohmann::json scalar(const std::string& t) {
  if (t.empty()) throw ParseError("empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw ParseError("unterminated string " + t);
    return t.substr(1, t.size() - 2);
  }
  if (t == "true") return true;
  if (t == "false") return false;
  std::size_t used = 0;
  try {
    if (t.find_first_of(".eE") == std::string::npos || t.find_first_of("xX") != std::string::npos) {
      const long long v = std::stoll(t, &used);
      if (used == t.size()) return v;
    }
    const double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  // Bare words are accepted as strings (e.g. variant = V2).
  for (char c : t)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '/'))
      throw ParseError("cannot parse value '" + t + "'");
  return t;
}

}  // namespace

nlohmann::json parse_config_value(const std::string& text) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw ParseError("unterminated array " + t);
    nlohmann::json arr = nlohmann::json::array();
    const std::string body = trim(t.substr(1, t.size() - 2));
    if (body.empty()) return arr;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) arr.push_back(scalar(trim(item)));
    return arr;
  }
  return scalar(t);
}

nlohmann::json parse_config(std::istream& in) {
  nlohmann::json out = nlohmann::json::object();
  std::string line, section;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    try {
      if (t.front() == '[') {
        if (t.back() != ']') throw ParseError("bad section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParseError("expected key = value");
      std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw ParseError("empty key");
      if (!section.empty()) key = section + "." + key;
      if (out.contains(key)) throw ParseError("duplicate key '" + key + "'");
      out[key] = parse_config_value(t.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ParseError(static_cast<std::size_t>(no), e.what());
    }
  }
  return out;
}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  return parse_config(in);
}

void apply_assignment(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ParseError("override must look like key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ParseError("override has an empty key");
  cfg[key] = parse_config_value(assignment.substr(eq + 1));
}

std::string format_config(const nlohmann::json& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.items()) os << k << " = " << v.dump() << "\n";
  return os.str();
}

}  // namespace mapgo
