#include "metasci/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace metasci {

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  c.source_ = source;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, c.tree_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : c.tree_) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(source + ": key '" + section + "' must appear inside a [section]");
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* Config::raw(const std::string& section, const std::string& key) const {
  used_.insert(section + "." + key);
  const auto sec = tree_.find(section);
  if (sec == tree_.not_found()) return nullptr;
  const auto it = sec->second.find(key);
  if (it == sec->second.not_found()) return nullptr;
  return &it->second.data();
}

bool Config::has(const std::string& section, const std::string& key) const { return raw(section, key) != nullptr; }

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  tree_.put(boost::property_tree::ptree::path_type(section + "." + key, '.'), value);
}

void Config::bad_value(const std::string& section, const std::string& key, const std::string& what) const {
  throw ConfigError(source_ + ": [" + section + "] " + key + ": " + what);
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(section, key);
  return v ? *v : fallback;
}

std::string Config::require_string(const std::string& section, const std::string& key) const {
  const std::string* v = raw(section, key);
  if (!v || v->empty()) bad_value(section, key, "required");
  return *v;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  const std::string* v = raw(section, key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    const double d = std::stod(*v, &pos);
    if (pos == v->size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(section, key, "expected a number, got '" + *v + "'");
}

std::uint64_t Config::get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const std::string* v = raw(section, key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    if (!v->empty() && (*v)[0] != '-') {
      const unsigned long long n = std::stoull(*v, &pos);
      if (pos == v->size()) return n;
    }
  } catch (const std::exception&) {
  }
  bad_value(section, key, "expected a non-negative integer, got '" + *v + "'");
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const std::string* v = raw(section, key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(section, key, "expected true/false, got '" + *v + "'");
}

void Config::reject_unknown() const {
  std::string unknown;
  for (const auto& [section, body] : tree_)
    for (const auto& [key, value] : body) {
      if (!used_.count(section + "." + key)) unknown += (unknown.empty() ? "" : ", ") + section + "." + key;
    }
  if (!unknown.empty()) throw ConfigError(source_ + ": unknown keys: " + unknown);
}

}  // namespace metasci
