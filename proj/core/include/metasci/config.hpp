#pragma once

// Flat INI-style run configuration: `[section]` headers, `key = value` lines,
// `;` comments.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <boost/property_tree/ptree.hpp>

#include "metasci/error.hpp"

namespace metasci {

class Config {
 public:
  Config() = default;

  /// Throws ConfigError carrying the source name and line number on syntax errors.
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;

  /// Throws ConfigError naming every key that no getter asked for.
  void reject_unknown() const;

  const std::string& source() const noexcept { return source_; }

 private:
  const std::string* raw(const std::string& section, const std::string& key) const;
  [[noreturn]] void bad_value(const std::string& section, const std::string& key, const std::string& what) const;

  boost::property_tree::ptree tree_;
  std::string source_ = "<config>";
  mutable std::set<std::string> used_;
};

}  // namespace metasci
