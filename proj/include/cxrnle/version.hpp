#pragma once

#include <cxrnle/rules.hpp>

#include <cstdio>
#include <string>

namespace cxrnle {

inline constexpr const char* kVersion = "1.0.0";

// "<semver> (rules <fnv-1a of the rule table>)"
inline std::string version_string() {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(rule_table_hash()));
  return std::string(kVersion) + " (rules " + hash + ")";
}

} // namespace cxrnle
