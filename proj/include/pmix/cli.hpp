#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace pmix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kOutDirEnv = "PMIX_OUT_DIR";
inline constexpr const char* kVersion = "0.1.0";

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Fills defaults and rejects unknown keys; throws config errors.
nlohmann::json resolve_config(const nlohmann::json& raw, const std::string& command);

// Drops every member named "timing", recursively.
nlohmann::json strip_timing(const nlohmann::json& report);

}  // namespace pmix::cli
