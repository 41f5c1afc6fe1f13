#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uqevo::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// FNV-1a 64 content digest, "fnv1a64:<16 hex>"; used in run manifests to
// make stale-input mixups detectable.
std::string file_digest(const std::string& path);

// Entry point used by the binary and by in-process tests. argv excludes the
// program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace uqevo::cli
