#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gpufail::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point behind the gpufail executable. Exit codes: 0 success, 2 usage
/// or configuration error, 1 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// SHA-256 of every regular file under `dir` keyed by relative path, skipping
/// the manifest and the hash list itself.
std::map<std::string, std::string> hash_directory(const std::string& dir);

}  // namespace gpufail::cli
