#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gaf {

/// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage.
inline constexpr int exit_runtime_error = 1;
inline constexpr int exit_config_error = 2;

/// Runs `gaf <subcommand> [options]`; `args` excludes the program name.
/// Failures print one JSON line {"error": kind, "message": text} to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Keeps freed tape buffers on the heap instead of returning them to the OS
/// after every step (glibc only; a no-op elsewhere). Call once from main().
void tune_allocator();

std::string code_version();

}  // namespace gaf
