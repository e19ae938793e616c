#pragma once

#include <filesystem>
#include <ostream>

namespace sinddm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Output root: $SINDDM_RUNS_DIR, else ./runs.
std::filesystem::path default_runs_dir();

/// Entry point of the command-line tool; argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sinddm
