#pragma once

#include <string>

#include "binshield/config.hpp"

namespace binshield {

enum class Command { Synth, Discretize, Train, Attack, Evaluate, Reproduce };

Command command_from_string(const std::string& s);

/// Runs one pipeline stage. Each stage reads its predecessors' artifacts
/// from the output directory and writes its own; `reproduce` runs the whole
/// chain in one process. Returns the process exit code (0 success, 2 config
/// error, 3 stage error).
int execute(Command command, const CliConfig& config);

/// Full CLI entry point (argument parsing included); used by tools/main.
int run_cli(int argc, const char* const* argv);

}  // namespace binshield
