#pragma once

#include <string>

#include "qdit/config.hpp"

namespace qdit {

// Each command materializes the model named by the config, runs its flow,
// and writes its reports plus the resolved config into out_dir.
void cmd_stats(const RunConfig& cfg, const std::string& out_dir);
void cmd_quantize(const RunConfig& cfg, const std::string& out_dir);
void cmd_search(const RunConfig& cfg, const std::string& out_dir);
void cmd_eval(const RunConfig& cfg, const std::string& out_dir);

// Parses `qdit stats|quantize|search|eval --config <path> --out <dir>` and
// dispatches. Returns the process exit code: 0 success, 2 configuration
// problem, 3 any other failure.
int run_cli(int argc, const char* const* argv);

}  // namespace qdit
