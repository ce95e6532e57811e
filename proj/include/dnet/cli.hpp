#pragma once

#include <string>
#include <vector>

namespace dnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Entry point of the dnet executable. Subcommands: train, denoise, eval,
// profile, visualize, classify-train, route, synth.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace dnet::cli
