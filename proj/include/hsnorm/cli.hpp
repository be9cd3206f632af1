#pragma once

#include "hsnorm/common.hpp"

#include <string>
#include <vector>

namespace hsnorm {

// 2 config, 3 dataset missing, 4 numerical abort, 1 anything else.
int exit_code_for(ErrorKind kind);

// Entry point for the `hsnorm` tool: train, predict, eval, baseline, export
// and bench. Failures print one line, `error: <category>: <message>`.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace hsnorm
