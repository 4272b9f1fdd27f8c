#pragma once

#include <string>
#include <vector>

#include "clt/kvconfig.hpp"

namespace clt {

// Entry point behind the command-line tool. Subcommands:
//   pretrain | distill | finetune | evaluate | profile | mine-corners
// Exit status: 0 success, 1 runtime error, 2 usage error, 3 config error.
int run(int argc, const char* const* argv);

// Cross-field validation of a merged run configuration; returns every
// violation at once rather than stopping at the first.
std::vector<std::string> validate_config(const std::string& command, const KvFile& cfg);

}  // namespace clt
