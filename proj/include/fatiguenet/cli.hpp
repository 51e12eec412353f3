#pragma once
#include <string>
#include <vector>

namespace fatiguenet::cli {

// argv without the program name, e.g. {"train", "--config", "c.json"}.
// Exit codes: 0 success, 1 stage failure, 2 usage.
int run_command(const std::vector<std::string>& args);

int run_command(int argc, const char* const* argv);

}  // namespace fatiguenet::cli
