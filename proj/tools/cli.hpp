#pragma once

#include <string>
#include <vector>

namespace sardist::cli {

/// Parses and runs one subcommand. Returns 0 on success, 1 for usage and
/// validation failures and 2 for I/O failures. `args` excludes the program name.
int run(const std::vector<std::string>& args);

int main(int argc, char** argv);

}  // namespace sardist::cli
