#pragma once

#include <string>
#include <vector>

namespace sardist::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks over every module, runnable from the command line.
std::vector<CheckResult> run_selftest(unsigned threads);

}  // namespace sardist::cli
