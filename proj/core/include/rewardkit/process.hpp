#pragma once

#include <string>
#include <vector>

namespace rewardkit {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv[0] (PATH lookup) with the given arguments, capturing stdout and
// stderr. stdin is /dev/null. Throws Error(kIo) if the program cannot start.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace rewardkit
