#pragma once

#include <atomic>
#include <ostream>

namespace rewardkit::cli {

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 ok, 2 config, 3 I/O, 4 provider, 5 validation, 130 interrupted.
// `cancel` is polled between units of work for a clean drain.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* cancel = nullptr);

}  // namespace rewardkit::cli
