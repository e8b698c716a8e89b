#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rewardkit {

enum class ErrorKind {
  kConfig,
  kIo,
  kProvider,
  kValidation,
  kMedia,
  kRange,
  kConflict,
  kPrecondition,
  kStage,
  kNotFound,
};

std::string_view to_string(ErrorKind kind);

// Process exit code for an error class: config=2, I/O=3, provider=4,
// validation=5. Media failures are I/O-class; range, precondition, stage and
// conflict errors are validation-class.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rewardkit
