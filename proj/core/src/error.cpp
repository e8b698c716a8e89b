#include "rewardkit/error.hpp"

namespace rewardkit {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kProvider: return "provider";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kMedia: return "media";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kStage: return "stage";
    case ErrorKind::kNotFound: return "not_found";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kIo:
    case ErrorKind::kMedia:
    case ErrorKind::kNotFound: return 3;
    case ErrorKind::kProvider: return 4;
    case ErrorKind::kValidation:
    case ErrorKind::kRange:
    case ErrorKind::kConflict:
    case ErrorKind::kPrecondition:
    case ErrorKind::kStage: return 5;
  }
  return 1;
}

}  // namespace rewardkit
