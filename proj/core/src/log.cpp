#include "rewardkit/log.hpp"

namespace rewardkit {
namespace {

std::string_view level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
  }
  return "info";
}

}  // namespace

void Logger::log(LogLevel level, std::string_view event, nlohmann::json fields) {
  if (level < min_level_) return;
  nlohmann::json record = nlohmann::json::object();
  record["level"] = level_name(level);
  record["event"] = event;
  if (fields.is_object()) {
    for (auto& [key, value] : fields.items()) record[key] = value;
  }
  std::lock_guard lock(mu_);
  if (sink_ == nullptr) return;
  *sink_ << record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
         << '\n';
  sink_->flush();
}

Logger& null_logger() {
  static Logger logger(nullptr);
  return logger;
}

}  // namespace rewardkit
