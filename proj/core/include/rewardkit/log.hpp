#pragma once

#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string_view>
#include <utility>

namespace rewardkit {

enum class LogLevel { kDebug, kInfo, kWarn, kError };

// Line-delimited JSON log records: {"level":..,"event":..,<fields>}.
class Logger {
 public:
  explicit Logger(std::ostream* sink = nullptr, LogLevel min_level = LogLevel::kInfo)
      : sink_(sink), min_level_(min_level) {}

  void log(LogLevel level, std::string_view event, nlohmann::json fields = {});
  void info(std::string_view event, nlohmann::json fields = {}) {
    log(LogLevel::kInfo, event, std::move(fields));
  }
  void warn(std::string_view event, nlohmann::json fields = {}) {
    log(LogLevel::kWarn, event, std::move(fields));
  }
  void error(std::string_view event, nlohmann::json fields = {}) {
    log(LogLevel::kError, event, std::move(fields));
  }
  void debug(std::string_view event, nlohmann::json fields = {}) {
    log(LogLevel::kDebug, event, std::move(fields));
  }

  void set_sink(std::ostream* sink) {
    std::lock_guard lock(mu_);
    sink_ = sink;
  }

 private:
  std::mutex mu_;
  std::ostream* sink_;
  LogLevel min_level_;
};

// Discards everything.
Logger& null_logger();

}  // namespace rewardkit
