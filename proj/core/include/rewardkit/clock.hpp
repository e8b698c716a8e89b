#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>

namespace rewardkit {

// Time source shared by pacing, retry backoff, latency and lease expiry so
// tests can drive them from a simulated clock.
class Clock {
 public:
  using duration = std::chrono::milliseconds;
  using time_point = std::chrono::time_point<Clock, duration>;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point deadline) = 0;

  void sleep_for(duration d) { sleep_until(now() + d); }
  std::int64_t now_ms() { return now().time_since_epoch().count(); }
};

class SystemClock final : public Clock {
 public:
  time_point now() override;
  void sleep_until(time_point deadline) override;
};

// Virtual time that only moves when someone sleeps or advance() is called.
// A sleeper jumps the clock forward to its deadline if it is later than now.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(std::int64_t start_ms = 0)
      : now_(duration(start_ms)) {}

  time_point now() override;
  void sleep_until(time_point deadline) override;
  void advance(duration d);

 private:
  std::mutex mu_;
  time_point now_;
};

Clock& system_clock();

}  // namespace rewardkit
