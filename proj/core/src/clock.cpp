#include "rewardkit/clock.hpp"

#include <thread>

namespace rewardkit {

Clock::time_point SystemClock::now() {
  auto since = std::chrono::system_clock::now().time_since_epoch();
  return time_point(std::chrono::duration_cast<duration>(since));
}

void SystemClock::sleep_until(time_point deadline) {
  const auto remaining = deadline - now();
  if (remaining > duration::zero()) std::this_thread::sleep_for(remaining);
}

Clock::time_point SimulatedClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void SimulatedClock::sleep_until(time_point deadline) {
  std::lock_guard lock(mu_);
  if (deadline > now_) now_ = deadline;
}

void SimulatedClock::advance(duration d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

}  // namespace rewardkit
