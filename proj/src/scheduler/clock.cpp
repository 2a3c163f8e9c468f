#include "opflow/scheduler/clock.hpp"

#include <thread>

namespace opflow {

Timestamp SystemClock::now() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void SystemClock::sleep_for(std::chrono::duration<double> d) {
  std::this_thread::sleep_for(d);
}

void ManualClock::sleep_for(std::chrono::duration<double> d) {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
  t_.fetch_add(us);
  slept_.fetch_add(us);
}

}  // namespace opflow
