#pragma once

#include <atomic>
#include <chrono>

#include "opflow/state/step_record.hpp"

namespace opflow {

/// Time source for record timestamps and retry backoff.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() = 0;
  virtual void sleep_for(std::chrono::duration<double> d) = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() override;
  void sleep_for(std::chrono::duration<double> d) override;
};

/// Deterministic clock: every `now` call advances one microsecond, so reads
/// are strictly ordered; `sleep_for` advances time without blocking.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start = 1'700'000'000'000'000) : t_(start) {}
  Timestamp now() override { return t_.fetch_add(1) + 1; }
  void sleep_for(std::chrono::duration<double> d) override;
  /// Total time passed to sleep_for.
  std::chrono::microseconds slept() const { return std::chrono::microseconds(slept_.load()); }

 private:
  std::atomic<Timestamp> t_;
  std::atomic<std::int64_t> slept_{0};
};

}  // namespace opflow
