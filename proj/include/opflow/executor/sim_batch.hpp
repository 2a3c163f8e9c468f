#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "opflow/model/workflow.hpp"

namespace opflow {

enum class JobState { Queued, Running, Completed, Failed, TimedOut };

std::string_view to_string(JobState state);
std::optional<JobState> parse_job_state(std::string_view text);
inline bool is_terminal(JobState s) {
  return s == JobState::Completed || s == JobState::Failed || s == JobState::TimedOut;
}

/// Job metadata as stored under `<work_root>/jobs/<job_id>/`:
///   script command walltime submit_time state     (written by the submitter)
///   start_time finish_time exit_code log workdir/ (written by the simulator)
/// Times are nanoseconds since the epoch.
struct BatchJob {
  std::string job_id;
  std::filesystem::path script_path;
  JobState state = JobState::Queued;
  std::int64_t submit_time = 0;
  std::optional<std::int64_t> start_time;
  std::optional<std::int64_t> finish_time;
  std::optional<int> exit_code;
};

struct SimOptions {
  int workers = 4;
  /// How often the jobs directory is scanned for file-submitted jobs.
  std::chrono::milliseconds scan_interval{20};
};

/// In-process stand-in for a batch scheduler. Jobs run FIFO by submit time on
/// a fixed worker pool; a job exceeding its walltime is killed and marked
/// TimedOut. Jobs can be submitted through `submit` or by any process that
/// publishes a complete job directory (see DispatcherExecutor).
class SimBatchSystem {
 public:
  explicit SimBatchSystem(std::filesystem::path work_root, SimOptions options = {});
  ~SimBatchSystem();
  SimBatchSystem(const SimBatchSystem&) = delete;
  SimBatchSystem& operator=(const SimBatchSystem&) = delete;

  void start();
  /// Stops accepting work; waits for running jobs to finish.
  void stop();

  /// Enqueues `script` (the job body) with a sim-dialect header for `resources`.
  BatchJob submit(const std::filesystem::path& script, const ResourceSpec& resources,
                  std::vector<std::string> command = {"sh"});
  /// Current state. Throws Error(UnknownJobId).
  JobState poll(const std::string& job_id) const;
  BatchJob job(const std::string& job_id) const;
  /// Blocks until the job is terminal or `limit` elapses; returns the last state.
  JobState wait(const std::string& job_id, std::chrono::milliseconds limit) const;

  std::filesystem::path jobs_dir() const { return work_root_ / "jobs"; }

 private:
  void scan_loop();
  void worker_loop();
  void enqueue_new_jobs();
  void run_job(const std::string& job_id);

  std::filesystem::path work_root_;
  SimOptions options_;
  mutable std::mutex mutex_;
  std::condition_variable work_cv_;  // workers: queue non-empty or stopping
  std::condition_variable scan_cv_;  // scanner: stopping
  std::deque<std::string> queue_;
  std::set<std::string> claimed_;
  bool stopping_ = false;
  bool started_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace opflow
