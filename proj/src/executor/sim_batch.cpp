#include "opflow/executor/sim_batch.hpp"

#include <unistd.h>

#include <algorithm>
#include <sstream>

#include "opflow/error.hpp"
#include "opflow/executor/executor.hpp"
#include "opflow/executor/process.hpp"
#include "opflow/state/atomic_file.hpp"

namespace fs = std::filesystem;

namespace opflow {

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Completed: return "Completed";
    case JobState::Failed: return "Failed";
    case JobState::TimedOut: return "TimedOut";
  }
  return "Queued";
}

std::optional<JobState> parse_job_state(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.remove_suffix(1);
  for (JobState s : {JobState::Queued, JobState::Running, JobState::Completed, JobState::Failed,
                     JobState::TimedOut}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::optional<std::int64_t> read_int(const fs::path& path) {
  auto text = read_file(path);
  if (!text) return std::nullopt;
  try {
    return std::stoll(*text);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> read_command(const fs::path& path) {
  std::vector<std::string> words;
  auto text = read_file(path);
  if (!text) return {"sh"};
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) words.push_back(line);
  if (words.empty()) words.push_back("sh");
  return words;
}

}  // namespace

SimBatchSystem::SimBatchSystem(fs::path work_root, SimOptions options)
    : work_root_(std::move(work_root)), options_(options) {
  if (options_.workers < 1) throw Error(ErrorCode::InvalidSpec, "sim batch system needs at least one worker");
  std::error_code ec;
  fs::create_directories(jobs_dir(), ec);
  if (ec) throw Error(ErrorCode::MachineUnreachable, work_root_.string() + ": " + ec.message());
}

SimBatchSystem::~SimBatchSystem() { stop(); }

void SimBatchSystem::start() {
  std::lock_guard guard(mutex_);
  if (started_) return;
  started_ = true;
  stopping_ = false;
  threads_.emplace_back([this] { scan_loop(); });
  for (int i = 0; i < options_.workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

void SimBatchSystem::stop() {
  {
    std::lock_guard guard(mutex_);
    if (!started_) return;
    stopping_ = true;
  }
  work_cv_.notify_all();
  scan_cv_.notify_all();
  for (auto& t : threads_) t.join();
  threads_.clear();
  std::lock_guard guard(mutex_);
  started_ = false;
}

BatchJob SimBatchSystem::submit(const fs::path& script, const ResourceSpec& resources,
                                std::vector<std::string> command) {
  auto body = read_file(script);
  if (!body) throw Error(ErrorCode::SourceMissing, script.string());
  std::string id = std::to_string(now_ns()) + "-" + std::to_string(::getpid()) + "-" + random_token(4);
  fs::path stage = jobs_dir() / (".submit-" + id);
  fs::create_directories(stage / "workdir");
  write_file_atomic(stage / "script", render_job_script(BatchType::Sim, resources, command, *body));
  std::string cmd_text;
  for (const auto& w : command) cmd_text += w + "\n";
  write_file_atomic(stage / "command", cmd_text);
  write_file_atomic(stage / "walltime", std::to_string(resources.walltime_seconds) + "\n");
  std::int64_t submitted = now_ns();
  write_file_atomic(stage / "submit_time", std::to_string(submitted) + "\n");
  write_file_atomic(stage / "state", to_string(JobState::Queued));
  {
    std::lock_guard guard(mutex_);
    fs::rename(stage, jobs_dir() / id);
    claimed_.insert(id);
    queue_.push_back(id);
  }
  work_cv_.notify_one();
  return BatchJob{id, jobs_dir() / id / "script", JobState::Queued, submitted, {}, {}, {}};
}

JobState SimBatchSystem::poll(const std::string& job_id) const {
  if (job_id.empty() || job_id.front() == '.' || job_id.find('/') != std::string::npos) {
    throw Error(ErrorCode::UnknownJobId, job_id);
  }
  auto text = read_file(jobs_dir() / job_id / "state");
  if (!text) throw Error(ErrorCode::UnknownJobId, job_id);
  auto state = parse_job_state(*text);
  if (!state) throw Error(ErrorCode::Io, "corrupt state for job " + job_id);
  return *state;
}

BatchJob SimBatchSystem::job(const std::string& job_id) const {
  BatchJob j;
  j.job_id = job_id;
  j.state = poll(job_id);
  fs::path dir = jobs_dir() / job_id;
  j.script_path = dir / "script";
  j.submit_time = read_int(dir / "submit_time").value_or(0);
  j.start_time = read_int(dir / "start_time");
  j.finish_time = read_int(dir / "finish_time");
  if (auto code = read_int(dir / "exit_code")) j.exit_code = static_cast<int>(*code);
  return j;
}

JobState SimBatchSystem::wait(const std::string& job_id, std::chrono::milliseconds limit) const {
  auto deadline = std::chrono::steady_clock::now() + limit;
  JobState s = poll(job_id);
  while (!is_terminal(s) && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    s = poll(job_id);
  }
  return s;
}

void SimBatchSystem::enqueue_new_jobs() {
  struct Candidate {
    std::int64_t submit_time;
    std::string id;
  };
  std::vector<Candidate> found;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(jobs_dir(), ec)) {
    std::string id = entry.path().filename().string();
    if (id.front() == '.') continue;
    {
      std::lock_guard guard(mutex_);
      if (claimed_.count(id)) continue;
    }
    auto state = read_file(entry.path() / "state");
    if (!state || parse_job_state(*state) != JobState::Queued) continue;
    found.push_back({read_int(entry.path() / "submit_time").value_or(0), id});
  }
  if (found.empty()) return;
  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.submit_time, a.id) < std::tie(b.submit_time, b.id);
  });
  {
    std::lock_guard guard(mutex_);
    for (auto& c : found) {
      if (claimed_.insert(c.id).second) queue_.push_back(c.id);
    }
  }
  work_cv_.notify_all();
}

void SimBatchSystem::scan_loop() {
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    lock.unlock();
    enqueue_new_jobs();
    lock.lock();
    scan_cv_.wait_for(lock, options_.scan_interval, [this] { return stopping_; });
  }
}

void SimBatchSystem::worker_loop() {
  std::unique_lock lock(mutex_);
  while (true) {
    work_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (stopping_) return;
    std::string id = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    try {
      run_job(id);
    } catch (const std::exception& e) {
      fs::path dir = jobs_dir() / id;
      std::error_code ec;
      if (fs::exists(dir, ec)) {
        try {
          write_file_atomic(dir / "finish_time", std::to_string(now_ns()) + "\n");
          write_file_atomic(dir / "state", to_string(JobState::Failed));
        } catch (const std::exception&) {
        }
      }
    }
    lock.lock();
  }
}

void SimBatchSystem::run_job(const std::string& id) {
  fs::path dir = jobs_dir() / id;
  fs::create_directories(dir / "workdir");
  write_file_atomic(dir / "start_time", std::to_string(now_ns()) + "\n");
  write_file_atomic(dir / "state", to_string(JobState::Running));
  auto walltime = read_int(dir / "walltime").value_or(3600);
  std::vector<std::string> argv = read_command(dir / "command");
  argv.push_back(fs::absolute(dir / "script").string());
  ProcessResult r = run_process(argv, dir / "workdir", dir / "log", std::chrono::seconds(walltime));
  write_file_atomic(dir / "exit_code", std::to_string(r.exit_code) + "\n");
  write_file_atomic(dir / "finish_time", std::to_string(now_ns()) + "\n");
  JobState final_state = r.timed_out ? JobState::TimedOut : r.exit_code == 0 ? JobState::Completed : JobState::Failed;
  write_file_atomic(dir / "state", to_string(final_state));
}

}  // namespace opflow
