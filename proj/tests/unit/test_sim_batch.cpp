#include <gtest/gtest.h>

#include <fstream>

#include "opflow/error.hpp"
#include "opflow/executor/sim_batch.hpp"
#include "opflow/state/atomic_file.hpp"
#include "temp_dir.hpp"

using namespace opflow;
using opflow::test_support::TempDir;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

fs::path write_script(const TempDir& dir, const std::string& name, const std::string& body) {
  fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

ResourceSpec wall(std::int64_t s) {
  ResourceSpec r;
  r.walltime_seconds = s;
  return r;
}

}  // namespace

TEST(JobState, Words) {
  for (JobState s : {JobState::Queued, JobState::Running, JobState::Completed, JobState::Failed, JobState::TimedOut}) {
    EXPECT_EQ(parse_job_state(to_string(s)), s);
  }
  EXPECT_EQ(parse_job_state("Done"), std::nullopt);
}

TEST(SimBatch, FifoWithOneWorker) {
  TempDir dir;
  SimBatchSystem sim(dir / "work", SimOptions{1, 10ms});
  std::vector<BatchJob> jobs;
  for (int i = 0; i < 6; ++i) {
    jobs.push_back(sim.submit(write_script(dir, "s" + std::to_string(i), "sleep 0.05\n"), wall(30)));
  }
  sim.start();
  for (const auto& j : jobs) EXPECT_EQ(sim.wait(j.job_id, 20s), JobState::Completed);
  for (std::size_t i = 1; i < jobs.size(); ++i) {
    BatchJob prev = sim.job(jobs[i - 1].job_id);
    BatchJob cur = sim.job(jobs[i].job_id);
    EXPECT_LE(prev.submit_time, cur.submit_time);
    // one worker: the next job starts only after the previous one finished
    EXPECT_GE(*cur.start_time, *prev.finish_time);
  }
  sim.stop();
}

TEST(SimBatch, ExitCodesAndLogs) {
  TempDir dir;
  SimBatchSystem sim(dir / "work", SimOptions{2, 10ms});
  sim.start();
  BatchJob ok = sim.submit(write_script(dir, "ok", "echo hello\necho result > out\n"), wall(30));
  BatchJob bad = sim.submit(write_script(dir, "bad", "exit 9\n"), wall(30));
  EXPECT_EQ(sim.wait(ok.job_id, 20s), JobState::Completed);
  EXPECT_EQ(sim.wait(bad.job_id, 20s), JobState::Failed);
  EXPECT_EQ(sim.job(bad.job_id).exit_code, 9);
  fs::path job_dir = sim.jobs_dir() / ok.job_id;
  EXPECT_EQ(read_file(job_dir / "log"), "hello\n");
  EXPECT_EQ(read_file(job_dir / "workdir/out"), "result\n");
  std::string script = read_file(job_dir / "script").value();
  EXPECT_EQ(script.rfind("#OPFLOW queue=default\n#OPFLOW cpu=1\n#OPFLOW memory_mb=1024\n#OPFLOW walltime=30\n", 0), 0u);
  BatchJob j = sim.job(ok.job_id);
  EXPECT_LE(j.submit_time, *j.start_time);
  EXPECT_LE(*j.start_time, *j.finish_time);
  sim.stop();
}

TEST(SimBatch, WalltimeEnforced) {
  TempDir dir;
  SimBatchSystem sim(dir / "work", SimOptions{1, 10ms});
  sim.start();
  auto t0 = std::chrono::steady_clock::now();
  BatchJob j = sim.submit(write_script(dir, "slow", "sleep 20\n"), wall(1));
  EXPECT_EQ(sim.wait(j.job_id, 10s), JobState::TimedOut);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
  sim.stop();
}

TEST(SimBatch, EverySubmitWakesAWorker) {
  // The scanner sleeps between scans; a submit must still reach an idle worker.
  TempDir dir;
  SimBatchSystem sim(dir / "work", SimOptions{1, 1h});
  sim.start();
  for (int i = 0; i < 40; ++i) {
    BatchJob j = sim.submit(write_script(dir, "q" + std::to_string(i), "true\n"), wall(30));
    ASSERT_EQ(sim.wait(j.job_id, 5s), JobState::Completed) << i;
  }
  sim.stop();
}

TEST(SimBatch, UnknownJob) {
  TempDir dir;
  SimBatchSystem sim(dir / "work");
  try {
    sim.poll("nope");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownJobId);
  }
  EXPECT_THROW(sim.submit(dir / "missing", wall(5)), Error);
}

TEST(SimBatch, PicksUpFileSubmittedJobs) {
  TempDir dir;
  SimBatchSystem sim(dir / "work", SimOptions{1, 10ms});
  sim.start();
  fs::path stage = sim.jobs_dir() / ".submit-x";
  fs::create_directories(stage / "workdir");
  write_file_atomic(stage / "script", "#OPFLOW walltime=5\necho from-file > f\n");
  write_file_atomic(stage / "command", "sh\n");
  write_file_atomic(stage / "walltime", "5\n");
  write_file_atomic(stage / "submit_time", "1\n");
  write_file_atomic(stage / "state", "Queued");
  fs::rename(stage, sim.jobs_dir() / "filejob");
  EXPECT_EQ(sim.wait("filejob", 20s), JobState::Completed);
  EXPECT_EQ(read_file(sim.jobs_dir() / "filejob/workdir/f"), "from-file\n");
  sim.stop();
}
