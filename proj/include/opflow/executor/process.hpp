#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace opflow {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::chrono::duration<double> duration{};
};

/// Runs `argv` in `cwd` as the leader of a new process group, with stdout
/// and stderr appended to `log_path` and stdin from /dev/null. On timeout the
/// whole group is killed with SIGKILL. A process killed by signal N reports
/// exit code 128 + N.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          const std::filesystem::path& log_path,
                          std::optional<std::chrono::duration<double>> timeout);

}  // namespace opflow
