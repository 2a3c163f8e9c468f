#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "opflow/model/workflow.hpp"
#include "opflow/state/step_record.hpp"

namespace opflow {

/// Script exit codes understood by the engine.
inline constexpr int kExitTransient = 64;
/// Reserved: the batch job ran out of walltime.
inline constexpr int kExitBatchTimeout = 65;

/// Plugin contract: rewrites a script template so that running the result
/// locally performs the work on another backend. Signatures are preserved.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual const std::string& name() const = 0;
  virtual ScriptTemplate render(const ScriptTemplate& tmpl) const = 0;
  /// Failure kind for a nonzero exit code of a rendered script.
  virtual FailureKind classify_exit(int exit_code) const;
};

class LocalExecutor final : public Executor {
 public:
  explicit LocalExecutor(std::string name = "local") : name_(std::move(name)) {}
  const std::string& name() const override { return name_; }
  ScriptTemplate render(const ScriptTemplate& tmpl) const override { return tmpl; }

 private:
  std::string name_;
};

struct DispatchOptions {
  std::chrono::milliseconds poll_interval{500};
  std::int64_t grace_seconds = 2;
};

/// Wraps the script in a submit-and-poll driver for a batch system. For the
/// sim dialect the driver talks to SimBatchSystem through files under
/// `machine.work_root/jobs/`; Slurm and PBS drivers call sbatch/qsub.
class DispatcherExecutor final : public Executor {
 public:
  DispatcherExecutor(std::string name, MachineSpec machine, ResourceSpec resources,
                     DispatchOptions options = {});
  const std::string& name() const override { return name_; }
  ScriptTemplate render(const ScriptTemplate& tmpl) const override;
  FailureKind classify_exit(int exit_code) const override;

  const MachineSpec& machine() const { return machine_; }
  const ResourceSpec& resources() const { return resources_; }

 private:
  std::string name_;
  MachineSpec machine_;
  ResourceSpec resources_;
  DispatchOptions options_;
};

std::unique_ptr<Executor> make_executor(const ExecutorConfig& config, DispatchOptions options = {});

/// Batch job script for `dialect`: directive header, then the body. The sim
/// dialect stores the body verbatim after its header and is run as
/// `<command...> <script>`; Slurm/PBS scripts are self-contained shell scripts.
std::string render_job_script(BatchType dialect, const ResourceSpec& resources,
                              const std::vector<std::string>& command, std::string_view body);

/// Single-quoted shell word.
std::string shell_quote(std::string_view text);

/// `HH:MM:SS`, hours unbounded.
std::string format_walltime(std::int64_t seconds);

struct ExecResult {
  int exit_code = -1;
  bool timed_out = false;
  std::filesystem::path stdout_path;
  std::filesystem::path stderr_path;
  std::chrono::duration<double> duration{};
};

/// Writes `tmpl.script` to `<step_dir>/script` and runs `command... script`
/// in `workdir`. Both streams go to `<step_dir>/log`.
ExecResult local_execute(const ScriptTemplate& tmpl, const std::filesystem::path& step_dir,
                         const std::filesystem::path& workdir,
                         std::optional<std::chrono::duration<double>> timeout);

/// Reads output parameters from their source files in `workdir`, stripping
/// exactly one trailing newline. Missing files of optional outputs are
/// skipped; otherwise Error(MissingOutputFile). Values are raw text tagged
/// with the declared type; callers typecheck.
IoValues collect_output_parameters(const ScriptTemplate& tmpl, const std::filesystem::path& workdir);

/// Existing output artifact paths in `workdir`, by name. Missing required
/// artifacts throw Error(MissingOutputFile).
std::map<std::string, std::filesystem::path> collect_output_artifacts(
    const ScriptTemplate& tmpl, const std::filesystem::path& workdir);

/// One script execution as seen by the engine.
struct ScriptRun {
  const ScriptTemplate* tmpl = nullptr;  // rendered, placeholders substituted
  std::filesystem::path step_dir;
  std::filesystem::path workdir;
  std::optional<std::chrono::duration<double>> timeout;
  std::string step_key;
  int attempt = 1;
};

/// Seam between the scheduler and process execution.
class ScriptRunner {
 public:
  virtual ~ScriptRunner() = default;
  virtual ExecResult run(const ScriptRun& run) = 0;
};

class LocalRunner final : public ScriptRunner {
 public:
  ExecResult run(const ScriptRun& run) override;
};

}  // namespace opflow
