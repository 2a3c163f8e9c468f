#include "opflow/executor/executor.hpp"

#include <cstdio>
#include <sstream>

#include "opflow/error.hpp"
#include "opflow/executor/process.hpp"
#include "opflow/state/atomic_file.hpp"

namespace fs = std::filesystem;

namespace opflow {

FailureKind Executor::classify_exit(int exit_code) const {
  return exit_code == kExitTransient ? FailureKind::Transient : FailureKind::Fatal;
}

std::string shell_quote(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

std::string format_walltime(std::int64_t seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(seconds / 3600),
                static_cast<long long>(seconds / 60 % 60), static_cast<long long>(seconds % 60));
  return buf;
}

namespace {

/// Heredoc delimiter that does not occur as a line of `body`.
std::string heredoc_delimiter(std::string_view body) {
  std::string delim = "OPFLOW_EOF";
  for (int n = 1;; ++n) {
    bool clash = false;
    std::size_t pos = 0;
    while (pos <= body.size()) {
      std::size_t end = body.find('\n', pos);
      if (end == std::string_view::npos) end = body.size();
      if (body.substr(pos, end - pos) == delim) {
        clash = true;
        break;
      }
      pos = end + 1;
    }
    if (!clash) return delim;
    delim = "OPFLOW_EOF_" + std::to_string(n);
  }
}

/// `cat > <target> <<'D'` block that reproduces `content`.
std::string heredoc(std::string_view target, std::string_view content) {
  std::string delim = heredoc_delimiter(content);
  std::string out = "cat > " + std::string(target) + " <<'" + delim + "'\n";
  out += content;
  if (content.empty() || content.back() != '\n') out += '\n';
  out += delim + "\n";
  return out;
}

std::string command_words(const std::vector<std::string>& command) {
  std::string out;
  for (const auto& word : command) {
    if (!out.empty()) out += ' ';
    out += shell_quote(word);
  }
  return out;
}

std::string seconds_text(std::chrono::milliseconds ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(ms.count() / 1000),
                static_cast<long long>(ms.count() % 1000));
  return buf;
}

}  // namespace

std::string render_job_script(BatchType dialect, const ResourceSpec& r,
                              const std::vector<std::string>& command, std::string_view body) {
  std::ostringstream out;
  switch (dialect) {
    case BatchType::Sim:
      out << "#OPFLOW queue=" << r.queue << "\n"
          << "#OPFLOW cpu=" << r.cpu << "\n"
          << "#OPFLOW memory_mb=" << r.memory_mb << "\n"
          << "#OPFLOW walltime=" << r.walltime_seconds << "\n"
          << body;
      return out.str();
    case BatchType::Slurm:
      out << "#!/bin/sh\n"
          << "#SBATCH --job-name=opflow\n"
          << "#SBATCH --partition=" << r.queue << "\n"
          << "#SBATCH --nodes=1\n"
          << "#SBATCH --ntasks=1\n"
          << "#SBATCH --cpus-per-task=" << r.cpu << "\n"
          << "#SBATCH --mem=" << r.memory_mb << "M\n"
          << "#SBATCH --time=" << format_walltime(r.walltime_seconds) << "\n"
          << "#SBATCH --output=log\n";
      break;
    case BatchType::Pbs:
      out << "#!/bin/sh\n"
          << "#PBS -N opflow\n"
          << "#PBS -q " << r.queue << "\n"
          << "#PBS -l nodes=1:ppn=" << r.cpu << "\n"
          << "#PBS -l mem=" << r.memory_mb << "mb\n"
          << "#PBS -l walltime=" << format_walltime(r.walltime_seconds) << "\n"
          << "#PBS -j oe\n"
          << "#PBS -o log\n"
          << "cd \"$PBS_O_WORKDIR\" || exit 1\n";
      break;
  }
  out << heredoc(".opflow-script", body) << "exec " << command_words(command) << " .opflow-script\n";
  return out.str();
}

DispatcherExecutor::DispatcherExecutor(std::string name, MachineSpec machine, ResourceSpec resources,
                                       DispatchOptions options)
    : name_(std::move(name)), machine_(std::move(machine)), resources_(std::move(resources)),
      options_(options) {
  if (resources_.walltime_seconds < 1) throw Error(ErrorCode::InvalidSpec, "walltime_seconds must be >= 1");
  if (machine_.work_root.empty()) throw Error(ErrorCode::InvalidSpec, "dispatcher machine needs a work_root");
}

FailureKind DispatcherExecutor::classify_exit(int exit_code) const {
  if (exit_code == kExitBatchTimeout) return FailureKind::Timeout;
  return Executor::classify_exit(exit_code);
}

ScriptTemplate DispatcherExecutor::render(const ScriptTemplate& tmpl) const {
  const std::string job_script = render_job_script(machine_.batch_type, resources_, tmpl.command, tmpl.script);
  const std::string jobs = shell_quote((fs::path(machine_.work_root) / "jobs").string());
  const std::string poll = seconds_text(options_.poll_interval);
  const std::string budget = std::to_string(resources_.walltime_seconds + options_.grace_seconds);

  std::ostringstream s;
  s << "set -u\n"
    << "jobs=" << jobs << "\n"
    << "tag=\"$(date +%s%N)-$$\"\n"
    << "stage=\"$jobs/.submit-$tag\"\n"
    << "mkdir -p \"$stage/workdir\" 2>/dev/null || { echo \"opflow: cannot stage job in $jobs\" >&2; exit "
    << kExitTransient << "; }\n"
    << "cp -a ./. \"$stage/workdir/\" || exit " << kExitTransient << "\n";

  switch (machine_.batch_type) {
    case BatchType::Sim:
      s << heredoc("\"$stage/script\"", job_script)
        << "printf '%s\\n' " << command_words(tmpl.command) << " > \"$stage/command\"\n"
        << "echo " << resources_.walltime_seconds << " > \"$stage/walltime\"\n"
        << "date +%s%N > \"$stage/submit_time\"\n"
        << "printf Queued > \"$stage/state\"\n"
        << "id=\"$tag\"\n"
        << "mv \"$stage\" \"$jobs/$id\" || exit " << kExitTransient << "\n"
        << "job=\"$jobs/$id\"\n"
        << "deadline=\n"
        << "while :; do\n"
        << "  state=\"$(cat \"$job/state\" 2>/dev/null || true)\"\n"
        << "  case \"$state\" in\n"
        << "    Completed|Failed|TimedOut) break ;;\n"
        << "    Running) [ -n \"$deadline\" ] || deadline=$(( $(date +%s) + " << budget << " )) ;;\n"
        << "  esac\n"
        << "  if [ -n \"$deadline\" ] && [ \"$(date +%s)\" -gt \"$deadline\" ]; then\n"
        << "    echo \"opflow: job $id exceeded walltime without finishing\" >&2; exit 1\n"
        << "  fi\n"
        << "  sleep " << poll << "\n"
        << "done\n"
        << "cat \"$job/log\" 2>/dev/null\n"
        << "cp -a \"$job/workdir/.\" . || exit 1\n"
        << "case \"$state\" in\n"
        << "  Completed) exit 0 ;;\n"
        << "  TimedOut) exit " << kExitBatchTimeout << " ;;\n"
        << "esac\n"
        << "[ \"$(cat \"$job/exit_code\" 2>/dev/null)\" = " << kExitTransient << " ] && exit " << kExitTransient
        << "\n"
        << "exit 1\n";
      break;
    case BatchType::Slurm:
      s << heredoc("\"$stage/job.sh\"", job_script)
        << "cd \"$stage/workdir\" || exit " << kExitTransient << "\n"
        << "id=\"$(sbatch --parsable ../job.sh)\" || { echo 'opflow: sbatch failed' >&2; exit "
        << kExitTransient << "; }\n"
        << "id=\"${id%%;*}\"\n"
        << "deadline=\n"
        << "while :; do\n"
        << "  state=\"$(squeue -h -j \"$id\" -o %T 2>/dev/null || true)\"\n"
        << "  [ -z \"$state\" ] && break\n"
        << "  case \"$state\" in\n"
        << "    RUNNING) [ -n \"$deadline\" ] || deadline=$(( $(date +%s) + " << budget << " )) ;;\n"
        << "  esac\n"
        << "  if [ -n \"$deadline\" ] && [ \"$(date +%s)\" -gt \"$deadline\" ]; then\n"
        << "    echo \"opflow: job $id exceeded walltime without finishing\" >&2; exit 1\n"
        << "  fi\n"
        << "  sleep " << poll << "\n"
        << "done\n"
        << "final=\"$(sacct -n -X -P -j \"$id\" -o State,ExitCode | head -n 1)\"\n"
        << "cd - >/dev/null || exit 1\n"
        << "cat \"$stage/workdir/log\" 2>/dev/null\n"
        << "cp -a \"$stage/workdir/.\" . || exit 1\n"
        << "case \"$final\" in\n"
        << "  COMPLETED*) exit 0 ;;\n"
        << "  TIMEOUT*) exit " << kExitBatchTimeout << " ;;\n"
        << "  *\"|" << kExitTransient << ":\"*) exit " << kExitTransient << " ;;\n"
        << "esac\n"
        << "exit 1\n";
      break;
    case BatchType::Pbs:
      s << heredoc("\"$stage/job.sh\"", job_script)
        << "cd \"$stage/workdir\" || exit " << kExitTransient << "\n"
        << "id=\"$(qsub ../job.sh)\" || { echo 'opflow: qsub failed' >&2; exit " << kExitTransient << "; }\n"
        << "deadline=\n"
        << "while :; do\n"
        << "  info=\"$(qstat -x -f \"$id\" 2>/dev/null || true)\"\n"
        << "  state=\"$(printf '%s\\n' \"$info\" | sed -n 's/^ *job_state = //p')\"\n"
        << "  case \"$state\" in\n"
        << "    F|'') break ;;\n"
        << "    R) [ -n \"$deadline\" ] || deadline=$(( $(date +%s) + " << budget << " )) ;;\n"
        << "  esac\n"
        << "  if [ -n \"$deadline\" ] && [ \"$(date +%s)\" -gt \"$deadline\" ]; then\n"
        << "    echo \"opflow: job $id exceeded walltime without finishing\" >&2; exit 1\n"
        << "  fi\n"
        << "  sleep " << poll << "\n"
        << "done\n"
        << "status=\"$(printf '%s\\n' \"$info\" | sed -n 's/^ *Exit_status = //p')\"\n"
        << "cd - >/dev/null || exit 1\n"
        << "cat \"$stage/workdir/log\" 2>/dev/null\n"
        << "cp -a \"$stage/workdir/.\" . || exit 1\n"
        << "case \"$status\" in\n"
        << "  0) exit 0 ;;\n"
        << "  -29) exit " << kExitBatchTimeout << " ;;\n"
        << "  " << kExitTransient << ") exit " << kExitTransient << " ;;\n"
        << "esac\n"
        << "exit 1\n";
      break;
  }

  ScriptTemplate out = tmpl;
  out.command = {"sh"};
  out.script = s.str();
  return out;
}

std::unique_ptr<Executor> make_executor(const ExecutorConfig& config, DispatchOptions options) {
  if (config.type == "local") return std::make_unique<LocalExecutor>(config.name);
  if (config.type == "dispatcher") {
    return std::make_unique<DispatcherExecutor>(config.name, config.machine, config.resources, options);
  }
  throw Error(ErrorCode::InvalidSpec, "executor '" + config.name + "': unknown type '" + config.type + "'");
}

ExecResult local_execute(const ScriptTemplate& tmpl, const fs::path& step_dir, const fs::path& workdir,
                         std::optional<std::chrono::duration<double>> timeout) {
  fs::create_directories(workdir);
  const fs::path script = step_dir / "script";
  write_file_atomic(script, tmpl.script);
  std::vector<std::string> argv = tmpl.command;
  argv.push_back(fs::absolute(script).string());
  ExecResult result;
  result.stdout_path = step_dir / "log";
  result.stderr_path = result.stdout_path;
  ProcessResult p = run_process(argv, workdir, result.stdout_path, timeout);
  result.exit_code = p.exit_code;
  result.timed_out = p.timed_out;
  result.duration = p.duration;
  return result;
}

IoValues collect_output_parameters(const ScriptTemplate& tmpl, const fs::path& workdir) {
  IoValues out;
  for (const auto& spec : tmpl.outputs.parameters) {
    auto src = tmpl.output_parameter_sources.find(spec.name);
    if (src == tmpl.output_parameter_sources.end()) continue;
    auto text = read_file(workdir / src->second);
    if (!text) {
      if (spec.optional || spec.default_value) continue;
      throw Error(ErrorCode::MissingOutputFile, "output parameter '" + spec.name + "': " + src->second);
    }
    if (!text->empty() && text->back() == '\n') text->pop_back();
    out.parameters[spec.name] = ParameterValue{std::move(*text), spec.type_tag};
  }
  return out;
}

std::map<std::string, fs::path> collect_output_artifacts(const ScriptTemplate& tmpl, const fs::path& workdir) {
  std::map<std::string, fs::path> out;
  for (const auto& spec : tmpl.outputs.artifacts) {
    auto src = tmpl.output_artifact_sources.find(spec.name);
    if (src == tmpl.output_artifact_sources.end()) continue;
    fs::path path = workdir / src->second;
    std::error_code ec;
    if (fs::exists(path, ec)) {
      out[spec.name] = path;
    } else if (!spec.optional) {
      throw Error(ErrorCode::MissingOutputFile, "output artifact '" + spec.name + "': " + src->second);
    }
  }
  return out;
}

ExecResult LocalRunner::run(const ScriptRun& r) {
  return local_execute(*r.tmpl, r.step_dir, r.workdir, r.timeout);
}

}  // namespace opflow
