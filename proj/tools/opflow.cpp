#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "opflow/error.hpp"
#include "opflow/model/document.hpp"
#include "opflow/model/typecheck.hpp"
#include "opflow/model/validate.hpp"
#include "opflow/scheduler/engine.hpp"
#include "opflow/state/atomic_file.hpp"
#include "opflow/state/state_store.hpp"
#include "opflow/storage/local_storage.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace opflow;

namespace {

enum Exit { kOk = 0, kWorkflowFailed = 1, kInvalid = 2, kNotFound = 3, kBadState = 4 };

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path default_home() {
  if (const char* env = std::getenv("OPFLOW_HOME"); env && *env) return env;
  const char* home = std::getenv("HOME");
  return fs::path(home ? home : ".") / ".opflow";
}

struct Context {
  std::string home;
  fs::path data_dir() const { return home.empty() ? default_home() : fs::path(home); }
};

void print_diagnostics(const ValidationReport& report) {
  for (const auto& d : report.diagnostics) {
    std::cerr << (d.severity == Severity::Error ? "error" : "warning") << ": " << d.location << ": " << d.message
              << "\n";
  }
}

/// Parses and validates; prints diagnostics. Returns nullopt on errors.
std::optional<WorkflowSpec> load_spec_text(const std::string& text, const std::vector<std::string>& params) {
  WorkflowSpec spec;
  try {
    spec = parse_workflow_document(text);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << " (offset " << e.offset() << ")\n";
    return std::nullopt;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return std::nullopt;
  }
  for (const auto& p : params) {
    auto eq = p.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --param '" << p << "' is not name=value\n";
      return std::nullopt;
    }
    std::string name = p.substr(0, eq), value = p.substr(eq + 1);
    const Signature& sig = spec.global_inputs.signature;
    if (auto* ps = sig.find_parameter(name)) {
      spec.global_inputs.values.parameters[name] = ParameterValue{value, ps->type_tag};
    } else if (sig.find_artifact(name)) {
      spec.global_inputs.values.artifacts[name] = ArtifactValue{value, false};
    } else {
      std::cerr << "error: global_inputs: unknown input '" << name << "'\n";
      return std::nullopt;
    }
  }
  ValidationReport report = validate_workflow(spec);
  print_diagnostics(report);
  if (report.has_errors()) return std::nullopt;
  return spec;
}

std::string read_spec_file(const std::string& path) {
  auto text = read_file(path);
  if (!text) throw BadInput("cannot read " + path);
  return *text;
}

std::string format_duration(const StepRecord& r) {
  if (!r.started_at || !r.ended_at) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << static_cast<double>(*r.ended_at - *r.started_at) / 1e6 << "s";
  return out.str();
}

void print_table(const std::vector<StepRecord>& records, std::ostream& out) {
  std::size_t kw = 3, nw = 4;
  for (const auto& r : records) {
    kw = std::max(kw, r.key.size());
    nw = std::max(nw, r.name.size());
  }
  out << std::left << std::setw(static_cast<int>(kw) + 2) << "KEY" << std::setw(static_cast<int>(nw) + 2) << "NAME"
      << std::setw(11) << "PHASE" << std::setw(9) << "ATTEMPT" << "DURATION\n";
  for (const auto& r : records) {
    out << std::left << std::setw(static_cast<int>(kw) + 2) << r.key << std::setw(static_cast<int>(nw) + 2) << r.name
        << std::setw(11) << to_string(r.phase) << std::setw(9) << r.attempt << format_duration(r) << "\n";
  }
}

void require(const StateStore& store, const std::string& id) {
  if (!store.workflow_exists(id)) throw NotFound("unknown workflow '" + id + "'");
}

struct SubmitOptions {
  int parallelism = 16;
  std::string executor;
  bool detach = false;
  bool json = false;
};

/// Creates the workflow, prints its id, and runs it (possibly detached).
int launch(const Context& ctx, const WorkflowSpec& spec, const std::vector<StepRecord>& reuse,
           const SubmitOptions& opts) {
  StateStore store(ctx.data_dir());
  std::string id = store.new_workflow_id(spec.name);
  store.create_workflow(id, dump_workflow_document(spec));
  if (opts.json) {
    std::cout << Json{{"workflow_id", id}}.dump() << std::endl;
  } else {
    std::cout << id << std::endl;
  }

  if (opts.detach) {
    // The parent waits until the child has left our process group, so a caller
    // that kills the group once we exit cannot take the child with it.
    int ready[2];
    if (::pipe(ready) != 0) throw std::runtime_error("pipe failed");
    pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid > 0) {
      ::close(ready[1]);
      char byte;
      while (::read(ready[0], &byte, 1) < 0 && errno == EINTR) {
      }
      ::close(ready[0]);
      return kOk;
    }
    ::close(ready[0]);
    ::setsid();
    ::close(ready[1]);
    int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      ::dup2(devnull, 0);
      ::dup2(devnull, 1);
      ::dup2(devnull, 2);
    }
  }

  LocalStorage storage(store.artifacts_root());
  Engine engine(store, storage);
  RunConfig cfg;
  cfg.parallelism = opts.parallelism;
  cfg.default_executor = opts.executor;
  cfg.workflow_id = id;
  WorkflowResult result = engine.run_workflow(spec, cfg, reuse);
  if (opts.detach) std::_Exit(result.phase == Phase::Succeeded ? kOk : kWorkflowFailed);
  if (result.phase != Phase::Succeeded && result.failure) {
    std::cerr << "workflow " << id << " " << to_string(result.phase) << ": " << result.failure->message << "\n";
  }
  return result.phase == Phase::Succeeded ? kOk : kWorkflowFailed;
}

std::vector<StepRecord> harvest(StateStore& store, const std::vector<std::string>& ids,
                                const std::vector<std::string>& keys) {
  std::vector<StepRecord> out;
  std::set<std::string> wanted(keys.begin(), keys.end());
  for (const auto& id : ids) {
    require(store, id);
    for (auto& r : store.harvest_reuse(id)) {
      if (wanted.empty() || wanted.count(r.key)) out.push_back(std::move(r));
    }
  }
  return out;
}

/// Workflow phase word; `abandoned` is set when a Running workflow's engine is gone.
std::string effective_status(const StateStore& store, const std::string& id, bool* abandoned = nullptr) {
  Phase p = store.workflow_status(id);
  bool gone = store.is_abandoned(id);
  if (abandoned) *abandoned = gone;
  return std::string(to_string(p));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opflow: workflow engine"};
  app.require_subcommand(1);
  Context ctx;
  app.add_option("--home", ctx.home, "Data directory (default $OPFLOW_HOME or ~/.opflow)");

  std::string spec_path;
  std::vector<std::string> params, reuse_from, reuse_keys;
  SubmitOptions sopts;
  auto* submit = app.add_subcommand("submit", "Submit and run a workflow");
  submit->add_option("spec", spec_path, "Workflow document")->required();
  submit->add_option("--param", params, "Global input override name=value");
  submit->add_option("--reuse-from", reuse_from, "Reuse keyed steps of this workflow");
  submit->add_option("--reuse-key", reuse_keys, "Only reuse these keys");
  submit->add_option("--parallelism", sopts.parallelism)->check(CLI::PositiveNumber);
  submit->add_option("--executor", sopts.executor, "Default executor name");
  submit->add_flag("--detach", sopts.detach, "Run in the background");
  submit->add_flag("--json", sopts.json);

  auto* validate = app.add_subcommand("validate", "Check a workflow document");
  validate->add_option("spec", spec_path)->required();
  validate->add_option("--param", params);

  std::string wf_id, key;
  bool json = false;
  auto* status = app.add_subcommand("status", "Print the workflow phase");
  status->add_option("workflow", wf_id)->required();
  status->add_flag("--json", json);

  auto* steps = app.add_subcommand("steps", "List step records");
  steps->add_option("workflow", wf_id)->required();
  steps->add_option("--key", key, "Show one record");
  steps->add_flag("--json", json);

  auto* logs = app.add_subcommand("logs", "Print a step's log");
  logs->add_option("workflow", wf_id)->required();
  logs->add_option("key", key)->required();

  int interval_ms = 500;
  auto* watch = app.add_subcommand("watch", "Poll until the workflow finishes");
  watch->add_option("workflow", wf_id)->required();
  watch->add_option("--interval-ms", interval_ms)->check(CLI::PositiveNumber);
  watch->add_flag("--json", json);

  auto* retry = app.add_subcommand("retry", "Resubmit a finished workflow reusing its keyed steps");
  retry->add_option("workflow", wf_id)->required();
  retry->add_option("--parallelism", sopts.parallelism)->check(CLI::PositiveNumber);
  retry->add_option("--executor", sopts.executor);
  retry->add_flag("--detach", sopts.detach);
  retry->add_flag("--json", sopts.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kInvalid;
  }

  try {
    if (validate->parsed()) {
      auto spec = load_spec_text(read_spec_file(spec_path), params);
      if (!spec) return kInvalid;
      std::cout << "valid\n";
      return kOk;
    }
    if (submit->parsed()) {
      auto spec = load_spec_text(read_spec_file(spec_path), params);
      if (!spec) return kInvalid;
      StateStore store(ctx.data_dir());
      auto reuse = harvest(store, reuse_from, reuse_keys);
      return launch(ctx, *spec, reuse, sopts);
    }

    StateStore store(ctx.data_dir());
    require(store, wf_id);

    if (status->parsed()) {
      bool abandoned = false;
      std::string word = effective_status(store, wf_id, &abandoned);
      if (json) {
        std::cout << Json{{"workflow_id", wf_id}, {"status", word}, {"abandoned", abandoned}}.dump(2) << "\n";
      } else {
        std::cout << word << (abandoned ? " (engine not running)" : "") << "\n";
      }
      return kOk;
    }
    if (steps->parsed()) {
      if (!key.empty()) {
        auto r = store.query_step(wf_id, key);
        if (!r) throw NotFound("unknown step key '" + key + "'");
        std::cout << record_to_json(*r).dump(2) << "\n";
        return kOk;
      }
      auto records = store.list_steps(wf_id);
      if (json) {
        Json arr = Json::array();
        for (const auto& r : records) arr.push_back(record_to_json(r));
        std::cout << arr.dump(2) << "\n";
      } else {
        print_table(records, std::cout);
      }
      return kOk;
    }
    if (logs->parsed()) {
      if (!is_valid_step_key(key)) throw NotFound("unknown step key '" + key + "'");
      auto text = read_file(store.step_dir(wf_id, key) / "log");
      if (!text) {
        if (!store.query_step(wf_id, key)) throw NotFound("unknown step key '" + key + "'");
        return kOk;
      }
      std::cout << *text << std::flush;
      return kOk;
    }
    if (watch->parsed()) {
      bool tty = ::isatty(1);
      while (true) {
        Phase p = store.workflow_status(wf_id);
        bool abandoned = store.is_abandoned(wf_id);
        bool done = is_terminal(p) || abandoned;
        if (!json && (tty || done)) {
          if (tty) std::cout << "\x1b[H\x1b[2J";
          std::cout << wf_id << "  " << to_string(p) << (abandoned ? " (engine not running)" : "") << "\n\n";
          print_table(store.list_steps(wf_id), std::cout);
          std::cout << std::flush;
        }
        if (done) {
          if (json) {
            Json arr = Json::array();
            for (const auto& r : store.list_steps(wf_id)) arr.push_back(record_to_json(r));
            std::cout << Json{{"workflow_id", wf_id}, {"status", to_string(p)}, {"steps", arr}}.dump(2) << "\n";
          }
          return p == Phase::Succeeded ? kOk : kWorkflowFailed;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms));
      }
    }
    if (retry->parsed()) {
      Phase p = store.workflow_status(wf_id);
      if (!is_terminal(p)) {
        if (!store.is_abandoned(wf_id)) {
          std::cerr << "error: workflow '" << wf_id << "' is " << to_string(p) << "\n";
          return kBadState;
        }
        store.set_workflow_status(wf_id, Phase::Failed);
      }
      auto spec = load_spec_text(store.spec_text(wf_id), {});
      if (!spec) return kInvalid;
      auto reuse = store.harvest_reuse(wf_id);
      return launch(ctx, *spec, reuse, sopts);
    }
  } catch (const BadInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const NotFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotFound;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::UnknownWorkflow ? kNotFound : kWorkflowFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kWorkflowFailed;
  }
  return kOk;
}
