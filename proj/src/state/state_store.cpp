#include "opflow/state/state_store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <sstream>

#include "opflow/error.hpp"
#include "opflow/model/validate.hpp"
#include "opflow/state/atomic_file.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace opflow {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Pending: return "Pending";
    case Phase::Running: return "Running";
    case Phase::Succeeded: return "Succeeded";
    case Phase::Failed: return "Failed";
    case Phase::Skipped: return "Skipped";
    case Phase::Reused: return "Reused";
  }
  return "Pending";
}

std::optional<Phase> parse_phase(std::string_view text) {
  for (Phase p : {Phase::Pending, Phase::Running, Phase::Succeeded, Phase::Failed, Phase::Skipped,
                  Phase::Reused}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

bool is_terminal(Phase phase) {
  return phase == Phase::Succeeded || phase == Phase::Failed || phase == Phase::Skipped ||
         phase == Phase::Reused;
}

bool is_legal_transition(Phase from, Phase to) {
  switch (from) {
    case Phase::Pending:
      return to == Phase::Pending || to == Phase::Running || to == Phase::Skipped || to == Phase::Reused;
    case Phase::Running:
      return to == Phase::Running || to == Phase::Succeeded || to == Phase::Failed;
    default:
      return from == to;
  }
}

std::string_view to_string(StepType type) {
  switch (type) {
    case StepType::Pod: return "Pod";
    case StepType::Steps: return "Steps";
    case StepType::Dag: return "DAG";
  }
  return "Pod";
}

std::optional<StepType> parse_step_type(std::string_view text) {
  if (text == "Pod") return StepType::Pod;
  if (text == "Steps") return StepType::Steps;
  if (text == "DAG") return StepType::Dag;
  return std::nullopt;
}

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::Transient: return "transient";
    case FailureKind::Fatal: return "fatal";
    case FailureKind::Timeout: return "timeout";
  }
  return "fatal";
}

std::optional<FailureKind> parse_failure_kind(std::string_view text) {
  if (text == "transient") return FailureKind::Transient;
  if (text == "fatal") return FailureKind::Fatal;
  if (text == "timeout") return FailureKind::Timeout;
  return std::nullopt;
}

namespace {

constexpr std::string_view kReserved[] = {"status", "spec.yaml", "owner", "events.log"};

std::string trimmed(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.pop_back();
  return text;
}

Json tags_of(const IoValues& values) {
  Json out = Json::object();
  Json params = Json::object();
  for (const auto& [name, v] : values.parameters) params[name] = std::string(to_string(v.type_tag));
  Json arts = Json::object();
  for (const auto& [name, v] : values.artifacts) arts[name] = v.optional;
  out["parameters"] = std::move(params);
  out["artifacts"] = std::move(arts);
  return out;
}

Json meta_of(const StepRecord& r) {
  Json m = Json::object();
  m["key"] = r.key;
  m["name"] = r.name;
  m["template"] = r.template_name;
  m["keyed"] = r.keyed;
  m["parent"] = r.parent;
  m["sequence"] = r.sequence;
  m["attempt"] = r.attempt;
  m["slice_index"] = r.slice_index ? Json(*r.slice_index) : Json(nullptr);
  m["started_at"] = r.started_at ? Json(*r.started_at) : Json(nullptr);
  m["ended_at"] = r.ended_at ? Json(*r.ended_at) : Json(nullptr);
  if (r.failure) {
    m["failure"] = Json{{"kind", std::string(to_string(r.failure->kind))}, {"message", r.failure->message}};
  } else {
    m["failure"] = nullptr;
  }
  m["inputs"] = tags_of(r.inputs);
  m["outputs"] = tags_of(r.outputs);
  return m;
}

/// Rewrites `<base>/parameters/*` and `<base>/artifacts/*` to match `values`.
void write_values(const fs::path& base, const IoValues& values) {
  fs::create_directories(base / "parameters");
  fs::create_directories(base / "artifacts");
  for (const auto& [name, v] : values.parameters) write_file_atomic(base / "parameters" / name, v.text);
  for (const auto& [name, v] : values.artifacts) write_file_atomic(base / "artifacts" / name, v.location);
  for (const char* sub : {"parameters", "artifacts"}) {
    for (const auto& entry : fs::directory_iterator(base / sub)) {
      auto name = entry.path().filename().string();
      bool keep = std::string_view(sub) == "parameters" ? values.parameters.count(name) > 0
                                                          : values.artifacts.count(name) > 0;
      if (!keep) fs::remove_all(entry.path());
    }
  }
}

IoValues read_values(const fs::path& base, const Json& tags) {
  IoValues values;
  std::error_code ec;
  if (fs::is_directory(base / "parameters", ec)) {
    for (const auto& entry : fs::directory_iterator(base / "parameters")) {
      auto name = entry.path().filename().string();
      if (name.front() == '.') continue;
      TypeTag tag = TypeTag::String;
      if (tags.contains("parameters") && tags["parameters"].contains(name)) {
        tag = parse_type_tag(tags["parameters"][name].get<std::string>()).value_or(TypeTag::String);
      }
      values.parameters[name] = ParameterValue{read_file(entry.path()).value_or(""), tag};
    }
  }
  if (fs::is_directory(base / "artifacts", ec)) {
    for (const auto& entry : fs::directory_iterator(base / "artifacts")) {
      auto name = entry.path().filename().string();
      if (name.front() == '.') continue;
      bool optional = tags.contains("artifacts") && tags["artifacts"].contains(name) &&
                      tags["artifacts"][name].get<bool>();
      values.artifacts[name] = ArtifactValue{read_file(entry.path()).value_or(""), optional};
    }
  }
  return values;
}

void append_event(const fs::path& wf_dir, const std::string& key, std::optional<Phase> from, Phase to) {
  std::string line = key + " " + (from ? std::string(to_string(*from)) : "-") + " " +
                     std::string(to_string(to)) + "\n";
  fs::path log = wf_dir / "events.log";
  int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::Io, "open " + log.string());
  ssize_t n = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error(ErrorCode::Io, "append " + log.string());
}

}  // namespace

StateStore::StateStore(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(workflows_root());
  fs::create_directories(artifacts_root());
}

std::string StateStore::new_workflow_id(std::string_view workflow_name) const {
  while (true) {
    std::string id = std::string(workflow_name) + "-" + random_token(8);
    if (!fs::exists(workflows_root() / id)) return id;
  }
}

fs::path StateStore::workflow_dir(const std::string& workflow_id) const {
  return workflows_root() / workflow_id;
}

void StateStore::create_workflow(const std::string& workflow_id, std::string_view spec_text) {
  fs::path staged = workflows_root() / (".tmp-" + workflow_id + "-" + random_token(6));
  fs::create_directories(staged);
  write_file_atomic(staged / "spec.yaml", spec_text);
  write_file_atomic(staged / "status", to_string(Phase::Pending));
  std::error_code ec;
  fs::rename(staged, workflow_dir(workflow_id), ec);
  if (ec) {
    fs::remove_all(staged);
    throw Error(ErrorCode::Io, "create workflow " + workflow_id + ": " + ec.message());
  }
}

bool StateStore::workflow_exists(const std::string& workflow_id) const {
  return !workflow_id.empty() && workflow_id.front() != '.' &&
         workflow_id.find('/') == std::string::npos && fs::exists(workflow_dir(workflow_id) / "status");
}

void StateStore::require_workflow(const std::string& workflow_id) const {
  if (!workflow_exists(workflow_id)) throw Error(ErrorCode::UnknownWorkflow, workflow_id);
}

std::vector<std::string> StateStore::list_workflows() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(workflows_root())) {
    auto name = entry.path().filename().string();
    if (name.front() != '.' && fs::exists(entry.path() / "status")) ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Phase StateStore::workflow_status(const std::string& workflow_id) const {
  require_workflow(workflow_id);
  auto text = read_file(workflow_dir(workflow_id) / "status");
  auto phase = text ? parse_phase(trimmed(*text)) : std::nullopt;
  if (!phase) throw Error(ErrorCode::Io, "corrupt status file for " + workflow_id);
  return *phase;
}

void StateStore::set_workflow_status(const std::string& workflow_id, Phase phase) {
  require_workflow(workflow_id);
  WorkflowLock& lock = lock_for(workflow_id);
  std::lock_guard guard(lock.mutex);
  write_file_atomic(workflow_dir(workflow_id) / "status", to_string(phase));
}

std::string StateStore::spec_text(const std::string& workflow_id) const {
  require_workflow(workflow_id);
  auto text = read_file(workflow_dir(workflow_id) / "spec.yaml");
  if (!text) throw Error(ErrorCode::Io, "missing spec.yaml for " + workflow_id);
  return *text;
}

void StateStore::set_owner(const std::string& workflow_id, pid_t pid) {
  require_workflow(workflow_id);
  write_file_atomic(workflow_dir(workflow_id) / "owner", std::to_string(pid));
}

std::optional<pid_t> StateStore::owner(const std::string& workflow_id) const {
  auto text = read_file(workflow_dir(workflow_id) / "owner");
  if (!text) return std::nullopt;
  try {
    return static_cast<pid_t>(std::stol(*text));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool StateStore::is_abandoned(const std::string& workflow_id) const {
  Phase status = workflow_status(workflow_id);
  if (status != Phase::Running && status != Phase::Pending) return false;
  auto pid = owner(workflow_id);
  if (!pid) return status == Phase::Running;
  if (::kill(*pid, 0) != 0 && errno == ESRCH) return true;
  // A zombie has exited even though its pid still resolves.
  auto stat = read_file("/proc/" + std::to_string(*pid) + "/stat");
  if (stat) {
    auto close = stat->rfind(')');
    if (close != std::string::npos && close + 2 < stat->size() && (*stat)[close + 2] == 'Z') return true;
  }
  return false;
}

fs::path StateStore::step_dir(const std::string& workflow_id, const std::string& key) const {
  return workflow_dir(workflow_id) / key;
}

StateStore::WorkflowLock& StateStore::lock_for(const std::string& workflow_id) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = locks_[workflow_id];
  if (!slot) slot = std::make_unique<WorkflowLock>();
  return *slot;
}

void StateStore::persist_step(const std::string& workflow_id, const StepRecord& record) {
  if (!is_valid_step_key(record.key) ||
      std::find(std::begin(kReserved), std::end(kReserved), record.key) != std::end(kReserved)) {
    throw Error(ErrorCode::KeyInvalid, "step key '" + record.key + "'");
  }
  require_workflow(workflow_id);
  WorkflowLock& lock = lock_for(workflow_id);
  std::lock_guard guard(lock.mutex);

  fs::path wf_dir = workflow_dir(workflow_id);
  fs::path dir = wf_dir / record.key;
  std::optional<Phase> previous;
  if (auto it = lock.phases.find(record.key); it != lock.phases.end()) {
    previous = it->second;
  } else if (auto text = read_file(dir / "phase")) {
    previous = parse_phase(trimmed(*text));
  }
  if (previous && !is_legal_transition(*previous, record.phase)) {
    throw Error(ErrorCode::IllegalTransition, record.key + ": " + std::string(to_string(*previous)) +
                                                  " -> " + std::string(to_string(record.phase)));
  }

  const std::string meta = meta_of(record).dump(2) + "\n";
  if (!fs::exists(dir)) {
    fs::path staged = wf_dir / (".tmp-" + record.key + "-" + random_token(6));
    fs::create_directories(staged);
    write_values(staged / "inputs", record.inputs);
    if (has_outputs(record.phase)) write_values(staged / "outputs", record.outputs);
    write_file_atomic(staged / "type", to_string(record.type));
    write_file_atomic(staged / "meta.json", meta);
    write_file_atomic(staged / "phase", to_string(record.phase));
    std::error_code ec;
    fs::rename(staged, dir, ec);
    if (ec) {
      fs::remove_all(staged);
      throw Error(ErrorCode::Io, "create step dir " + dir.string() + ": " + ec.message());
    }
  } else {
    write_values(dir / "inputs", record.inputs);
    if (has_outputs(record.phase)) {
      write_values(dir / "outputs", record.outputs);
    } else {
      fs::remove_all(dir / "outputs");
    }
    write_file_atomic(dir / "type", to_string(record.type));
    write_file_atomic(dir / "meta.json", meta);
    write_file_atomic(dir / "phase", to_string(record.phase));
  }
  if (!previous || *previous != record.phase) append_event(wf_dir, record.key, previous, record.phase);
  lock.phases[record.key] = record.phase;
}

std::optional<StepRecord> StateStore::load_step(const std::string& workflow_id, const std::string& key) const {
  if (!is_valid_step_key(key)) return std::nullopt;
  fs::path dir = step_dir(workflow_id, key);
  auto phase_text = read_file(dir / "phase");
  if (!phase_text) return std::nullopt;
  auto phase = parse_phase(trimmed(*phase_text));
  auto meta_text = read_file(dir / "meta.json");
  if (!phase || !meta_text) return std::nullopt;
  Json meta = Json::parse(*meta_text, nullptr, false);
  if (meta.is_discarded()) return std::nullopt;

  StepRecord r;
  r.key = key;
  r.phase = *phase;
  r.type = parse_step_type(trimmed(read_file(dir / "type").value_or("Pod"))).value_or(StepType::Pod);
  r.name = meta.value("name", "");
  r.template_name = meta.value("template", "");
  r.keyed = meta.value("keyed", false);
  r.parent = meta.value("parent", "");
  r.sequence = meta.value("sequence", std::int64_t{0});
  r.attempt = meta.value("attempt", 0);
  if (meta.contains("slice_index") && !meta["slice_index"].is_null()) r.slice_index = meta["slice_index"].get<std::int64_t>();
  if (meta.contains("started_at") && !meta["started_at"].is_null()) r.started_at = meta["started_at"].get<Timestamp>();
  if (meta.contains("ended_at") && !meta["ended_at"].is_null()) r.ended_at = meta["ended_at"].get<Timestamp>();
  if (meta.contains("failure") && !meta["failure"].is_null()) {
    r.failure = Failure{parse_failure_kind(meta["failure"].value("kind", "fatal")).value_or(FailureKind::Fatal),
                        meta["failure"].value("message", "")};
  }
  r.inputs = read_values(dir / "inputs", meta.value("inputs", Json::object()));
  if (has_outputs(r.phase)) r.outputs = read_values(dir / "outputs", meta.value("outputs", Json::object()));
  return r;
}

std::optional<StepRecord> StateStore::query_step(const std::string& workflow_id, const std::string& key) const {
  require_workflow(workflow_id);
  return load_step(workflow_id, key);
}

std::vector<StepRecord> StateStore::list_steps(const std::string& workflow_id) const {
  require_workflow(workflow_id);
  std::vector<StepRecord> records;
  for (const auto& entry : fs::directory_iterator(workflow_dir(workflow_id))) {
    if (!entry.is_directory()) continue;
    auto name = entry.path().filename().string();
    if (name.front() == '.') continue;
    if (auto r = load_step(workflow_id, name)) records.push_back(std::move(*r));
  }
  std::sort(records.begin(), records.end(), [](const StepRecord& a, const StepRecord& b) {
    return std::tie(a.sequence, a.key) < std::tie(b.sequence, b.key);
  });
  return records;
}

std::vector<StepRecord> StateStore::harvest_reuse(const std::string& workflow_id) const {
  auto records = list_steps(workflow_id);
  std::erase_if(records, [](const StepRecord& r) { return !r.keyed || !has_outputs(r.phase); });
  return records;
}

std::vector<PhaseEvent> StateStore::phase_events(const std::string& workflow_id) const {
  require_workflow(workflow_id);
  std::vector<PhaseEvent> events;
  auto text = read_file(workflow_dir(workflow_id) / "events.log");
  if (!text) return events;
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key, from, to;
    if (!(fields >> key >> from >> to)) continue;  // torn final line after a crash
    auto to_phase = parse_phase(to);
    if (!to_phase) continue;
    events.push_back({key, from == "-" ? std::nullopt : parse_phase(from), *to_phase});
  }
  return events;
}

StepRecord modify_output_parameter(const StepRecord& record, const std::string& name, const std::string& text) {
  if (!has_outputs(record.phase)) {
    throw Error(ErrorCode::IllegalTransition, "step '" + record.key + "' has no outputs to modify");
  }
  auto it = record.outputs.parameters.find(name);
  if (it == record.outputs.parameters.end()) throw Error(ErrorCode::UnknownOutput, name);
  if (text.size() > kMaxParameterBytes) throw Error(ErrorCode::ValueTooLarge, name);
  auto canonical = canonicalize(it->second.type_tag, text);
  if (!canonical) {
    throw Error(ErrorCode::TypeMismatch, "'" + text + "' is not a valid " +
                                             std::string(to_string(it->second.type_tag)) + " for " + name);
  }
  StepRecord out = record;
  out.outputs.parameters[name].text = *canonical;
  return out;
}

StepRecord modify_output_artifact(const StepRecord& record, const std::string& name, std::string location) {
  if (!has_outputs(record.phase)) {
    throw Error(ErrorCode::IllegalTransition, "step '" + record.key + "' has no outputs to modify");
  }
  auto it = record.outputs.artifacts.find(name);
  if (it == record.outputs.artifacts.end()) throw Error(ErrorCode::UnknownOutput, name);
  if (location.empty()) throw Error(ErrorCode::TypeMismatch, "empty artifact location for " + name);
  StepRecord out = record;
  out.outputs.artifacts[name].location = std::move(location);
  return out;
}

Json record_to_json(const StepRecord& r) {
  Json out = meta_of(r);
  out["type"] = std::string(to_string(r.type));
  out["phase"] = std::string(to_string(r.phase));
  auto values_json = [](const IoValues& v) {
    Json j = Json::object();
    Json params = Json::object();
    for (const auto& [name, p] : v.parameters) {
      params[name] = Json{{"value", p.text}, {"type_tag", std::string(to_string(p.type_tag))}};
    }
    Json arts = Json::object();
    for (const auto& [name, a] : v.artifacts) arts[name] = Json{{"location", a.location}, {"optional", a.optional}};
    j["parameters"] = std::move(params);
    j["artifacts"] = std::move(arts);
    return j;
  };
  out["inputs"] = values_json(r.inputs);
  out["outputs"] = values_json(r.outputs);
  return out;
}

}  // namespace opflow
