#pragma once

#include <sys/types.h>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "opflow/state/step_record.hpp"

namespace opflow {

/// One line of a workflow's `events.log`: a persisted phase change.
struct PhaseEvent {
  std::string key;
  std::optional<Phase> from;
  Phase to = Phase::Pending;
};

/// Workflow state on disk:
///
///   <data-dir>/workflows/<wf-id>/
///     status             workflow phase word
///     spec.yaml          submitted spec document
///     owner              pid of the running engine
///     events.log         append-only phase transitions
///     <step-key>/
///       type phase meta.json
///       inputs/parameters/<name>  inputs/artifacts/<name>   (artifact files hold storage keys)
///       outputs/parameters/<name> outputs/artifacts/<name>  (only when Succeeded/Reused)
///       script log workdir/                                 (Pod steps)
///
/// Every file is published with temp-file + rename. One writer per workflow;
/// readers may run concurrently and see per-file consistent snapshots.
class StateStore {
 public:
  explicit StateStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return data_dir_; }
  std::filesystem::path workflows_root() const { return data_dir_ / "workflows"; }
  std::filesystem::path artifacts_root() const { return data_dir_ / "artifacts"; }

  /// `<name>-<8 random chars>`, not yet used in this store.
  std::string new_workflow_id(std::string_view workflow_name) const;

  void create_workflow(const std::string& workflow_id, std::string_view spec_text);
  bool workflow_exists(const std::string& workflow_id) const;
  std::vector<std::string> list_workflows() const;
  std::filesystem::path workflow_dir(const std::string& workflow_id) const;

  Phase workflow_status(const std::string& workflow_id) const;
  void set_workflow_status(const std::string& workflow_id, Phase phase);
  std::string spec_text(const std::string& workflow_id) const;

  void set_owner(const std::string& workflow_id, pid_t pid);
  std::optional<pid_t> owner(const std::string& workflow_id) const;
  /// A Running workflow whose owner process is gone.
  bool is_abandoned(const std::string& workflow_id) const;

  std::filesystem::path step_dir(const std::string& workflow_id, const std::string& key) const;

  /// Writes the record's StepDir. Enforces the phase machine against the
  /// last persisted phase of the same key. Idempotent for identical records.
  void persist_step(const std::string& workflow_id, const StepRecord& record);

  std::optional<StepRecord> load_step(const std::string& workflow_id, const std::string& key) const;
  /// Exact-key lookup. Throws Error(UnknownWorkflow).
  std::optional<StepRecord> query_step(const std::string& workflow_id, const std::string& key) const;
  /// All records, in creation order.
  std::vector<StepRecord> list_steps(const std::string& workflow_id) const;
  /// Keyed records in phase Succeeded or Reused.
  std::vector<StepRecord> harvest_reuse(const std::string& workflow_id) const;
  std::vector<PhaseEvent> phase_events(const std::string& workflow_id) const;

 private:
  struct WorkflowLock {
    std::mutex mutex;
    std::map<std::string, Phase> phases;
  };
  WorkflowLock& lock_for(const std::string& workflow_id);
  void require_workflow(const std::string& workflow_id) const;

  std::filesystem::path data_dir_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<WorkflowLock>> locks_;
};

/// Returns a copy of `record` with output parameter `name` replaced. The new
/// text is checked against the existing output's type tag. The persisted
/// record is not touched. Throws UnknownOutput, TypeMismatch, or
/// IllegalTransition when the record has no outputs.
StepRecord modify_output_parameter(const StepRecord& record, const std::string& name,
                                   const std::string& text);
StepRecord modify_output_artifact(const StepRecord& record, const std::string& name,
                                  std::string location);

/// Structured form used by `--json` CLI output; field names match meta.json.
nlohmann::ordered_json record_to_json(const StepRecord& record);

}  // namespace opflow
