#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "opflow/error.hpp"
#include "opflow/executor/executor.hpp"
#include "opflow/expr/expression.hpp"
#include "opflow/model/workflow.hpp"
#include "opflow/scheduler/clock.hpp"
#include "opflow/state/state_store.hpp"
#include "opflow/storage/storage_client.hpp"

namespace opflow {

struct RunConfig {
  /// Upper bound on concurrently running scripts, and on concurrently
  /// scheduled tasks/slices within one DAG or sliced step.
  int parallelism = 16;
  int max_recursion_depth = 100;
  /// Executor used by steps without an `executor` field. Empty: the spec's
  /// default_executor, else a plain local executor.
  std::string default_executor;
  std::shared_ptr<Clock> clock;  // null: system clock
  std::chrono::duration<double> retry_backoff{1.0};
  /// Run every DAG task and slice one at a time, in body / index order.
  bool sequential = false;
  std::shared_ptr<ScriptRunner> runner;  // null: LocalRunner
  /// Use this id instead of generating one. The workflow directory is
  /// created unless it already exists.
  std::string workflow_id;
  DispatchOptions dispatch;
  /// Start an in-process SimBatchSystem for each sim machine in the spec.
  bool start_sim_batch = true;
  int sim_workers = 4;
};

struct WorkflowResult {
  std::string workflow_id;
  Phase phase = Phase::Failed;
  IoValues outputs;
  std::optional<Failure> failure;
  /// Set when the run was aborted by an error rather than a step failure.
  std::optional<ErrorCode> abort_code;
  /// Every persisted record, in creation order.
  std::vector<StepRecord> records;
  std::int64_t executions = 0;
  int max_concurrent_scripts = 0;
};

/// Steps whose resolved key matches a record here are Reused instead of run.
using ReuseSet = std::map<std::string, StepRecord>;

ReuseSet make_reuse_set(const std::vector<StepRecord>& records);

/// Exact key lookup.
const StepRecord* resolve_reuse(const std::string& key, const ReuseSet& reuse);

/// Renders and evaluates the step's `when`; true when absent.
bool evaluate_when(const StepDef& step, const expr::Scope& scope);

class Engine {
 public:
  Engine(StateStore& store, StorageClient& storage) : store_(store), storage_(storage) {}

  /// Runs `spec` (which must validate without errors) to completion.
  WorkflowResult run_workflow(const WorkflowSpec& spec, const RunConfig& config,
                              const std::vector<StepRecord>& reuse = {});

 private:
  StateStore& store_;
  StorageClient& storage_;
};

}  // namespace opflow
