#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "opflow/model/workflow.hpp"
#include "opflow/state/step_record.hpp"

namespace opflow {

class StorageClient;

enum class FaultDecision { Retry, Fail, Succeed, SucceedGroup, FailGroup };

std::string_view to_string(FaultDecision d);

/// Outcome of one execution attempt (attempts count from 1).
struct AttemptResult {
  std::optional<FailureKind> failure;  // nullopt: the attempt succeeded
  int attempt = 1;
};

/// Retry a transient failure while attempt <= max_retries_on_transient; a
/// timeout counts as transient only when timeout_is_transient is set.
FaultDecision apply_fault_policy(const StepDef& step, const AttemptResult& result);

/// Successes a sliced group of `n` instances needs: ceil(ratio * n) and/or
/// num_success (whichever is smaller when both are set), else all of them.
std::int64_t required_successes(const StepDef& step, std::int64_t n);

/// SucceedGroup or FailGroup.
FaultDecision decide_group(const StepDef& step, std::int64_t n, std::int64_t succeeded);

struct SliceInstance {
  std::int64_t index = 0;
  /// Step inputs with each sliced input replaced by its element.
  IoValues inputs;
  /// Element of the single sliced input, or an object of all elements by
  /// input name when several inputs are sliced.
  ParameterValue item;
};

/// Splits `bound` along the step's sliced inputs. Parameter inputs must be
/// JSON lists; artifact inputs are split into their child entries, ordered
/// numerically when every child name is a number and lexicographically
/// otherwise. Throws SliceLengthMismatch or TypeMismatch.
std::vector<SliceInstance> expand_slices(const StepDef& step, const IoValues& bound, StorageClient* storage);

/// Child entries of an artifact location (storage key or local directory).
std::vector<std::string> artifact_children(const ArtifactValue& artifact, StorageClient* storage);

/// A JSON list element converted to parameter text: strings unquoted.
ParameterValue element_to_parameter(const std::string& json_text);

/// Selects `field` of a JSON object item. Throws TypeMismatch.
ParameterValue item_field(const ParameterValue& item, const std::string& field);

struct StackedOutputs {
  /// Stacked parameters as JSON lists, null where an instance has no output.
  IoValues parameters;
  /// Stacked artifacts: per-instance location, nullopt for gaps.
  std::map<std::string, std::vector<std::optional<std::string>>> artifacts;
};

/// Stacks the `stacked` outputs of instances 0..n-1 in index order; an absent
/// entry (failed or skipped instance) contributes a gap.
StackedOutputs aggregate_slice_outputs(const std::vector<std::optional<IoValues>>& instances,
                                       const std::set<std::string>& stacked, const Signature& outputs);

}  // namespace opflow
