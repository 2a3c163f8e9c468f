#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "opflow/model/values.hpp"

namespace opflow {

enum class Phase { Pending, Running, Succeeded, Failed, Skipped, Reused };

std::string_view to_string(Phase phase);
std::optional<Phase> parse_phase(std::string_view text);

/// Pending -> {Running, Skipped, Reused}; Running -> {Running, Succeeded, Failed}.
/// Re-persisting the same phase is allowed for Pending and terminal phases.
bool is_legal_transition(Phase from, Phase to);
bool is_terminal(Phase phase);
/// Succeeded or Reused: the step produced outputs.
inline bool has_outputs(Phase phase) { return phase == Phase::Succeeded || phase == Phase::Reused; }

enum class StepType { Pod, Steps, Dag };

std::string_view to_string(StepType type);
std::optional<StepType> parse_step_type(std::string_view text);

enum class FailureKind { Transient, Fatal, Timeout };

std::string_view to_string(FailureKind kind);
std::optional<FailureKind> parse_failure_kind(std::string_view text);

struct Failure {
  FailureKind kind = FailureKind::Fatal;
  std::string message;

  friend bool operator==(const Failure&, const Failure&) = default;
};

/// Microseconds since the Unix epoch.
using Timestamp = std::int64_t;

/// Persisted execution state of one step instance.
struct StepRecord {
  std::string key;
  std::string name;
  std::string template_name;
  StepType type = StepType::Pod;
  Phase phase = Phase::Pending;
  int attempt = 0;
  IoValues inputs;
  /// Present iff phase is Succeeded or Reused.
  IoValues outputs;
  std::optional<std::int64_t> slice_index;
  std::optional<Timestamp> started_at;
  std::optional<Timestamp> ended_at;
  std::optional<Failure> failure;
  /// True when the key came from a key template rather than being generated.
  bool keyed = false;
  /// Key of the enclosing step; empty for the entrypoint.
  std::string parent;
  /// Creation order within the workflow.
  std::int64_t sequence = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

}  // namespace opflow
