#pragma once

#include <optional>
#include <string_view>
#include <string>
#include <utility>
#include <vector>

#include "opflow/model/workflow.hpp"

namespace opflow {

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string location;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;

  bool has_errors() const;
  std::size_t error_count() const;
  bool empty() const { return diagnostics.empty(); }
};

/// Static checks over a whole workflow. Never throws; problems are reported
/// as diagnostics. A report without errors means the spec is accepted
/// (warnings do not block submission).
ValidationReport validate_workflow(const WorkflowSpec& spec);

using Edge = std::pair<std::string, std::string>;

/// Producer/consumer edges of a DAG body: every StepOutput reference (in
/// bindings, or as a `tasks.<t>.` / `steps.<t>.` placeholder in `when` and
/// key templates) plus explicit dependencies. Sorted and deduplicated.
/// Throws UnresolvedReference for references to unknown tasks.
std::vector<Edge> infer_dag_dependencies(const DagTemplate& dag);

/// Returns a witness cycle as a node list [n0, n1, ..., nk] with an edge from
/// each node to the next and from nk back to n0, or nullopt if acyclic.
std::optional<std::vector<std::string>> detect_cycles(
    const std::vector<Edge>& edges, const std::vector<std::string>& nodes);

/// Step keys double as directory names: `[A-Za-z0-9_][A-Za-z0-9_.-]*`, at
/// most 200 bytes.
bool is_valid_step_key(std::string_view key);

/// Names of body members referenced through `steps.<name>.` or
/// `tasks.<name>.` placeholders in `text`.
std::vector<std::string> placeholder_step_refs(const std::string& text);

}  // namespace opflow
