#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "opflow/model/workflow.hpp"

namespace opflow {

inline constexpr std::string_view kApiVersion = "opflow/v1";

/// Parses a workflow document (YAML 1.2 or JSON text). Throws
/// Error(InvalidSpec) with a field path on malformed documents.
WorkflowSpec parse_workflow_document(std::string_view text);
WorkflowSpec load_workflow_file(const std::filesystem::path& path);

/// Serializes a spec to the document schema; parse_workflow_document accepts
/// the output and reproduces an equal spec.
nlohmann::ordered_json to_document(const WorkflowSpec& spec);
std::string dump_workflow_document(const WorkflowSpec& spec);

nlohmann::ordered_json value_ref_to_json(const ValueRef& ref);
ValueRef value_ref_from_json(const nlohmann::ordered_json& node, const std::string& where);

}  // namespace opflow
