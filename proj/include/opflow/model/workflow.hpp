#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "opflow/model/values.hpp"

namespace opflow {

/// `[A-Za-z][A-Za-z0-9_-]{0,127}`
bool is_identifier(std::string_view name);

struct ParameterSpec {
  std::string name;
  TypeTag type_tag = TypeTag::String;
  bool optional = false;
  std::optional<std::string> default_value;

  friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

struct ArtifactSpec {
  std::string name;
  bool optional = false;
  std::optional<std::string> default_location;

  friend bool operator==(const ArtifactSpec&, const ArtifactSpec&) = default;
};

/// Declared input or output structure of a template, in declaration order.
struct Signature {
  std::vector<ParameterSpec> parameters;
  std::vector<ArtifactSpec> artifacts;

  const ParameterSpec* find_parameter(std::string_view name) const;
  const ArtifactSpec* find_artifact(std::string_view name) const;
  bool contains(std::string_view name) const {
    return find_parameter(name) != nullptr || find_artifact(name) != nullptr;
  }

  friend bool operator==(const Signature&, const Signature&) = default;
};

struct ScriptTemplate {
  std::string name;
  std::string image;
  std::vector<std::string> command{"sh"};
  std::string script;
  Signature inputs;
  Signature outputs;
  std::map<std::string, std::string> output_parameter_sources;
  std::map<std::string, std::string> output_artifact_sources;
  std::map<std::string, std::string> input_artifact_mounts;

  friend bool operator==(const ScriptTemplate&, const ScriptTemplate&) = default;
};

namespace ref {
struct Literal {
  Value value;
  friend bool operator==(const Literal&, const Literal&) = default;
};
struct WorkflowInput {
  std::string name;
  friend bool operator==(const WorkflowInput&, const WorkflowInput&) = default;
};
struct TemplateInput {
  std::string name;
  friend bool operator==(const TemplateInput&, const TemplateInput&) = default;
};
struct StepOutput {
  std::string step;
  std::string name;
  friend bool operator==(const StepOutput&, const StepOutput&) = default;
};
struct Item {
  friend bool operator==(const Item&, const Item&) = default;
};
struct ItemField {
  std::string field;
  friend bool operator==(const ItemField&, const ItemField&) = default;
};
}  // namespace ref

/// Binding source for a step input or a template output.
using ValueRef = std::variant<ref::Literal, ref::WorkflowInput, ref::TemplateInput,
                              ref::StepOutput, ref::Item, ref::ItemField>;

struct SlicesConfig {
  std::set<std::string> sliced_inputs;
  std::set<std::string> stacked_outputs;
  std::optional<int> parallelism;

  friend bool operator==(const SlicesConfig&, const SlicesConfig&) = default;
};

struct RetryPolicy {
  int max_retries_on_transient = 0;
  bool timeout_is_transient = false;

  friend bool operator==(const RetryPolicy&, const RetryPolicy&) = default;
};

/// A step of a Steps template, or a task of a DAG template (which may also
/// carry explicit dependencies).
struct StepDef {
  std::string name;
  std::string template_name;
  std::map<std::string, ValueRef> input_bindings;
  std::optional<std::string> when;
  std::optional<SlicesConfig> slices;
  std::optional<std::string> key_template;
  RetryPolicy retry;
  std::optional<std::int64_t> timeout_seconds;
  bool continue_on_failed = false;
  std::optional<Ratio> continue_on_success_ratio;
  std::optional<std::int64_t> continue_on_num_success;
  std::optional<std::string> executor;
  std::vector<std::string> dependencies;

  friend bool operator==(const StepDef&, const StepDef&) = default;
};

struct StepsTemplate {
  std::string name;
  Signature inputs;
  Signature outputs;
  std::vector<StepDef> body;
  std::map<std::string, ValueRef> output_bindings;

  friend bool operator==(const StepsTemplate&, const StepsTemplate&) = default;
};

struct DagTemplate {
  std::string name;
  Signature inputs;
  Signature outputs;
  std::vector<StepDef> body;
  std::map<std::string, ValueRef> output_bindings;

  const StepDef* find_task(std::string_view name) const;

  friend bool operator==(const DagTemplate&, const DagTemplate&) = default;
};

using OpTemplate = std::variant<ScriptTemplate, StepsTemplate, DagTemplate>;

const std::string& template_name(const OpTemplate& tmpl);
const Signature& input_signature(const OpTemplate& tmpl);
const Signature& output_signature(const OpTemplate& tmpl);
/// Body of a Steps or DAG template; nullptr for scripts.
const std::vector<StepDef>* template_body(const OpTemplate& tmpl);
const std::map<std::string, ValueRef>* template_output_bindings(const OpTemplate& tmpl);

enum class BatchType { Sim, Slurm, Pbs };

std::string_view to_string(BatchType type);
std::optional<BatchType> parse_batch_type(std::string_view text);

struct MachineSpec {
  BatchType batch_type = BatchType::Sim;
  std::string work_root;

  friend bool operator==(const MachineSpec&, const MachineSpec&) = default;
};

struct ResourceSpec {
  int cpu = 1;
  int memory_mb = 1024;
  std::string queue = "default";
  std::int64_t walltime_seconds = 3600;

  friend bool operator==(const ResourceSpec&, const ResourceSpec&) = default;
};

/// Named executor declared in a workflow document.
struct ExecutorConfig {
  std::string name;
  std::string type;  // "local" or "dispatcher"
  MachineSpec machine;
  ResourceSpec resources;

  friend bool operator==(const ExecutorConfig&, const ExecutorConfig&) = default;
};

struct GlobalInputs {
  Signature signature;
  IoValues values;

  friend bool operator==(const GlobalInputs&, const GlobalInputs&) = default;
};

struct WorkflowSpec {
  std::string name;
  std::map<std::string, OpTemplate> templates;
  std::string entrypoint;
  GlobalInputs global_inputs;
  std::vector<ExecutorConfig> executors;
  std::optional<std::string> default_executor;

  const OpTemplate* find_template(std::string_view name) const;
  const ExecutorConfig* find_executor(std::string_view name) const;

  friend bool operator==(const WorkflowSpec&, const WorkflowSpec&) = default;
};

}  // namespace opflow
