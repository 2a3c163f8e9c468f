#include "opflow/model/workflow.hpp"

#include <algorithm>

namespace opflow {

bool is_identifier(std::string_view name) {
  if (name.empty() || name.size() > 128) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin() + 1, name.end(),
                     [&](char c) { return alpha(c) || digit(c) || c == '_' || c == '-'; });
}

const ParameterSpec* Signature::find_parameter(std::string_view name) const {
  auto it = std::find_if(parameters.begin(), parameters.end(),
                         [&](const ParameterSpec& p) { return p.name == name; });
  return it == parameters.end() ? nullptr : &*it;
}

const ArtifactSpec* Signature::find_artifact(std::string_view name) const {
  auto it = std::find_if(artifacts.begin(), artifacts.end(),
                         [&](const ArtifactSpec& a) { return a.name == name; });
  return it == artifacts.end() ? nullptr : &*it;
}

const StepDef* DagTemplate::find_task(std::string_view task) const {
  auto it = std::find_if(body.begin(), body.end(),
                         [&](const StepDef& s) { return s.name == task; });
  return it == body.end() ? nullptr : &*it;
}

const std::string& template_name(const OpTemplate& tmpl) {
  return std::visit([](const auto& t) -> const std::string& { return t.name; }, tmpl);
}

const Signature& input_signature(const OpTemplate& tmpl) {
  return std::visit([](const auto& t) -> const Signature& { return t.inputs; }, tmpl);
}

const Signature& output_signature(const OpTemplate& tmpl) {
  return std::visit([](const auto& t) -> const Signature& { return t.outputs; }, tmpl);
}

const std::vector<StepDef>* template_body(const OpTemplate& tmpl) {
  if (auto* s = std::get_if<StepsTemplate>(&tmpl)) return &s->body;
  if (auto* d = std::get_if<DagTemplate>(&tmpl)) return &d->body;
  return nullptr;
}

const std::map<std::string, ValueRef>* template_output_bindings(const OpTemplate& tmpl) {
  if (auto* s = std::get_if<StepsTemplate>(&tmpl)) return &s->output_bindings;
  if (auto* d = std::get_if<DagTemplate>(&tmpl)) return &d->output_bindings;
  return nullptr;
}

std::string_view to_string(BatchType type) {
  switch (type) {
    case BatchType::Sim: return "sim";
    case BatchType::Slurm: return "slurm-dialect";
    case BatchType::Pbs: return "pbs-dialect";
  }
  return "sim";
}

std::optional<BatchType> parse_batch_type(std::string_view text) {
  if (text == "sim") return BatchType::Sim;
  if (text == "slurm-dialect" || text == "slurm") return BatchType::Slurm;
  if (text == "pbs-dialect" || text == "pbs") return BatchType::Pbs;
  return std::nullopt;
}

const OpTemplate* WorkflowSpec::find_template(std::string_view tmpl) const {
  auto it = templates.find(std::string(tmpl));
  return it == templates.end() ? nullptr : &it->second;
}

const ExecutorConfig* WorkflowSpec::find_executor(std::string_view executor) const {
  auto it = std::find_if(executors.begin(), executors.end(),
                         [&](const ExecutorConfig& e) { return e.name == executor; });
  return it == executors.end() ? nullptr : &*it;
}

}  // namespace opflow
