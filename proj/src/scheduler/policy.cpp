#include "opflow/scheduler/policy.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "opflow/error.hpp"
#include "opflow/model/typecheck.hpp"
#include "opflow/storage/storage_client.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace opflow {

std::string_view to_string(FaultDecision d) {
  switch (d) {
    case FaultDecision::Retry: return "retry";
    case FaultDecision::Fail: return "fail";
    case FaultDecision::Succeed: return "succeed";
    case FaultDecision::SucceedGroup: return "succeed-group";
    case FaultDecision::FailGroup: return "fail-group";
  }
  return "fail";
}

FaultDecision apply_fault_policy(const StepDef& step, const AttemptResult& result) {
  if (!result.failure) return FaultDecision::Succeed;
  bool transient = *result.failure == FailureKind::Transient ||
                   (*result.failure == FailureKind::Timeout && step.retry.timeout_is_transient);
  if (transient && result.attempt <= step.retry.max_retries_on_transient) return FaultDecision::Retry;
  return FaultDecision::Fail;
}

std::int64_t required_successes(const StepDef& step, std::int64_t n) {
  std::optional<std::int64_t> need;
  if (step.continue_on_success_ratio) need = step.continue_on_success_ratio->ceil_times(n);
  if (step.continue_on_num_success) {
    need = need ? std::min(*need, *step.continue_on_num_success) : *step.continue_on_num_success;
  }
  return need.value_or(n);
}

FaultDecision decide_group(const StepDef& step, std::int64_t n, std::int64_t succeeded) {
  return succeeded >= required_successes(step, n) ? FaultDecision::SucceedGroup : FaultDecision::FailGroup;
}

ParameterValue element_to_parameter(const std::string& json_text) {
  Json j = Json::parse(json_text);
  if (j.is_string()) return {j.get<std::string>(), TypeTag::String};
  if (j.is_number_integer()) return {j.dump(), TypeTag::Int};
  if (j.is_number()) return {j.dump(), TypeTag::Float};
  if (j.is_boolean()) return {j.dump(), TypeTag::Bool};
  return {j.dump(), TypeTag::Json};
}

ParameterValue item_field(const ParameterValue& item, const std::string& field) {
  Json j = Json::parse(item.text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains(field)) {
    throw Error(ErrorCode::TypeMismatch, "item has no field '" + field + "'");
  }
  return element_to_parameter(j[field].dump());
}

namespace {

bool all_numeric(const std::vector<std::string>& names) {
  return std::all_of(names.begin(), names.end(), [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  });
}

void sort_children(std::vector<std::string>& names) {
  if (all_numeric(names)) {
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      auto strip = [](const std::string& s) {
        auto p = s.find_first_not_of('0');
        return p == std::string::npos ? std::string("0") : s.substr(p);
      };
      std::string x = strip(a), y = strip(b);
      if (x.size() != y.size()) return x.size() < y.size();
      if (x != y) return x < y;
      return a < b;
    });
  } else {
    std::sort(names.begin(), names.end());
  }
}

}  // namespace

std::vector<std::string> artifact_children(const ArtifactValue& artifact, StorageClient* storage) {
  std::vector<std::string> names;
  if (artifact.is_local_path()) {
    std::error_code ec;
    if (!fs::is_directory(artifact.location, ec)) {
      throw Error(ErrorCode::TypeMismatch, "sliced artifact '" + artifact.location + "' is not a directory");
    }
    for (const auto& entry : fs::directory_iterator(artifact.location)) {
      names.push_back(entry.path().filename().string());
    }
  } else {
    if (storage == nullptr) throw Error(ErrorCode::Unsupported, "no storage for sliced artifact");
    std::string prefix = artifact.location + "/";
    for (const auto& key : storage->list(prefix)) {
      std::string child = key.substr(prefix.size());
      child = child.substr(0, child.find('/'));
      if (names.empty() || names.back() != child) names.push_back(child);
    }
    names.erase(std::unique(names.begin(), names.end()), names.end());
  }
  sort_children(names);
  return names;
}

std::vector<SliceInstance> expand_slices(const StepDef& step, const IoValues& bound, StorageClient* storage) {
  if (!step.slices) return {};
  std::map<std::string, std::vector<Value>> elements;
  for (const auto& name : step.slices->sliced_inputs) {
    auto value = bound.find(name);
    if (!value) throw Error(ErrorCode::MissingInput, "sliced input '" + name + "' is not bound");
    std::vector<Value>& out = elements[name];
    if (auto* p = std::get_if<ParameterValue>(&*value)) {
      Json j = Json::parse(p->text, nullptr, false);
      if (j.is_discarded() || !j.is_array()) {
        throw Error(ErrorCode::TypeMismatch, "sliced input '" + name + "' is not a JSON list");
      }
      for (const auto& e : j) out.emplace_back(element_to_parameter(e.dump()));
    } else {
      const auto& a = std::get<ArtifactValue>(*value);
      for (const auto& child : artifact_children(a, storage)) {
        std::string loc = a.location + (a.location.back() == '/' ? "" : "/") + child;
        out.emplace_back(ArtifactValue{loc, a.optional});
      }
    }
  }
  std::optional<std::size_t> n;
  for (const auto& [name, list] : elements) {
    if (n && *n != list.size()) {
      throw Error(ErrorCode::SliceLengthMismatch,
                  "sliced inputs have lengths " + std::to_string(*n) + " and " + std::to_string(list.size()));
    }
    n = list.size();
  }
  std::vector<SliceInstance> instances;
  for (std::size_t i = 0; i < n.value_or(0); ++i) {
    SliceInstance inst;
    inst.index = static_cast<std::int64_t>(i);
    inst.inputs = bound;
    Json combined = Json::object();
    for (const auto& [name, list] : elements) {
      inst.inputs.set(name, list[i]);
      if (auto* p = std::get_if<ParameterValue>(&list[i])) {
        combined[name] = Json::parse(parameter_to_json_text(*p));
      } else {
        combined[name] = std::get<ArtifactValue>(list[i]).location;
      }
    }
    if (elements.size() == 1) {
      const Value& only = elements.begin()->second[i];
      inst.item = std::holds_alternative<ParameterValue>(only)
                      ? std::get<ParameterValue>(only)
                      : ParameterValue{std::get<ArtifactValue>(only).location, TypeTag::String};
    } else {
      inst.item = ParameterValue{combined.dump(), TypeTag::Json};
    }
    instances.push_back(std::move(inst));
  }
  return instances;
}

StackedOutputs aggregate_slice_outputs(const std::vector<std::optional<IoValues>>& instances,
                                       const std::set<std::string>& stacked, const Signature& outputs) {
  StackedOutputs out;
  for (const auto& name : stacked) {
    if (outputs.find_parameter(name)) {
      Json list = Json::array();
      for (const auto& inst : instances) {
        const ParameterValue* v = nullptr;
        if (inst) {
          auto it = inst->parameters.find(name);
          if (it != inst->parameters.end()) v = &it->second;
        }
        list.push_back(v ? Json::parse(parameter_to_json_text(*v)) : Json(nullptr));
      }
      out.parameters.parameters[name] = ParameterValue{list.dump(), TypeTag::Json};
    } else if (outputs.find_artifact(name)) {
      auto& locs = out.artifacts[name];
      for (const auto& inst : instances) {
        std::optional<std::string> loc;
        if (inst) {
          auto it = inst->artifacts.find(name);
          if (it != inst->artifacts.end() && !it->second.absent()) loc = it->second.location;
        }
        locs.push_back(std::move(loc));
      }
    }
  }
  return out;
}

}  // namespace opflow
