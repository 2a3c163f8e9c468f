#include "opflow/model/document.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "opflow/error.hpp"

namespace opflow {

using Json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw Error(ErrorCode::InvalidSpec, (where.empty() ? std::string("document") : where) + ": " + message);
}

Json plain_scalar(const std::string& text) {
  if (text.empty() || text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  // Only accept texts the JSON number grammar agrees with, so that leading
  // zeros or YAML 1.1 oddities stay strings.
  auto parsed = Json::parse(text, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_number()) return parsed;
  return text;
}

Json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      if (node.Tag() == "!") return node.Scalar();  // quoted or block scalar
      return plain_scalar(node.Scalar());
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const auto& child : node) out.push_back(yaml_to_json(child));
      return out;
    }
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return out;
    }
  }
  return nullptr;
}

void allow_keys(const Json& node, const std::string& where, std::initializer_list<std::string_view> keys) {
  if (!node.is_object()) fail(where, "expected a mapping");
  for (const auto& [k, _] : node.items()) {
    bool known = false;
    for (auto allowed : keys) known = known || allowed == k;
    if (!known) fail(where, "unknown field '" + k + "'");
  }
}

std::string text_of(const Json& node, const std::string& where) {
  if (node.is_string()) return node.get<std::string>();
  if (node.is_boolean()) return node.get<bool>() ? "true" : "false";
  if (node.is_number()) return node.dump();
  fail(where, "expected a scalar");
}

std::string string_field(const Json& node, const char* key, const std::string& where) {
  if (!node.contains(key)) fail(where, std::string("missing field '") + key + "'");
  return text_of(node.at(key), where + "." + key);
}

std::optional<std::string> optional_string(const Json& node, const char* key, const std::string& where) {
  if (!node.contains(key) || node.at(key).is_null()) return std::nullopt;
  return text_of(node.at(key), where + "." + key);
}

bool bool_field(const Json& node, const char* key, const std::string& where, bool fallback) {
  if (!node.contains(key) || node.at(key).is_null()) return fallback;
  const Json& v = node.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string() && (v == "true" || v == "false")) return v == "true";
  fail(where + "." + key, "expected a boolean");
}

std::optional<std::int64_t> int_field(const Json& node, const char* key, const std::string& where) {
  if (!node.contains(key) || node.at(key).is_null()) return std::nullopt;
  const Json& v = node.at(key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) {
    if (auto c = canonicalize(TypeTag::Int, v.get<std::string>())) return std::stoll(*c);
  }
  fail(where + "." + key, "expected an integer");
}

std::vector<std::string> string_list(const Json& node, const std::string& where) {
  std::vector<std::string> out;
  if (node.is_null()) return out;
  if (!node.is_array()) fail(where, "expected a list");
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(text_of(node[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::map<std::string, std::string> string_map(const Json& node, const std::string& where) {
  std::map<std::string, std::string> out;
  if (node.is_null()) return out;
  if (!node.is_object()) fail(where, "expected a mapping");
  for (const auto& [k, v] : node.items()) out[k] = text_of(v, where + "." + k);
  return out;
}

Json members(const Json& node, const char* key) {
  return node.contains(key) ? node.at(key) : Json(nullptr);
}

TypeTag tag_of(const Json& node, const std::string& where) {
  auto text = text_of(node, where);
  auto tag = parse_type_tag(text);
  if (!tag) fail(where, "unknown type tag '" + text + "'");
  return *tag;
}

/// Signature plus any bound `value`s (used by global_inputs).
Signature parse_signature(const Json& node, const std::string& where, IoValues* values = nullptr) {
  Signature sig;
  if (node.is_null()) return sig;
  allow_keys(node, where, {"parameters", "artifacts"});
  Json params = members(node, "parameters");
  if (!params.is_null()) {
    if (!params.is_object()) fail(where + ".parameters", "expected a mapping");
    for (const auto& [name, spec] : params.items()) {
      std::string at = where + ".parameters." + name;
      ParameterSpec p;
      p.name = name;
      if (spec.is_string()) {
        p.type_tag = tag_of(spec, at);
      } else if (!spec.is_null()) {
        allow_keys(spec, at, {"type_tag", "type", "optional", "default", "value"});
        if (spec.contains("type_tag")) p.type_tag = tag_of(spec.at("type_tag"), at + ".type_tag");
        else if (spec.contains("type")) p.type_tag = tag_of(spec.at("type"), at + ".type");
        p.optional = bool_field(spec, "optional", at, false);
        if (spec.contains("default") && !spec.at("default").is_null()) {
          const Json& d = spec.at("default");
          p.default_value = d.is_structured() ? d.dump() : text_of(d, at + ".default");
        }
        if (spec.contains("value") && !spec.at("value").is_null()) {
          if (values == nullptr) fail(at, "'value' is only allowed in global_inputs");
          const Json& v = spec.at("value");
          values->parameters[name] =
              ParameterValue{v.is_structured() ? v.dump() : text_of(v, at + ".value"), p.type_tag};
        }
      }
      sig.parameters.push_back(std::move(p));
    }
  }
  Json arts = members(node, "artifacts");
  if (!arts.is_null()) {
    if (!arts.is_object()) fail(where + ".artifacts", "expected a mapping");
    for (const auto& [name, spec] : arts.items()) {
      std::string at = where + ".artifacts." + name;
      ArtifactSpec a;
      a.name = name;
      if (!spec.is_null()) {
        allow_keys(spec, at, {"optional", "default_location", "value"});
        a.optional = bool_field(spec, "optional", at, false);
        a.default_location = optional_string(spec, "default_location", at);
        if (auto v = optional_string(spec, "value", at)) {
          if (values == nullptr) fail(at, "'value' is only allowed in global_inputs");
          values->artifacts[name] = ArtifactValue{*v, a.optional};
        }
      }
      sig.artifacts.push_back(std::move(a));
    }
  }
  return sig;
}

Json signature_to_json(const Signature& sig, const IoValues* values = nullptr) {
  Json out = Json::object();
  Json params = Json::object();
  for (const auto& p : sig.parameters) {
    Json e = Json::object();
    e["type_tag"] = std::string(to_string(p.type_tag));
    if (p.optional) e["optional"] = true;
    if (p.default_value) e["default"] = *p.default_value;
    if (values) {
      if (auto it = values->parameters.find(p.name); it != values->parameters.end()) e["value"] = it->second.text;
    }
    params[p.name] = std::move(e);
  }
  Json arts = Json::object();
  for (const auto& a : sig.artifacts) {
    Json e = Json::object();
    if (a.optional) e["optional"] = true;
    if (a.default_location) e["default_location"] = *a.default_location;
    if (values) {
      if (auto it = values->artifacts.find(a.name); it != values->artifacts.end()) e["value"] = it->second.location;
    }
    arts[a.name] = std::move(e);
  }
  if (!params.empty()) out["parameters"] = std::move(params);
  if (!arts.empty()) out["artifacts"] = std::move(arts);
  return out;
}

TypeTag inferred_tag(const Json& literal) {
  if (literal.is_boolean()) return TypeTag::Bool;
  if (literal.is_number_integer()) return TypeTag::Int;
  if (literal.is_number()) return TypeTag::Float;
  if (literal.is_structured()) return TypeTag::Json;
  return TypeTag::String;
}

std::map<std::string, ValueRef> parse_bindings(const Json& node, const std::string& where) {
  std::map<std::string, ValueRef> out;
  if (node.is_null()) return out;
  if (!node.is_object()) fail(where, "expected a mapping");
  for (const auto& [name, ref] : node.items()) out.emplace(name, value_ref_from_json(ref, where + "." + name));
  return out;
}

Json bindings_to_json(const std::map<std::string, ValueRef>& bindings) {
  Json out = Json::object();
  for (const auto& [name, ref] : bindings) out[name] = value_ref_to_json(ref);
  return out;
}

StepDef parse_step(const Json& node, const std::string& where, bool dag) {
  allow_keys(node, where,
             {"name", "template", "input_bindings", "when", "slices", "key_template", "key", "retry",
              "timeout_seconds", "continue_on_failed", "continue_on_success_ratio",
              "continue_on_num_success", "executor", "dependencies"});
  StepDef s;
  s.name = string_field(node, "name", where);
  std::string at = where + "[" + s.name + "]";
  s.template_name = string_field(node, "template", at);
  s.input_bindings = parse_bindings(members(node, "input_bindings"), at + ".input_bindings");
  s.when = optional_string(node, "when", at);
  s.key_template = optional_string(node, "key_template", at);
  if (!s.key_template) s.key_template = optional_string(node, "key", at);
  if (node.contains("slices") && !node.at("slices").is_null()) {
    const Json& sl = node.at("slices");
    allow_keys(sl, at + ".slices", {"sliced_inputs", "stacked_outputs", "parallelism"});
    SlicesConfig cfg;
    for (auto& n : string_list(members(sl, "sliced_inputs"), at + ".slices.sliced_inputs")) cfg.sliced_inputs.insert(n);
    for (auto& n : string_list(members(sl, "stacked_outputs"), at + ".slices.stacked_outputs")) cfg.stacked_outputs.insert(n);
    if (auto p = int_field(sl, "parallelism", at + ".slices")) cfg.parallelism = static_cast<int>(*p);
    s.slices = std::move(cfg);
  }
  if (node.contains("retry") && !node.at("retry").is_null()) {
    const Json& r = node.at("retry");
    allow_keys(r, at + ".retry", {"max_retries_on_transient", "timeout_is_transient"});
    s.retry.max_retries_on_transient = static_cast<int>(int_field(r, "max_retries_on_transient", at + ".retry").value_or(0));
    s.retry.timeout_is_transient = bool_field(r, "timeout_is_transient", at + ".retry", false);
  }
  s.timeout_seconds = int_field(node, "timeout_seconds", at);
  s.continue_on_failed = bool_field(node, "continue_on_failed", at, false);
  if (auto ratio = optional_string(node, "continue_on_success_ratio", at)) {
    s.continue_on_success_ratio = Ratio::parse(*ratio);
    if (!s.continue_on_success_ratio) fail(at + ".continue_on_success_ratio", "expected a decimal in (0, 1]");
  }
  s.continue_on_num_success = int_field(node, "continue_on_num_success", at);
  s.executor = optional_string(node, "executor", at);
  s.dependencies = string_list(members(node, "dependencies"), at + ".dependencies");
  if (!dag && !s.dependencies.empty()) fail(at + ".dependencies", "only DAG tasks take dependencies");
  return s;
}

Json step_to_json(const StepDef& s) {
  Json out = Json::object();
  out["name"] = s.name;
  out["template"] = s.template_name;
  if (!s.input_bindings.empty()) out["input_bindings"] = bindings_to_json(s.input_bindings);
  if (s.when) out["when"] = *s.when;
  if (s.slices) {
    Json sl = Json::object();
    sl["sliced_inputs"] = std::vector<std::string>(s.slices->sliced_inputs.begin(), s.slices->sliced_inputs.end());
    sl["stacked_outputs"] = std::vector<std::string>(s.slices->stacked_outputs.begin(), s.slices->stacked_outputs.end());
    if (s.slices->parallelism) sl["parallelism"] = *s.slices->parallelism;
    out["slices"] = std::move(sl);
  }
  if (s.key_template) out["key_template"] = *s.key_template;
  if (s.retry != RetryPolicy{}) {
    out["retry"] = Json{{"max_retries_on_transient", s.retry.max_retries_on_transient},
                        {"timeout_is_transient", s.retry.timeout_is_transient}};
  }
  if (s.timeout_seconds) out["timeout_seconds"] = *s.timeout_seconds;
  if (s.continue_on_failed) out["continue_on_failed"] = true;
  if (s.continue_on_success_ratio) out["continue_on_success_ratio"] = s.continue_on_success_ratio->to_string();
  if (s.continue_on_num_success) out["continue_on_num_success"] = *s.continue_on_num_success;
  if (s.executor) out["executor"] = *s.executor;
  if (!s.dependencies.empty()) out["dependencies"] = s.dependencies;
  return out;
}

OpTemplate parse_template(const std::string& name, const Json& node, const std::string& where) {
  if (!node.is_object()) fail(where, "expected a mapping");
  std::string kind = node.contains("kind") ? text_of(node.at("kind"), where + ".kind") : "script";
  if (kind == "script") {
    allow_keys(node, where,
               {"name", "kind", "image", "command", "script", "inputs", "outputs",
                "output_parameter_sources", "output_artifact_sources", "input_artifact_mounts"});
    ScriptTemplate t;
    t.name = name;
    t.image = optional_string(node, "image", where).value_or("");
    if (node.contains("command")) {
      const Json& c = node.at("command");
      t.command = c.is_array() ? string_list(c, where + ".command") : std::vector<std::string>{text_of(c, where + ".command")};
    }
    t.script = optional_string(node, "script", where).value_or("");
    t.inputs = parse_signature(members(node, "inputs"), where + ".inputs");
    t.outputs = parse_signature(members(node, "outputs"), where + ".outputs");
    t.output_parameter_sources = string_map(members(node, "output_parameter_sources"), where + ".output_parameter_sources");
    t.output_artifact_sources = string_map(members(node, "output_artifact_sources"), where + ".output_artifact_sources");
    t.input_artifact_mounts = string_map(members(node, "input_artifact_mounts"), where + ".input_artifact_mounts");
    return t;
  }
  if (kind != "steps" && kind != "dag") fail(where + ".kind", "unknown template kind '" + kind + "'");
  allow_keys(node, where, {"name", "kind", "inputs", "outputs", "body", "output_bindings"});
  bool dag = kind == "dag";
  Signature inputs = parse_signature(members(node, "inputs"), where + ".inputs");
  Signature outputs = parse_signature(members(node, "outputs"), where + ".outputs");
  std::vector<StepDef> body;
  Json b = members(node, "body");
  if (!b.is_null()) {
    if (!b.is_array()) fail(where + ".body", "expected a list");
    for (std::size_t i = 0; i < b.size(); ++i) body.push_back(parse_step(b[i], where + ".body[" + std::to_string(i) + "]", dag));
  }
  auto outs = parse_bindings(members(node, "output_bindings"), where + ".output_bindings");
  if (dag) return DagTemplate{name, std::move(inputs), std::move(outputs), std::move(body), std::move(outs)};
  return StepsTemplate{name, std::move(inputs), std::move(outputs), std::move(body), std::move(outs)};
}

Json template_to_json(const OpTemplate& tmpl) {
  Json out = Json::object();
  if (auto* t = std::get_if<ScriptTemplate>(&tmpl)) {
    out["kind"] = "script";
    if (!t->image.empty()) out["image"] = t->image;
    out["command"] = t->command;
    out["script"] = t->script;
    out["inputs"] = signature_to_json(t->inputs);
    out["outputs"] = signature_to_json(t->outputs);
    if (!t->output_parameter_sources.empty()) out["output_parameter_sources"] = t->output_parameter_sources;
    if (!t->output_artifact_sources.empty()) out["output_artifact_sources"] = t->output_artifact_sources;
    if (!t->input_artifact_mounts.empty()) out["input_artifact_mounts"] = t->input_artifact_mounts;
    return out;
  }
  out["kind"] = std::holds_alternative<DagTemplate>(tmpl) ? "dag" : "steps";
  out["inputs"] = signature_to_json(input_signature(tmpl));
  out["outputs"] = signature_to_json(output_signature(tmpl));
  Json body = Json::array();
  for (const auto& s : *template_body(tmpl)) body.push_back(step_to_json(s));
  out["body"] = std::move(body);
  out["output_bindings"] = bindings_to_json(*template_output_bindings(tmpl));
  return out;
}

ExecutorConfig parse_executor(const std::string& name, const Json& node, const std::string& where) {
  allow_keys(node, where, {"name", "type", "machine", "resources"});
  ExecutorConfig ex;
  ex.name = name;
  ex.type = string_field(node, "type", where);
  if (node.contains("machine")) {
    const Json& m = node.at("machine");
    allow_keys(m, where + ".machine", {"batch_type", "work_root"});
    auto bt = optional_string(m, "batch_type", where + ".machine").value_or("sim");
    auto parsed = parse_batch_type(bt);
    if (!parsed) fail(where + ".machine.batch_type", "unknown batch type '" + bt + "'");
    ex.machine.batch_type = *parsed;
    ex.machine.work_root = optional_string(m, "work_root", where + ".machine").value_or("");
  }
  if (node.contains("resources")) {
    const Json& r = node.at("resources");
    std::string at = where + ".resources";
    allow_keys(r, at, {"cpu", "memory_mb", "queue", "walltime_seconds"});
    ex.resources.cpu = static_cast<int>(int_field(r, "cpu", at).value_or(ex.resources.cpu));
    ex.resources.memory_mb = static_cast<int>(int_field(r, "memory_mb", at).value_or(ex.resources.memory_mb));
    ex.resources.queue = optional_string(r, "queue", at).value_or(ex.resources.queue);
    ex.resources.walltime_seconds = int_field(r, "walltime_seconds", at).value_or(ex.resources.walltime_seconds);
  }
  return ex;
}

}  // namespace

ValueRef value_ref_from_json(const Json& node, const std::string& where) {
  if (!node.is_object()) {
    if (node.is_null()) fail(where, "binding must not be null");
    return ref::Literal{ParameterValue{node.is_structured() ? node.dump() : text_of(node, where), inferred_tag(node)}};
  }
  if (node.contains("literal")) {
    allow_keys(node, where, {"literal", "type_tag"});
    const Json& lit = node.at("literal");
    ParameterValue pv{lit.is_structured() ? lit.dump() : text_of(lit, where + ".literal"), inferred_tag(lit)};
    if (node.contains("type_tag")) pv.type_tag = tag_of(node.at("type_tag"), where + ".type_tag");
    return ref::Literal{pv};
  }
  if (node.contains("artifact")) {
    allow_keys(node, where, {"artifact", "optional"});
    return ref::Literal{ArtifactValue{text_of(node.at("artifact"), where + ".artifact"),
                                      bool_field(node, "optional", where, false)}};
  }
  if (node.size() != 1) fail(where, "a binding has exactly one source field");
  if (node.contains("workflow_input")) return ref::WorkflowInput{text_of(node.at("workflow_input"), where)};
  if (node.contains("template_input")) return ref::TemplateInput{text_of(node.at("template_input"), where)};
  if (node.contains("step_output")) {
    const Json& so = node.at("step_output");
    if (so.is_string()) {
      auto text = so.get<std::string>();
      auto dot = text.find('.');
      if (dot == std::string::npos) fail(where, "step_output shorthand is '<step>.<output>'");
      return ref::StepOutput{text.substr(0, dot), text.substr(dot + 1)};
    }
    allow_keys(so, where + ".step_output", {"step", "name"});
    return ref::StepOutput{string_field(so, "step", where + ".step_output"), string_field(so, "name", where + ".step_output")};
  }
  if (node.contains("item")) {
    const Json& item = node.at("item");
    if (item.is_boolean() || item.is_null()) return ref::Item{};
    return ref::ItemField{text_of(item, where + ".item")};
  }
  if (node.contains("item_field")) return ref::ItemField{text_of(node.at("item_field"), where)};
  fail(where, "unknown binding source");
}

Json value_ref_to_json(const ValueRef& ref) {
  return std::visit(
      [](const auto& r) -> Json {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, ref::Literal>) {
          if (auto* pv = std::get_if<ParameterValue>(&r.value)) {
            return Json{{"literal", pv->text}, {"type_tag", std::string(to_string(pv->type_tag))}};
          }
          const auto& av = std::get<ArtifactValue>(r.value);
          Json out{{"artifact", av.location}};
          if (av.optional) out["optional"] = true;
          return out;
        } else if constexpr (std::is_same_v<R, ref::WorkflowInput>) {
          return Json{{"workflow_input", r.name}};
        } else if constexpr (std::is_same_v<R, ref::TemplateInput>) {
          return Json{{"template_input", r.name}};
        } else if constexpr (std::is_same_v<R, ref::StepOutput>) {
          return Json{{"step_output", Json{{"step", r.step}, {"name", r.name}}}};
        } else if constexpr (std::is_same_v<R, ref::Item>) {
          return Json{{"item", true}};
        } else {
          return Json{{"item_field", r.field}};
        }
      },
      ref);
}

WorkflowSpec parse_workflow_document(std::string_view text) {
  Json doc;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) fail("", "malformed JSON document");
  } else {
    try {
      doc = yaml_to_json(YAML::Load(std::string(text)));
    } catch (const YAML::Exception& e) {
      fail("", std::string("malformed YAML: ") + e.what());
    }
  }
  allow_keys(doc, "", {"apiVersion", "name", "entrypoint", "templates", "global_inputs", "executors", "default_executor"});
  auto version = optional_string(doc, "apiVersion", "");
  if (!version) fail("apiVersion", "missing; expected '" + std::string(kApiVersion) + "'");
  if (*version != kApiVersion) fail("apiVersion", "unsupported version '" + *version + "'");

  WorkflowSpec spec;
  spec.name = string_field(doc, "name", "");
  spec.entrypoint = string_field(doc, "entrypoint", "");
  spec.default_executor = optional_string(doc, "default_executor", "");
  spec.global_inputs.signature =
      parse_signature(members(doc, "global_inputs"), "global_inputs", &spec.global_inputs.values);

  Json templates = members(doc, "templates");
  if (templates.is_object()) {
    for (const auto& [name, t] : templates.items()) {
      if (t.contains("name") && text_of(t.at("name"), "templates." + name + ".name") != name) {
        fail("templates." + name + ".name", "does not match its key");
      }
      spec.templates.emplace(name, parse_template(name, t, "templates." + name));
    }
  } else if (templates.is_array()) {
    for (std::size_t i = 0; i < templates.size(); ++i) {
      std::string at = "templates[" + std::to_string(i) + "]";
      std::string name = string_field(templates[i], "name", at);
      if (!spec.templates.emplace(name, parse_template(name, templates[i], at)).second) {
        fail(at, "duplicate template '" + name + "'");
      }
    }
  } else if (!templates.is_null()) {
    fail("templates", "expected a mapping or list");
  }

  Json executors = members(doc, "executors");
  if (executors.is_object()) {
    for (const auto& [name, e] : executors.items()) spec.executors.push_back(parse_executor(name, e, "executors." + name));
  } else if (!executors.is_null()) {
    fail("executors", "expected a mapping");
  }
  return spec;
}

WorkflowSpec load_workflow_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_workflow_document(buf.str());
}

Json to_document(const WorkflowSpec& spec) {
  Json doc = Json::object();
  doc["apiVersion"] = std::string(kApiVersion);
  doc["name"] = spec.name;
  doc["entrypoint"] = spec.entrypoint;
  if (spec.default_executor) doc["default_executor"] = *spec.default_executor;
  doc["global_inputs"] = signature_to_json(spec.global_inputs.signature, &spec.global_inputs.values);
  if (!spec.executors.empty()) {
    Json exs = Json::object();
    for (const auto& e : spec.executors) {
      exs[e.name] = Json{{"type", e.type},
                         {"machine", Json{{"batch_type", std::string(to_string(e.machine.batch_type))},
                                          {"work_root", e.machine.work_root}}},
                         {"resources", Json{{"cpu", e.resources.cpu},
                                            {"memory_mb", e.resources.memory_mb},
                                            {"queue", e.resources.queue},
                                            {"walltime_seconds", e.resources.walltime_seconds}}}};
    }
    doc["executors"] = std::move(exs);
  }
  Json templates = Json::object();
  for (const auto& [name, t] : spec.templates) templates[name] = template_to_json(t);
  doc["templates"] = std::move(templates);
  return doc;
}

std::string dump_workflow_document(const WorkflowSpec& spec) { return to_document(spec).dump(2) + "\n"; }

}  // namespace opflow
