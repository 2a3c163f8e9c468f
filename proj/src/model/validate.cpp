#include "opflow/model/validate.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "opflow/error.hpp"
#include "opflow/expr/expression.hpp"
#include "opflow/model/typecheck.hpp"

namespace opflow {

bool ValidationReport::has_errors() const { return error_count() > 0; }

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(
      diagnostics.begin(), diagnostics.end(),
      [](const Diagnostic& d) { return d.severity == Severity::Error; }));
}

std::vector<std::string> placeholder_step_refs(const std::string& text) {
  std::vector<std::string> refs;
  for (const auto& path : expr::placeholder_paths(text)) {
    for (std::string_view prefix : {"steps.", "tasks."}) {
      if (path.rfind(prefix, 0) == 0) {
        auto rest = path.substr(prefix.size());
        refs.push_back(rest.substr(0, rest.find('.')));
      }
    }
  }
  return refs;
}

std::vector<Edge> infer_dag_dependencies(const DagTemplate& dag) {
  std::set<Edge> edges;
  auto require = [&](const std::string& producer, const std::string& consumer) {
    if (dag.find_task(producer) == nullptr) {
      throw Error(ErrorCode::UnresolvedReference,
                  "task '" + consumer + "' references unknown task '" + producer + "'");
    }
    edges.emplace(producer, consumer);
  };
  for (const auto& task : dag.body) {
    for (const auto& [_, binding] : task.input_bindings) {
      if (auto* out = std::get_if<ref::StepOutput>(&binding)) require(out->step, task.name);
    }
    for (const auto* text : {task.when ? &*task.when : nullptr,
                             task.key_template ? &*task.key_template : nullptr}) {
      if (text == nullptr) continue;
      for (const auto& producer : placeholder_step_refs(*text)) require(producer, task.name);
    }
    for (const auto& dep : task.dependencies) require(dep, task.name);
  }
  return {edges.begin(), edges.end()};
}

std::optional<std::vector<std::string>> detect_cycles(const std::vector<Edge>& edges,
                                                      const std::vector<std::string>& nodes) {
  std::map<std::string, std::vector<std::string>> adjacency;
  std::vector<std::string> order = nodes;
  for (const auto& [from, to] : edges) {
    adjacency[from].push_back(to);
    for (const auto* n : {&from, &to}) {
      if (std::find(order.begin(), order.end(), *n) == order.end()) order.push_back(*n);
    }
  }
  for (auto& [_, next] : adjacency) std::sort(next.begin(), next.end());

  enum class Color { White, Grey, Black };
  std::map<std::string, Color> color;
  for (const auto& n : order) color[n] = Color::White;

  struct Frame {
    std::string node;
    std::size_t next = 0;
  };
  for (const auto& root : order) {
    if (color[root] != Color::White) continue;
    std::vector<Frame> stack{{root, 0}};
    color[root] = Color::Grey;
    while (!stack.empty()) {
      Frame& top = stack.back();
      const auto& succ = adjacency[top.node];
      if (top.next == succ.size()) {
        color[top.node] = Color::Black;
        stack.pop_back();
        continue;
      }
      const std::string next = succ[top.next++];
      if (color[next] == Color::Grey) {
        std::vector<std::string> cycle;
        auto it = std::find_if(stack.begin(), stack.end(),
                               [&](const Frame& f) { return f.node == next; });
        for (; it != stack.end(); ++it) cycle.push_back(it->node);
        return cycle;
      }
      if (color[next] == Color::White) {
        color[next] = Color::Grey;
        stack.push_back({next, 0});
      }
    }
  }
  return std::nullopt;
}

bool is_valid_step_key(std::string_view key) {
  if (key.empty() || key.size() > 200) return false;
  auto ok = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  };
  return std::all_of(key.begin(), key.end(), ok) && key.front() != '.' && key.front() != '-';
}

namespace {

bool is_json_list(std::string_view text) {
  auto doc = nlohmann::json::parse(text, nullptr, false);
  return !doc.is_discarded() && doc.is_array();
}

class Validator {
 public:
  explicit Validator(const WorkflowSpec& spec) : spec_(spec) {}

  ValidationReport run() {
    if (!is_identifier(spec_.name)) error("name", "invalid workflow name '" + spec_.name + "'");
    if (spec_.find_template(spec_.entrypoint) == nullptr) {
      error("entrypoint", "unresolved template '" + spec_.entrypoint + "'");
    }
    check_signature(spec_.global_inputs.signature, "global_inputs");
    check_global_values();
    check_executors();
    for (const auto& [name, tmpl] : spec_.templates) {
      std::string where = "templates." + name;
      if (template_name(tmpl) != name) error(where, "template name mismatch");
      if (!is_identifier(name)) error(where, "invalid template name '" + name + "'");
      check_signature(input_signature(tmpl), where + ".inputs");
      check_signature(output_signature(tmpl), where + ".outputs");
      if (auto* script = std::get_if<ScriptTemplate>(&tmpl)) check_script(*script, where);
      if (auto* steps = std::get_if<StepsTemplate>(&tmpl)) {
        check_body(tmpl, steps->body, false, where);
        check_output_bindings(tmpl, steps->output_bindings, where);
      }
      if (auto* dag = std::get_if<DagTemplate>(&tmpl)) {
        check_body(tmpl, dag->body, true, where);
        check_output_bindings(tmpl, dag->output_bindings, where);
        check_dag_acyclic(*dag, where);
      }
    }
    check_entry_inputs();
    check_recursion();
    check_static_keys();
    return std::move(report_);
  }

 private:
  void error(std::string location, std::string message) {
    report_.diagnostics.push_back({Severity::Error, std::move(location), std::move(message)});
  }
  void warning(std::string location, std::string message) {
    report_.diagnostics.push_back({Severity::Warning, std::move(location), std::move(message)});
  }

  void check_signature(const Signature& sig, const std::string& where) {
    std::set<std::string> seen;
    for (const auto& p : sig.parameters) {
      std::string at = where + ".parameters." + p.name;
      if (!is_identifier(p.name)) error(at, "invalid identifier '" + p.name + "'");
      if (!seen.insert(p.name).second) error(at, "duplicate name '" + p.name + "'");
      if (p.default_value && !canonicalize(p.type_tag, *p.default_value)) {
        error(at, "default '" + *p.default_value + "' is not a valid " +
                      std::string(to_string(p.type_tag)));
      }
    }
    for (const auto& a : sig.artifacts) {
      std::string at = where + ".artifacts." + a.name;
      if (!is_identifier(a.name)) error(at, "invalid identifier '" + a.name + "'");
      if (!seen.insert(a.name).second) error(at, "duplicate name '" + a.name + "'");
      if (a.default_location && a.default_location->empty()) error(at, "empty default location");
    }
  }

  void check_global_values() {
    const auto& gi = spec_.global_inputs;
    try {
      (void)typecheck_io(gi.signature, gi.values);
    } catch (const Error& e) {
      error("global_inputs", e.what());
    }
  }

  void check_executors() {
    std::set<std::string> names{"local"};
    for (const auto& ex : spec_.executors) {
      std::string at = "executors." + ex.name;
      if (!is_identifier(ex.name)) error(at, "invalid executor name");
      if (!names.insert(ex.name).second) error(at, "duplicate executor name");
      if (ex.type != "local" && ex.type != "dispatcher") error(at, "unknown executor type '" + ex.type + "'");
      if (ex.type == "dispatcher") {
        if (ex.machine.work_root.empty()) error(at, "machine.work_root is required");
        if (ex.resources.cpu < 1) error(at, "resources.cpu must be positive");
        if (ex.resources.memory_mb < 1) error(at, "resources.memory_mb must be positive");
        if (ex.resources.walltime_seconds < 1) error(at, "resources.walltime_seconds must be >= 1");
      }
    }
    if (spec_.default_executor && !names.count(*spec_.default_executor)) {
      error("default_executor", "unknown executor '" + *spec_.default_executor + "'");
    }
    executor_names_ = std::move(names);
  }

  void check_script(const ScriptTemplate& t, const std::string& where) {
    if (t.command.empty()) error(where + ".command", "command must not be empty");
    for (const auto& p : t.outputs.parameters) {
      if (!t.output_parameter_sources.count(p.name)) {
        error(where + ".output_parameter_sources", "output parameter '" + p.name + "' has no source");
      }
    }
    for (const auto& [name, path] : t.output_parameter_sources) {
      if (!t.outputs.find_parameter(name)) {
        error(where + ".output_parameter_sources", "source for undeclared output '" + name + "'");
      }
      check_relative_path(path, where + ".output_parameter_sources." + name);
    }
    for (const auto& a : t.outputs.artifacts) {
      if (!t.output_artifact_sources.count(a.name)) {
        error(where + ".output_artifact_sources", "output artifact '" + a.name + "' has no source");
      }
    }
    for (const auto& [name, path] : t.output_artifact_sources) {
      if (!t.outputs.find_artifact(name)) {
        error(where + ".output_artifact_sources", "source for undeclared output '" + name + "'");
      }
      check_relative_path(path, where + ".output_artifact_sources." + name);
    }
    std::set<std::string> mounts;
    for (const auto& a : t.inputs.artifacts) {
      if (!t.input_artifact_mounts.count(a.name)) {
        error(where + ".input_artifact_mounts", "input artifact '" + a.name + "' has no mount path");
      }
    }
    for (const auto& [name, path] : t.input_artifact_mounts) {
      std::string at = where + ".input_artifact_mounts." + name;
      if (!t.inputs.find_artifact(name)) error(at, "mount for undeclared input '" + name + "'");
      check_relative_path(path, at);
      if (!mounts.insert(path).second) error(at, "mount path '" + path + "' is not distinct");
    }
    for (const auto& path : expr::placeholder_paths(t.script)) {
      if (path == "workflow.name" || path == "workflow.id") continue;
      const std::string prefix = "inputs.parameters.";
      if (path.rfind(prefix, 0) == 0 && t.inputs.find_parameter(path.substr(prefix.size()))) continue;
      error(where + ".script", "unresolved placeholder '{{" + path + "}}'");
    }
  }

  void check_relative_path(const std::string& path, const std::string& where) {
    if (path.empty() || path.front() == '/') {
      error(where, "path '" + path + "' must be relative");
      return;
    }
    std::size_t start = 0;
    while (start <= path.size()) {
      auto end = path.find('/', start);
      if (end == std::string::npos) end = path.size();
      if (path.compare(start, end - start, "..") == 0) {
        error(where, "path '" + path + "' must not contain '..'");
        return;
      }
      start = end + 1;
    }
  }

  /// Kind of value a reference produces; nullopt when it cannot be known.
  enum class Kind { Parameter, Artifact };

  struct BindingTarget {
    Kind kind;
    const ParameterSpec* parameter = nullptr;
    bool sliced = false;
  };

  void check_body(const OpTemplate& owner, const std::vector<StepDef>& body, bool is_dag,
                  const std::string& where) {
    std::set<std::string> names;
    for (const auto& step : body) {
      std::string at = where + ".body." + step.name;
      if (!is_identifier(step.name)) error(at, "invalid step name '" + step.name + "'");
      if (!names.insert(step.name).second) error(at, "duplicate step name '" + step.name + "'");
    }
    for (std::size_t i = 0; i < body.size(); ++i) check_step(owner, body, i, is_dag, where);
  }

  /// Position of `name` in `body`, or npos.
  static std::size_t index_of(const std::vector<StepDef>& body, std::string_view name) {
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i].name == name) return i;
    }
    return std::string::npos;
  }

  void check_step(const OpTemplate& owner, const std::vector<StepDef>& body, std::size_t index,
                  bool is_dag, const std::string& where) {
    const StepDef& step = body[index];
    const std::string at = where + ".body." + step.name;
    const OpTemplate* target = spec_.find_template(step.template_name);
    if (target == nullptr) {
      error(at + ".template", "unresolved template '" + step.template_name + "'");
    }

    if (step.slices) {
      const auto& sl = *step.slices;
      if (sl.sliced_inputs.empty()) error(at + ".slices", "sliced_inputs must not be empty");
      if (sl.parallelism && *sl.parallelism < 1) error(at + ".slices", "parallelism must be positive");
      if (target) {
        for (const auto& name : sl.sliced_inputs) {
          if (!input_signature(*target).contains(name)) {
            error(at + ".slices", "sliced input '" + name + "' is not an input of '" +
                                      step.template_name + "'");
          } else if (!step.input_bindings.count(name)) {
            error(at + ".slices", "sliced input '" + name + "' is not bound");
          }
        }
        for (const auto& name : sl.stacked_outputs) {
          if (!output_signature(*target).contains(name)) {
            error(at + ".slices", "stacked output '" + name + "' is not an output of '" +
                                      step.template_name + "'");
          }
        }
      }
    }
    if ((step.continue_on_success_ratio || step.continue_on_num_success) && !step.slices) {
      error(at, "continue_on_success_ratio/continue_on_num_success require slices");
    }
    if (step.continue_on_success_ratio && step.continue_on_num_success) {
      error(at, "set at most one of continue_on_success_ratio and continue_on_num_success");
    }
    if (step.continue_on_num_success && *step.continue_on_num_success < 1) {
      error(at, "continue_on_num_success must be positive");
    }
    if (step.retry.max_retries_on_transient < 0) error(at + ".retry", "max_retries_on_transient must be >= 0");
    if (step.timeout_seconds && *step.timeout_seconds < 1) error(at, "timeout_seconds must be positive");
    if (step.executor && !executor_names_.count(*step.executor)) {
      error(at + ".executor", "unknown executor '" + *step.executor + "'");
    }

    if (target) {
      const Signature& inputs = input_signature(*target);
      for (const auto& p : inputs.parameters) {
        if (!p.optional && !p.default_value && !step.input_bindings.count(p.name)) {
          error(at + ".input_bindings", "input parameter '" + p.name + "' is not bound");
        }
      }
      for (const auto& a : inputs.artifacts) {
        if (!a.optional && !a.default_location && !step.input_bindings.count(a.name)) {
          error(at + ".input_bindings", "input artifact '" + a.name + "' is not bound");
        }
      }
      for (const auto& [name, binding] : step.input_bindings) {
        std::string bat = at + ".input_bindings." + name;
        std::optional<BindingTarget> tgt;
        if (auto* p = inputs.find_parameter(name)) {
          tgt = BindingTarget{Kind::Parameter, p, step.slices && step.slices->sliced_inputs.count(name)};
        } else if (inputs.find_artifact(name)) {
          tgt = BindingTarget{Kind::Artifact, nullptr, step.slices && step.slices->sliced_inputs.count(name)};
        } else {
          error(bat, "'" + step.template_name + "' has no input '" + name + "'");
          continue;
        }
        check_ref(owner, &body, index, is_dag, binding, &*tgt, step.slices.has_value(), bat);
      }
    }

    for (const auto* field : {&step.when, &step.key_template}) {
      if (!*field) continue;
      bool is_when = field == &step.when;
      std::string fat = at + (is_when ? ".when" : ".key_template");
      expr::Scope dummy;
      bool resolvable = true;
      for (const auto& path : expr::placeholder_paths(**field)) {
        if (!check_placeholder(owner, body, index, is_dag, path, fat)) resolvable = false;
        dummy.bind(path, ParameterValue{"0", TypeTag::Int});
      }
      if (!resolvable) continue;
      if (is_when) {
        try {
          (void)expr::parse_expression(expr::render_placeholders(**field, dummy,
                                                                 expr::RenderMode::ExpressionLiteral));
        } catch (const Error& e) {
          error(fat, e.what());
        }
      }
    }

    if (is_dag) {
      for (const auto& dep : step.dependencies) {
        if (dep == step.name) {
          error(at + ".dependencies", "task depends on itself");
        } else if (index_of(body, dep) == std::string::npos) {
          error(at + ".dependencies", "unknown task '" + dep + "'");
        }
      }
    } else if (!step.dependencies.empty()) {
      error(at + ".dependencies", "explicit dependencies are only valid in a DAG");
    }
  }

  bool check_placeholder(const OpTemplate& owner, const std::vector<StepDef>& body,
                         std::size_t index, bool is_dag, const std::string& path,
                         const std::string& where) {
    if (path == "workflow.name" || path == "workflow.id") return true;
    const std::string in_prefix = "inputs.parameters.";
    if (path.rfind(in_prefix, 0) == 0) {
      if (input_signature(owner).find_parameter(path.substr(in_prefix.size()))) return true;
      error(where, "unresolved placeholder '{{" + path + "}}'");
      return false;
    }
    for (std::string prefix : {"steps.", "tasks."}) {
      if (path.rfind(prefix, 0) != 0) continue;
      auto rest = path.substr(prefix.size());
      auto dot = rest.find('.');
      std::string producer = rest.substr(0, dot);
      std::string tail = dot == std::string::npos ? "" : rest.substr(dot);
      const std::string out_prefix = ".outputs.parameters.";
      if (tail.rfind(out_prefix, 0) != 0) break;
      std::string output = tail.substr(out_prefix.size());
      if (!producer_ok(body, index, is_dag, producer, where)) return false;
      const StepDef& prod = body[index_of(body, producer)];
      if (const OpTemplate* pt = spec_.find_template(prod.template_name)) {
        if (!output_signature(*pt).find_parameter(output)) {
          error(where, "'" + producer + "' has no output parameter '" + output + "'");
          return false;
        }
      }
      return true;
    }
    error(where, "unresolved placeholder '{{" + path + "}}'");
    return false;
  }

  bool producer_ok(const std::vector<StepDef>& body, std::size_t index, bool is_dag,
                   const std::string& producer, const std::string& where) {
    std::size_t pos = index_of(body, producer);
    if (pos == std::string::npos) {
      error(where, "reference to unknown step '" + producer + "'");
      return false;
    }
    if (pos == index) {
      error(where, "step references its own output");
      return false;
    }
    if (!is_dag && pos > index) {
      error(where, "step '" + producer + "' runs later; Steps may only reference earlier steps");
      return false;
    }
    return true;
  }

  void check_ref(const OpTemplate& owner, const std::vector<StepDef>* body, std::size_t index,
                 bool is_dag, const ValueRef& binding, const BindingTarget* target, bool in_sliced_step,
                 const std::string& where) {
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, ref::Literal>) {
            if (auto* pv = std::get_if<ParameterValue>(&r.value)) {
              if (target->kind != Kind::Parameter) {
                error(where, "parameter literal bound to an artifact");
              } else if (target->sliced) {
                if (!is_json_list(pv->text)) error(where, "sliced input must be bound to a JSON list");
              } else if (target->parameter && !canonicalize(target->parameter->type_tag, pv->text)) {
                error(where, "literal '" + pv->text + "' is not a valid " +
                                 std::string(to_string(target->parameter->type_tag)));
              }
            } else if (target->kind != Kind::Artifact) {
              error(where, "artifact literal bound to a parameter");
            } else if (std::get<ArtifactValue>(r.value).absent()) {
              error(where, "artifact literal has an empty location");
            }
          } else if constexpr (std::is_same_v<R, ref::WorkflowInput>) {
            const Signature& gsig = spec_.global_inputs.signature;
            if (auto* p = gsig.find_parameter(r.name)) {
              if (target->kind != Kind::Parameter) {
                error(where, "workflow parameter '" + r.name + "' bound to an artifact");
                return;
              }
              auto it = spec_.global_inputs.values.parameters.find(r.name);
              if (it == spec_.global_inputs.values.parameters.end()) return;
              if (target->sliced) {
                if (!is_json_list(it->second.text)) error(where, "sliced input must be bound to a JSON list");
              } else if (target->parameter &&
                         !canonicalize(target->parameter->type_tag, it->second.text)) {
                error(where, "workflow input '" + r.name + "' is not a valid " +
                                 std::string(to_string(target->parameter->type_tag)));
              }
              (void)p;
            } else if (gsig.find_artifact(r.name)) {
              if (target->kind != Kind::Artifact) error(where, "workflow artifact '" + r.name + "' bound to a parameter");
            } else {
              error(where, "unresolved workflow input '" + r.name + "'");
            }
          } else if constexpr (std::is_same_v<R, ref::TemplateInput>) {
            const Signature& sig = input_signature(owner);
            if (sig.find_parameter(r.name)) {
              if (target->kind != Kind::Parameter) error(where, "template parameter '" + r.name + "' bound to an artifact");
            } else if (sig.find_artifact(r.name)) {
              if (target->kind != Kind::Artifact) error(where, "template artifact '" + r.name + "' bound to a parameter");
            } else {
              error(where, "'" + template_name(owner) + "' has no input '" + r.name + "'");
            }
          } else if constexpr (std::is_same_v<R, ref::StepOutput>) {
            if (body == nullptr || !producer_ok(*body, index, is_dag, r.step, where)) {
              if (body == nullptr) error(where, "step output reference outside a body");
              return;
            }
            const StepDef& prod = (*body)[index_of(*body, r.step)];
            const OpTemplate* pt = spec_.find_template(prod.template_name);
            if (pt == nullptr) return;
            const Signature& outs = output_signature(*pt);
            if (outs.find_parameter(r.name)) {
              if (target->kind != Kind::Parameter) error(where, "output parameter '" + r.name + "' bound to an artifact");
            } else if (outs.find_artifact(r.name)) {
              if (target->kind != Kind::Artifact) error(where, "output artifact '" + r.name + "' bound to a parameter");
            } else {
              error(where, "'" + r.step + "' has no output '" + r.name + "'");
            }
          } else {
            if (!in_sliced_step) error(where, "item references are only valid in a sliced step");
            if (target->kind != Kind::Parameter) error(where, "item bound to an artifact");
          }
        },
        binding);
  }

  void check_output_bindings(const OpTemplate& owner, const std::map<std::string, ValueRef>& bindings,
                             const std::string& where) {
    const Signature& outs = output_signature(owner);
    const auto* body = template_body(owner);
    bool is_dag = std::holds_alternative<DagTemplate>(owner);
    for (const auto& p : outs.parameters) {
      if (!p.optional && !bindings.count(p.name)) {
        error(where + ".output_bindings", "output parameter '" + p.name + "' is not bound");
      }
    }
    for (const auto& a : outs.artifacts) {
      if (!a.optional && !bindings.count(a.name)) {
        error(where + ".output_bindings", "output artifact '" + a.name + "' is not bound");
      }
    }
    for (const auto& [name, binding] : bindings) {
      std::string at = where + ".output_bindings." + name;
      BindingTarget tgt{Kind::Parameter};
      if (auto* p = outs.find_parameter(name)) {
        tgt.parameter = p;
      } else if (outs.find_artifact(name)) {
        tgt.kind = Kind::Artifact;
      } else {
        error(at, "no declared output '" + name + "'");
        continue;
      }
      // Output bindings see the whole body; for Steps pretend we sit after it.
      std::size_t index = is_dag ? std::string::npos : body->size();
      check_ref(owner, body, index, true, binding, &tgt, false, at);
    }
  }

  void check_dag_acyclic(const DagTemplate& dag, const std::string& where) {
    std::vector<Edge> edges;
    try {
      edges = infer_dag_dependencies(dag);
    } catch (const Error&) {
      return;  // unresolved references are already reported per binding
    }
    std::vector<std::string> nodes;
    for (const auto& t : dag.body) nodes.push_back(t.name);
    if (auto cycle = detect_cycles(edges, nodes)) {
      std::string path;
      for (const auto& n : *cycle) path += n + " -> ";
      error(where + ".body", "dependency cycle: " + path + cycle->front());
    }
  }

  void check_entry_inputs() {
    const OpTemplate* entry = spec_.find_template(spec_.entrypoint);
    if (entry == nullptr) return;
    const auto& gsig = spec_.global_inputs.signature;
    const auto& gvals = spec_.global_inputs.values;
    for (const auto& p : input_signature(*entry).parameters) {
      const auto* g = gsig.find_parameter(p.name);
      auto it = gvals.parameters.find(p.name);
      bool have = g && (it != gvals.parameters.end() || g->default_value);
      if (!have) {
        if (!p.optional && !p.default_value) {
          error("global_inputs", "entrypoint input parameter '" + p.name + "' has no value");
        }
        continue;
      }
      const std::string& text = it != gvals.parameters.end() ? it->second.text : *g->default_value;
      if (!canonicalize(p.type_tag, text)) {
        error("global_inputs.parameters." + p.name,
              "value is not a valid " + std::string(to_string(p.type_tag)));
      }
    }
    for (const auto& a : input_signature(*entry).artifacts) {
      if (a.optional || a.default_location) continue;
      if (!gsig.find_artifact(a.name)) {
        error("global_inputs", "entrypoint input artifact '" + a.name + "' has no value");
      }
    }
  }

  void check_recursion() {
    std::map<std::string, std::set<std::string>> calls;
    for (const auto& [name, tmpl] : spec_.templates) {
      if (const auto* body = template_body(tmpl)) {
        for (const auto& step : *body) calls[name].insert(step.template_name);
      }
    }
    std::function<bool(const std::string&, const std::string&, std::set<std::string>&)> reaches =
        [&](const std::string& from, const std::string& goal, std::set<std::string>& seen) {
          if (from == goal) return true;
          if (!seen.insert(from).second) return false;
          for (const auto& next : calls[from]) {
            if (reaches(next, goal, seen)) return true;
          }
          return false;
        };
    for (const auto& [name, tmpl] : spec_.templates) {
      const auto* body = template_body(tmpl);
      if (body == nullptr) continue;
      for (const auto& step : *body) {
        std::set<std::string> seen;
        if (reaches(step.template_name, name, seen) && !step.when) {
          warning("templates." + name + ".body." + step.name,
                  "recursive step without a 'when' condition");
        }
      }
    }
  }

  void check_static_keys() {
    std::map<std::string, std::string> seen;
    for (const auto& [name, tmpl] : spec_.templates) {
      const auto* body = template_body(tmpl);
      if (body == nullptr) continue;
      for (const auto& step : *body) {
        if (!step.key_template) continue;
        std::string at = "templates." + name + ".body." + step.name + ".key_template";
        if (!expr::placeholder_paths(*step.key_template).empty()) continue;
        if (!is_valid_step_key(*step.key_template)) {
          error(at, "key '" + *step.key_template + "' is not a valid step key");
        }
        auto [it, inserted] = seen.emplace(*step.key_template, at);
        if (!inserted) error(at, "duplicate key '" + *step.key_template + "' (also " + it->second + ")");
      }
    }
  }

  const WorkflowSpec& spec_;
  ValidationReport report_;
  std::set<std::string> executor_names_{"local"};
};

}  // namespace

ValidationReport validate_workflow(const WorkflowSpec& spec) { return Validator(spec).run(); }

}  // namespace opflow
