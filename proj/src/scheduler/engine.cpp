#include "opflow/scheduler/engine.hpp"

#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <semaphore>
#include <set>
#include <thread>

#include "opflow/error.hpp"
#include "opflow/executor/sim_batch.hpp"
#include "opflow/model/document.hpp"
#include "opflow/model/typecheck.hpp"
#include "opflow/model/validate.hpp"
#include "opflow/scheduler/policy.hpp"
#include "opflow/state/atomic_file.hpp"

namespace fs = std::filesystem;

namespace opflow {

ReuseSet make_reuse_set(const std::vector<StepRecord>& records) {
  ReuseSet set;
  for (const auto& r : records) {
    if (has_outputs(r.phase)) set.insert_or_assign(r.key, r);
  }
  return set;
}

const StepRecord* resolve_reuse(const std::string& key, const ReuseSet& reuse) {
  auto it = reuse.find(key);
  return it == reuse.end() ? nullptr : &it->second;
}

bool evaluate_when(const StepDef& step, const expr::Scope& scope) {
  if (!step.when) return true;
  return expr::evaluate_condition(*step.when, scope);
}

namespace {

/// Errors that end the whole run rather than a single step.
bool is_abort(const Error& e) {
  return e.code() == ErrorCode::RecursionLimitExceeded || e.code() == ErrorCode::Io ||
         e.code() == ErrorCode::IllegalTransition;
}

struct Outcome {
  Phase phase = Phase::Failed;
  IoValues outputs;
  std::optional<Failure> failure;
};

bool tolerated(const StepDef& step, const Outcome& o) {
  return o.phase != Phase::Failed || step.continue_on_failed;
}

StepType type_of(const OpTemplate& t) {
  if (std::holds_alternative<ScriptTemplate>(t)) return StepType::Pod;
  if (std::holds_alternative<StepsTemplate>(t)) return StepType::Steps;
  return StepType::Dag;
}

/// Enclosing template instance of a body being scheduled.
struct BodyCtx {
  const OpTemplate* owner = nullptr;
  const IoValues* inputs = nullptr;
  std::string owner_key;
  std::map<std::string, int> depth;
  std::mutex mu;
  std::map<std::string, Outcome> siblings;
};

/// Tolerance of a binding target: absent sources are omitted instead of
/// failing when the target can do without a value.
bool tolerant_parameter(const ParameterSpec* p) { return p && (p->optional || p->default_value); }
bool tolerant_artifact(const ArtifactSpec* a) { return a && (a->optional || a->default_location); }

class Run {
 public:
  Run(const WorkflowSpec& spec, const RunConfig& cfg, StateStore& store, StorageClient& storage,
      std::string wf_id, ReuseSet reuse, Clock& clock, ScriptRunner& runner)
      : spec_(spec), cfg_(cfg), store_(store), storage_(storage), wf_id_(std::move(wf_id)),
        reuse_(std::move(reuse)), clock_(clock), runner_(runner), slots_(cfg.parallelism) {
    for (const auto& e : spec.executors) executors_[e.name] = make_executor(e, cfg.dispatch);
    default_executor_ = !cfg.default_executor.empty() ? cfg.default_executor : spec.default_executor.value_or("");
    if (!default_executor_.empty() && default_executor_ != "local" && !executors_.count(default_executor_)) {
      throw Error(ErrorCode::InvalidSpec, "unknown executor '" + default_executor_ + "'");
    }
    if (cfg.start_sim_batch) {
      std::set<std::string> roots;
      for (const auto& e : spec.executors) {
        if (e.type == "dispatcher" && e.machine.batch_type == BatchType::Sim && roots.insert(e.machine.work_root).second) {
          sims_.push_back(std::make_unique<SimBatchSystem>(e.machine.work_root, SimOptions{cfg.sim_workers}));
          sims_.back()->start();
        }
      }
    }
  }

  Outcome run_entry() {
    const OpTemplate* entry = spec_.find_template(spec_.entrypoint);
    if (entry == nullptr) throw Error(ErrorCode::InvalidSpec, "unresolved entrypoint '" + spec_.entrypoint + "'");
    globals_ = typecheck_io(spec_.global_inputs.signature, spec_.global_inputs.values);
    IoValues inputs;
    const Signature& sig = input_signature(*entry);
    for (const auto& p : sig.parameters) {
      if (auto it = globals_.parameters.find(p.name); it != globals_.parameters.end()) inputs.parameters[p.name] = it->second;
    }
    for (const auto& a : sig.artifacts) {
      if (auto it = globals_.artifacts.find(a.name); it != globals_.artifacts.end()) inputs.artifacts[a.name] = it->second;
    }
    std::string key = generated_key(spec_.entrypoint);
    return run_template(*entry, nullptr, inputs, key, false, spec_.entrypoint, "", std::nullopt, {});
  }

  std::int64_t executions() const { return executions_.load(); }
  int max_concurrent() const { return max_running_.load(); }

 private:
  // ---- keys and records ----------------------------------------------------

  void claim_key(const std::string& key) {
    std::lock_guard guard(keys_mu_);
    if (!keys_.insert(key).second) throw Error(ErrorCode::DuplicateKey, "step key '" + key + "' is already in use");
  }

  std::string generated_key(const std::string& name) {
    while (true) {
      std::string key = name + "-" + random_token(8);
      std::lock_guard guard(keys_mu_);
      if (keys_.insert(key).second) return key;
    }
  }

  StepRecord make_record(const std::string& key, const std::string& name, const std::string& tmpl,
                         StepType type, const std::string& parent, bool keyed,
                         std::optional<std::int64_t> slice_index) {
    StepRecord r;
    r.key = key;
    r.name = name;
    r.template_name = tmpl;
    r.type = type;
    r.parent = parent;
    r.keyed = keyed;
    r.slice_index = slice_index;
    r.sequence = ++sequence_;
    return r;
  }

  void persist(const StepRecord& r) { store_.persist_step(wf_id_, r); }

  Outcome finish(StepRecord& r, Phase phase, std::optional<Failure> failure = std::nullopt) {
    r.phase = phase;
    r.failure = std::move(failure);
    r.ended_at = clock_.now();
    if (!has_outputs(phase)) r.outputs = {};
    persist(r);
    return Outcome{phase, r.outputs, r.failure};
  }

  // ---- scopes and bindings -------------------------------------------------

  void bind_workflow(expr::Scope& scope) const {
    scope.bind("workflow.name", ParameterValue::string(spec_.name));
    scope.bind("workflow.id", ParameterValue::string(wf_id_));
  }

  /// Scope of `when` and key templates: enclosing inputs, available sibling
  /// outputs and workflow fields. Throws UnavailableOutput for references to
  /// siblings that have no outputs.
  expr::Scope body_scope(BodyCtx& ctx, const std::string& text) {
    expr::Scope scope;
    bind_workflow(scope);
    for (const auto& [name, v] : ctx.inputs->parameters) scope.bind("inputs.parameters." + name, v);
    std::lock_guard guard(ctx.mu);
    for (const auto& producer : placeholder_step_refs(text)) {
      auto it = ctx.siblings.find(producer);
      if (it == ctx.siblings.end() || !has_outputs(it->second.phase)) {
        throw Error(ErrorCode::UnavailableOutput, "'" + producer + "' has no outputs");
      }
      for (const auto& [name, v] : it->second.outputs.parameters) {
        scope.bind("steps." + producer + ".outputs.parameters." + name, v);
        scope.bind("tasks." + producer + ".outputs.parameters." + name, v);
      }
    }
    return scope;
  }

  std::optional<Value> resolve_ref(const ValueRef& ref, BodyCtx& ctx, bool tolerant,
                                   const ParameterValue* item) {
    return std::visit(
        [&](const auto& r) -> std::optional<Value> {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, ref::Literal>) {
            return r.value;
          } else if constexpr (std::is_same_v<R, ref::WorkflowInput>) {
            if (auto v = globals_.find(r.name)) return v;
            if (tolerant) return std::nullopt;
            throw Error(ErrorCode::MissingInput, "workflow input '" + r.name + "' has no value");
          } else if constexpr (std::is_same_v<R, ref::TemplateInput>) {
            if (auto v = ctx.inputs->find(r.name)) return v;
            if (tolerant) return std::nullopt;
            throw Error(ErrorCode::MissingInput, "input '" + r.name + "' has no value");
          } else if constexpr (std::is_same_v<R, ref::StepOutput>) {
            std::lock_guard guard(ctx.mu);
            auto it = ctx.siblings.find(r.step);
            if (it != ctx.siblings.end() && has_outputs(it->second.phase)) {
              if (auto v = it->second.outputs.find(r.name)) return v;
            }
            if (tolerant) return std::nullopt;
            throw Error(ErrorCode::UnavailableOutput, "output '" + r.name + "' of '" + r.step + "' is unavailable");
          } else if constexpr (std::is_same_v<R, ref::Item>) {
            if (!item) throw Error(ErrorCode::InvalidSpec, "item reference outside a sliced step");
            return *item;
          } else {
            if (!item) throw Error(ErrorCode::InvalidSpec, "item reference outside a sliced step");
            return item_field(*item, r.field);
          }
        },
        ref);
  }

  /// Input values of `step`; item bindings are skipped when `item` is null.
  IoValues resolve_inputs(const StepDef& step, BodyCtx& ctx, const OpTemplate& target,
                          const ParameterValue* item) {
    IoValues values;
    const Signature& sig = input_signature(target);
    for (const auto& [name, ref] : step.input_bindings) {
      bool is_item = std::holds_alternative<ref::Item>(ref) || std::holds_alternative<ref::ItemField>(ref);
      if (is_item && item == nullptr) continue;
      bool tolerant = tolerant_parameter(sig.find_parameter(name)) || tolerant_artifact(sig.find_artifact(name));
      if (auto v = resolve_ref(ref, ctx, tolerant, item)) values.set(name, *v);
    }
    return values;
  }

  IoValues resolve_outputs(const OpTemplate& t, BodyCtx& ctx) {
    IoValues values;
    const Signature& sig = output_signature(t);
    for (const auto& [name, ref] : *template_output_bindings(t)) {
      bool tolerant = tolerant_parameter(sig.find_parameter(name)) || tolerant_artifact(sig.find_artifact(name));
      if (auto v = resolve_ref(ref, ctx, tolerant, nullptr)) values.set(name, *v);
    }
    return typecheck_io(sig, values);
  }

  // ---- steps ---------------------------------------------------------------

  /// Resolved key of a body step; falls back to a generated key on error.
  std::pair<std::string, std::optional<Error>> step_key(const StepDef& step, BodyCtx& ctx) {
    if (!step.key_template) return {generated_key(step.name), std::nullopt};
    try {
      expr::Scope scope = body_scope(ctx, *step.key_template);
      std::string key = expr::render_placeholders(*step.key_template, scope);
      if (!is_valid_step_key(key) || key == "status" || key == "owner" || key == "spec.yaml" || key == "events.log") {
        throw Error(ErrorCode::KeyInvalid, "resolved key '" + key + "' is not a valid step key");
      }
      claim_key(key);
      return {key, std::nullopt};
    } catch (const Error& e) {
      if (is_abort(e)) throw;
      return {generated_key(step.name), e};
    }
  }

  /// Records a body step that never started.
  Outcome skip_step(const StepDef& step, BodyCtx& ctx, const std::string& reason) {
    auto [key, err] = step_key(step, ctx);
    const OpTemplate* t = spec_.find_template(step.template_name);
    StepRecord r = make_record(key, step.name, step.template_name,
                               step.slices ? StepType::Steps : (t ? type_of(*t) : StepType::Pod), ctx.owner_key,
                               step.key_template.has_value() && !err, std::nullopt);
    r.ended_at = clock_.now();
    r.phase = Phase::Skipped;
    if (!reason.empty()) r.failure = Failure{FailureKind::Fatal, reason};
    persist(r);
    return Outcome{Phase::Skipped, {}, r.failure};
  }

  Outcome run_step(const StepDef& step, BodyCtx& ctx) {
    const OpTemplate* t = spec_.find_template(step.template_name);
    if (t == nullptr) throw Error(ErrorCode::InvalidSpec, "unresolved template '" + step.template_name + "'");
    if (aborting_) return skip_step(step, ctx, "workflow aborted");
    auto [key, key_error] = step_key(step, ctx);
    bool keyed = step.key_template.has_value() && !key_error;
    StepType type = step.slices ? StepType::Steps : type_of(*t);
    auto fail_early = [&](const std::string& message) {
      StepRecord r = make_record(key, step.name, step.template_name, type, ctx.owner_key, keyed, std::nullopt);
      return finish(r, Phase::Failed, Failure{FailureKind::Fatal, message});
    };

    if (step.when) {
      bool run = false;
      try {
        run = evaluate_when(step, body_scope(ctx, *step.when));
      } catch (const Error& e) {
        if (is_abort(e)) throw;
        return fail_early(std::string("when: ") + e.what());
      }
      if (!run) {
        StepRecord r = make_record(key, step.name, step.template_name, type, ctx.owner_key, keyed, std::nullopt);
        return finish(r, Phase::Skipped);
      }
    }
    if (key_error) return fail_early(std::string("key: ") + key_error->what());

    IoValues bound;
    try {
      bound = resolve_inputs(step, ctx, *t, nullptr);
    } catch (const Error& e) {
      if (is_abort(e)) throw;
      return fail_early(e.what());
    }

    if (keyed) {
      if (const StepRecord* prior = resolve_reuse(key, reuse_)) {
        StepRecord r = make_record(key, step.name, step.template_name, type, ctx.owner_key, true, std::nullopt);
        r.inputs = bound;
        return adopt(r, *prior, step.slices ? nullptr : &output_signature(*t), step.slices ? &*step.slices : nullptr);
      }
    }

    if (step.slices) return run_group(step, ctx, *t, key, keyed, bound);
    return run_template(*t, &step, bound, key, keyed, step.name, ctx.owner_key, std::nullopt, ctx.depth);
  }

  /// Marks `r` Reused with the outputs of `prior`, after checking them
  /// against what the current template (or slice group) produces.
  Outcome adopt(StepRecord& r, const StepRecord& prior, const Signature* outputs, const SlicesConfig* slices) {
    r.started_at = clock_.now();
    try {
      if (outputs) {
        (void)typecheck_io(*outputs, prior.outputs);
      } else {
        for (const auto& name : slices->stacked_outputs) {
          if (!prior.outputs.find(name)) throw Error(ErrorCode::MissingInput, "reused record lacks output '" + name + "'");
        }
      }
    } catch (const Error& e) {
      return finish(r, Phase::Failed, Failure{FailureKind::Fatal, std::string("reuse: ") + e.what()});
    }
    r.outputs = prior.outputs;
    return finish(r, Phase::Reused);
  }

  Outcome run_group(const StepDef& step, BodyCtx& ctx, const OpTemplate& t, const std::string& key, bool keyed,
                    const IoValues& bound) {
    StepRecord group = make_record(key, step.name, step.template_name, StepType::Steps, ctx.owner_key, keyed, std::nullopt);
    group.inputs = bound;
    group.started_at = clock_.now();
    persist(group);
    group.phase = Phase::Running;
    persist(group);

    std::vector<SliceInstance> instances;
    try {
      instances = expand_slices(step, bound, &storage_);
      for (auto& inst : instances) {
        IoValues extra = resolve_inputs(step, ctx, t, &inst.item);
        for (const auto& [name, ref] : step.input_bindings) {
          if (!std::holds_alternative<ref::Item>(ref) && !std::holds_alternative<ref::ItemField>(ref)) continue;
          if (auto v = extra.find(name)) inst.inputs.set(name, *v);
        }
        claim_key(key + "-" + std::to_string(inst.index));
      }
    } catch (const Error& e) {
      if (is_abort(e)) throw;
      return finish(group, Phase::Failed, Failure{FailureKind::Fatal, e.what()});
    }

    const std::size_t n = instances.size();
    std::vector<Outcome> outcomes(n);
    auto run_one = [&](std::size_t i) {
      const SliceInstance& inst = instances[i];
      std::string inst_key = key + "-" + std::to_string(inst.index);
      if (aborting_) {
        StepRecord r = make_record(inst_key, step.name, step.template_name, type_of(t), key, keyed, inst.index);
        return finish(r, Phase::Skipped, Failure{FailureKind::Fatal, "workflow aborted"});
      }
      if (keyed) {
        if (const StepRecord* prior = resolve_reuse(inst_key, reuse_)) {
          StepRecord r = make_record(inst_key, step.name, step.template_name, type_of(t), key, true, inst.index);
          r.inputs = inst.inputs;
          return adopt(r, *prior, &output_signature(t), nullptr);
        }
      }
      return run_template(t, &step, inst.inputs, inst_key, keyed, step.name, key, inst.index, ctx.depth);
    };
    int limit = cfg_.sequential ? 1 : std::min(cfg_.parallelism, step.slices->parallelism.value_or(cfg_.parallelism));
    std::exception_ptr error = run_pool(n, limit, [&](std::size_t i) { outcomes[i] = run_one(i); });
    if (error) {
      finish(group, Phase::Failed, Failure{FailureKind::Fatal, "workflow aborted"});
      std::rethrow_exception(error);
    }

    std::vector<std::optional<IoValues>> outputs(n);
    std::int64_t succeeded = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (has_outputs(outcomes[i].phase)) {
        ++succeeded;
        outputs[i] = outcomes[i].outputs;
      }
    }
    if (decide_group(step, static_cast<std::int64_t>(n), succeeded) == FaultDecision::FailGroup) {
      return finish(group, Phase::Failed,
                    Failure{FailureKind::Fatal, std::to_string(succeeded) + " of " + std::to_string(n) +
                                                    " slices succeeded, " +
                                                    std::to_string(required_successes(step, n)) + " required"});
    }
    try {
      const Signature& outs = output_signature(t);
      StackedOutputs stacked = aggregate_slice_outputs(outputs, step.slices->stacked_outputs, outs);
      group.outputs = stacked.parameters;
      for (const auto& [name, locations] : stacked.artifacts) {
        std::string dest = artifact_key(wf_id_, key, name);
        storage_.remove(dest);
        bool any = false;
        for (std::size_t i = 0; i < locations.size(); ++i) {
          if (!locations[i]) continue;
          storage_.copy(*locations[i], dest + "/" + std::to_string(i));
          any = true;
        }
        if (!any) {
          fs::path empty = store_.step_dir(wf_id_, key) / ("empty-" + name);
          fs::create_directories(empty);
          storage_.upload(empty, dest);
          fs::remove_all(empty);
        }
        group.outputs.artifacts[name] = ArtifactValue{dest, false};
      }
    } catch (const Error& e) {
      if (is_abort(e)) throw;
      return finish(group, Phase::Failed, Failure{FailureKind::Fatal, e.what()});
    }
    return finish(group, Phase::Succeeded);
  }

  // ---- template instances --------------------------------------------------

  Outcome run_template(const OpTemplate& t, const StepDef* step, const IoValues& raw_inputs,
                       const std::string& key, bool keyed, const std::string& name, const std::string& parent,
                       std::optional<std::int64_t> slice_index, std::map<std::string, int> depth) {
    StepRecord r = make_record(key, name, template_name(t), type_of(t), parent, keyed, slice_index);
    try {
      r.inputs = typecheck_io(input_signature(t), raw_inputs);
    } catch (const Error& e) {
      r.inputs = raw_inputs;
      return finish(r, Phase::Failed, Failure{FailureKind::Fatal, e.what()});
    }
    int& count = depth[template_name(t)];
    if (++count > cfg_.max_recursion_depth) {
      std::string message = "template '" + template_name(t) + "' nested deeper than " +
                            std::to_string(cfg_.max_recursion_depth);
      finish(r, Phase::Failed, Failure{FailureKind::Fatal, message});
      throw Error(ErrorCode::RecursionLimitExceeded, message);
    }
    r.started_at = clock_.now();
    persist(r);
    try {
      if (const auto* script = std::get_if<ScriptTemplate>(&t)) return run_script(r, *script, step);
      r.phase = Phase::Running;
      persist(r);
      return run_body(r, t, depth);
    } catch (...) {
      if (r.phase == Phase::Pending) {
        r.phase = Phase::Skipped;
        r.failure = Failure{FailureKind::Fatal, "workflow aborted"};
        r.ended_at = clock_.now();
        try {
          persist(r);
        } catch (...) {
        }
      } else if (r.phase == Phase::Running) {
        try {
          finish(r, Phase::Failed, Failure{FailureKind::Fatal, "workflow aborted"});
        } catch (...) {
        }
      }
      throw;
    }
  }

  Outcome run_body(StepRecord& r, const OpTemplate& t, const std::map<std::string, int>& depth) {
    BodyCtx ctx;
    ctx.owner = &t;
    ctx.inputs = &r.inputs;
    ctx.owner_key = r.key;
    ctx.depth = depth;
    const std::vector<StepDef>& body = *template_body(t);
    std::optional<std::string> failed_step;

    if (std::holds_alternative<StepsTemplate>(t)) {
      for (const auto& step : body) {
        Outcome o = failed_step ? skip_step(step, ctx, "") : run_step(step, ctx);
        if (!tolerated(step, o) && !failed_step) failed_step = step.name;
        std::lock_guard guard(ctx.mu);
        ctx.siblings[step.name] = std::move(o);
      }
    } else {
      failed_step = run_dag(std::get<DagTemplate>(t), ctx);
    }

    if (failed_step) return finish(r, Phase::Failed, Failure{FailureKind::Fatal, "step '" + *failed_step + "' failed"});
    try {
      r.outputs = resolve_outputs(t, ctx);
    } catch (const Error& e) {
      if (is_abort(e)) throw;
      return finish(r, Phase::Failed, Failure{FailureKind::Fatal, std::string("outputs: ") + e.what()});
    }
    return finish(r, Phase::Succeeded);
  }

  /// Runs the tasks; returns the first (in body order) non-tolerated failure.
  std::optional<std::string> run_dag(const DagTemplate& dag, BodyCtx& ctx) {
    const auto& body = dag.body;
    const std::size_t n = body.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[body[i].name] = i;
    std::vector<std::vector<std::size_t>> preds(n);
    for (const auto& [from, to] : infer_dag_dependencies(dag)) preds[index.at(to)].push_back(index.at(from));

    enum class State { Waiting, Ready, Running, Done };
    std::vector<State> state(n, State::Waiting);
    std::vector<Outcome> outcomes(n);
    std::vector<bool> blocked(n, false);
    std::deque<std::size_t> ready;
    std::size_t done = 0;
    std::mutex mu;
    std::condition_variable cv;
    std::exception_ptr error;

    auto failed_hard = [&](std::size_t i) { return blocked[i] || !tolerated(body[i], outcomes[i]); };
    // Under `mu`: promote waiting tasks whose predecessors are done.
    auto settle = [&] {
      bool changed = true;
      while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
          if (state[i] != State::Waiting) continue;
          bool all_done = std::all_of(preds[i].begin(), preds[i].end(), [&](std::size_t p) { return state[p] == State::Done; });
          if (!all_done) continue;
          bool skip = aborting_ || std::any_of(preds[i].begin(), preds[i].end(), failed_hard);
          if (skip) {
            blocked[i] = !aborting_;
            outcomes[i] = skip_step(body[i], ctx, aborting_ ? "workflow aborted" : "");
            {
              std::lock_guard guard(ctx.mu);
              ctx.siblings[body[i].name] = outcomes[i];
            }
            state[i] = State::Done;
            ++done;
            changed = true;
          } else {
            state[i] = State::Ready;
            ready.push_back(i);
          }
        }
      }
    };

    auto worker = [&] {
      std::unique_lock lock(mu);
      while (true) {
        cv.wait(lock, [&] { return !ready.empty() || done == n; });
        if (ready.empty()) return;
        std::size_t i = ready.front();
        ready.pop_front();
        state[i] = State::Running;
        lock.unlock();
        Outcome o;
        try {
          o = run_step(body[i], ctx);
        } catch (...) {
          aborting_ = true;
          o = Outcome{Phase::Failed, {}, Failure{FailureKind::Fatal, "workflow aborted"}};
          lock.lock();
          if (!error) error = std::current_exception();
          lock.unlock();
        }
        {
          std::lock_guard guard(ctx.mu);
          ctx.siblings[body[i].name] = o;
        }
        lock.lock();
        outcomes[i] = std::move(o);
        state[i] = State::Done;
        ++done;
        try {
          settle();
        } catch (...) {
          aborting_ = true;
          if (!error) error = std::current_exception();
        }
        cv.notify_all();
      }
    };

    {
      std::lock_guard lock(mu);
      settle();
    }
    int limit = cfg_.sequential ? 1 : std::min<int>(cfg_.parallelism, static_cast<int>(std::max<std::size_t>(n, 1)));
    std::vector<std::thread> threads;
    for (int k = 1; k < limit; ++k) threads.emplace_back(worker);
    worker();
    for (auto& th : threads) th.join();
    if (error) std::rethrow_exception(error);

    for (std::size_t i = 0; i < n; ++i) {
      if (!blocked[i] && !tolerated(body[i], outcomes[i])) return body[i].name;
    }
    return std::nullopt;
  }

  /// Runs fn(0..n-1) on up to `limit` threads; returns the first exception.
  std::exception_ptr run_pool(std::size_t n, int limit, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr error;
    auto worker = [&] {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          aborting_ = true;
          std::lock_guard guard(mu);
          if (!error) error = std::current_exception();
        }
      }
    };
    int threads_wanted = std::min<int>(limit, static_cast<int>(n));
    std::vector<std::thread> threads;
    for (int k = 1; k < threads_wanted; ++k) threads.emplace_back(worker);
    worker();
    for (auto& th : threads) th.join();
    return error;
  }

  // ---- scripts -------------------------------------------------------------

  const Executor& executor_for(const StepDef* step) const {
    std::string name = step && step->executor ? *step->executor : default_executor_;
    if (auto it = executors_.find(name); it != executors_.end()) return *it->second;
    if (name.empty() || name == "local") return builtin_local_;
    throw Error(ErrorCode::InvalidSpec, "unknown executor '" + name + "'");
  }

  struct AttemptOutcome {
    std::optional<Failure> failure;
    IoValues outputs;
  };

  Outcome run_script(StepRecord& r, const ScriptTemplate& t, const StepDef* step) {
    StepDef no_policy;
    const StepDef& policy = step ? *step : no_policy;
    for (int attempt = 1;; ++attempt) {
      if (aborting_ && r.phase == Phase::Pending) {
        return finish(r, Phase::Skipped, Failure{FailureKind::Fatal, "workflow aborted"});
      }
      r.phase = Phase::Running;
      r.attempt = attempt;
      persist(r);
      AttemptOutcome a = attempt_script(r, t, step);
      std::optional<FailureKind> kind;
      if (a.failure) kind = a.failure->kind;
      FaultDecision d = apply_fault_policy(policy, AttemptResult{kind, attempt});
      if (d == FaultDecision::Succeed) {
        r.outputs = std::move(a.outputs);
        return finish(r, Phase::Succeeded);
      }
      if (d == FaultDecision::Retry && !aborting_) {
        r.failure = a.failure;
        clock_.sleep_for(cfg_.retry_backoff);
        continue;
      }
      return finish(r, Phase::Failed, a.failure);
    }
  }

  AttemptOutcome attempt_script(const StepRecord& r, const ScriptTemplate& t, const StepDef* step) {
    fs::path step_dir = store_.step_dir(wf_id_, r.key);
    fs::path workdir = step_dir / "workdir";
    ScriptTemplate final_tmpl;
    const Executor* executor = nullptr;
    try {
      fs::remove_all(workdir);
      fs::create_directories(workdir);
      for (const auto& [name, art] : r.inputs.artifacts) {
        if (art.absent()) continue;
        auto mount = t.input_artifact_mounts.find(name);
        fs::path dest = workdir / (mount == t.input_artifact_mounts.end() ? name : mount->second);
        fs::create_directories(dest.parent_path());
        if (art.is_local_path()) {
          if (!fs::exists(art.location)) throw Error(ErrorCode::SourceMissing, art.location);
          if (fs::is_directory(art.location)) {
            fs::create_directories(dest);
            fs::copy(art.location, dest, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
          } else {
            fs::copy_file(art.location, dest, fs::copy_options::overwrite_existing);
          }
        } else {
          storage_.download(art.location, dest);
        }
      }
      expr::Scope scope;
      bind_workflow(scope);
      for (const auto& [name, v] : r.inputs.parameters) scope.bind("inputs.parameters." + name, v);
      ScriptTemplate rendered = t;
      rendered.script = expr::render_placeholders(t.script, scope);
      executor = &executor_for(step);
      final_tmpl = executor->render(rendered);
    } catch (const std::exception& e) {
      return {Failure{FailureKind::Fatal, std::string("prepare: ") + e.what()}, {}};
    }

    std::optional<std::chrono::duration<double>> timeout;
    if (step && step->timeout_seconds) timeout = std::chrono::seconds(*step->timeout_seconds);
    ExecResult result;
    slots_.acquire();
    int now_running = ++running_;
    int seen = max_running_.load();
    while (now_running > seen && !max_running_.compare_exchange_weak(seen, now_running)) {
    }
    ++executions_;
    try {
      result = runner_.run(ScriptRun{&final_tmpl, step_dir, workdir, timeout, r.key, r.attempt});
    } catch (const std::exception& e) {
      --running_;
      slots_.release();
      return {Failure{FailureKind::Fatal, std::string("execute: ") + e.what()}, {}};
    }
    --running_;
    slots_.release();

    if (result.timed_out) {
      return {Failure{FailureKind::Timeout, "timed out after " + std::to_string(*step->timeout_seconds) + " s"}, {}};
    }
    if (result.exit_code != 0) {
      FailureKind kind = executor->classify_exit(result.exit_code);
      return {Failure{kind, "exit code " + std::to_string(result.exit_code)}, {}};
    }
    try {
      IoValues outputs = collect_output_parameters(t, workdir);
      for (const auto& [name, path] : collect_output_artifacts(t, workdir)) {
        std::string key = storage_.upload(path, artifact_key(wf_id_, r.key, name));
        const ArtifactSpec* spec = t.outputs.find_artifact(name);
        outputs.artifacts[name] = ArtifactValue{key, spec && spec->optional};
      }
      return {std::nullopt, typecheck_io(t.outputs, outputs)};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Io) throw;
      return {Failure{FailureKind::Fatal, std::string("outputs: ") + e.what()}, {}};
    }
  }

  const WorkflowSpec& spec_;
  const RunConfig& cfg_;
  StateStore& store_;
  StorageClient& storage_;
  std::string wf_id_;
  ReuseSet reuse_;
  Clock& clock_;
  ScriptRunner& runner_;
  IoValues globals_;
  std::map<std::string, std::unique_ptr<Executor>> executors_;
  LocalExecutor builtin_local_;
  std::string default_executor_;
  std::vector<std::unique_ptr<SimBatchSystem>> sims_;
  std::counting_semaphore<> slots_;
  std::atomic<int> running_{0};
  std::atomic<int> max_running_{0};
  std::atomic<std::int64_t> executions_{0};
  std::atomic<std::int64_t> sequence_{0};
  std::mutex keys_mu_;
  std::set<std::string> keys_;
  std::atomic<bool> aborting_{false};
};

}  // namespace

WorkflowResult Engine::run_workflow(const WorkflowSpec& spec, const RunConfig& config,
                                    const std::vector<StepRecord>& reuse) {
  if (config.parallelism < 1) throw Error(ErrorCode::InvalidSpec, "parallelism must be at least 1");
  if (config.max_recursion_depth < 1) throw Error(ErrorCode::InvalidSpec, "max_recursion_depth must be at least 1");

  WorkflowResult result;
  result.workflow_id = config.workflow_id.empty() ? store_.new_workflow_id(spec.name) : config.workflow_id;
  if (!store_.workflow_exists(result.workflow_id)) {
    store_.create_workflow(result.workflow_id, dump_workflow_document(spec));
  }
  store_.set_owner(result.workflow_id, ::getpid());
  store_.set_workflow_status(result.workflow_id, Phase::Running);

  SystemClock system_clock;
  LocalRunner local_runner;
  Clock& clock = config.clock ? *config.clock : static_cast<Clock&>(system_clock);
  ScriptRunner& runner = config.runner ? *config.runner : static_cast<ScriptRunner&>(local_runner);

  try {
    Run run(spec, config, store_, storage_, result.workflow_id, make_reuse_set(reuse), clock, runner);
    try {
      Outcome o = run.run_entry();
      result.phase = o.phase == Phase::Succeeded ? Phase::Succeeded : Phase::Failed;
      result.outputs = o.outputs;
      result.failure = o.failure;
    } catch (const Error& e) {
      result.phase = Phase::Failed;
      result.failure = Failure{FailureKind::Fatal, e.what()};
      result.abort_code = e.code();
    } catch (const std::exception& e) {
      result.phase = Phase::Failed;
      result.failure = Failure{FailureKind::Fatal, e.what()};
    }
    result.executions = run.executions();
    result.max_concurrent_scripts = run.max_concurrent();
  } catch (const std::exception& e) {
    result.phase = Phase::Failed;
    result.failure = Failure{FailureKind::Fatal, e.what()};
  }
  store_.set_workflow_status(result.workflow_id, result.phase);
  result.records = store_.list_steps(result.workflow_id);
  return result;
}

}  // namespace opflow
