#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <thread>

#include "harness.hpp"
#include "opflow/error.hpp"
#include "opflow/model/validate.hpp"
#include "opflow/state/atomic_file.hpp"

using namespace opflow;
using namespace opflow::test_support;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const char* kOps = R"(apiVersion: opflow/v1
name: t
entrypoint: main
templates:
  op:
    script: "x={{inputs.parameters.x}}\n"
    inputs: {parameters: {x: int}}
    outputs: {parameters: {y: int}}
    output_parameter_sources: {y: y.txt}
)";

WorkflowSpec spec_with(const std::string& main) {
  WorkflowSpec spec = parse_workflow_document(std::string(kOps) + main);
  auto report = validate_workflow(spec);
  for (const auto& d : report.diagnostics) ADD_FAILURE() << d.location << ": " << d.message;
  return spec;
}

RunConfig with_runner(std::shared_ptr<ScriptRunner> runner) {
  RunConfig cfg;
  cfg.runner = std::move(runner);
  return cfg;
}

/// Runs scripts of the form "dec <n>": writes n-1 to every output source.
class DecRunner : public ScriptRunner {
 public:
  ExecResult run(const ScriptRun& r) override {
    ++calls;
    long n = std::stol(r.tmpl->script.substr(4));
    for (const auto& [name, src] : r.tmpl->output_parameter_sources) std::ofstream(r.workdir / src) << n - 1 << "\n";
    ExecResult e;
    e.exit_code = 0;
    return e;
  }
  std::atomic<int> calls{0};
};

const char* kRecursive = R"(apiVersion: opflow/v1
name: rec
entrypoint: rec
global_inputs:
  parameters:
    n: {type_tag: int, value: "0"}
templates:
  dec:
    script: "dec {{inputs.parameters.n}}"
    inputs: {parameters: {n: int}}
    outputs: {parameters: {m: int}}
    output_parameter_sources: {m: m}
  rec:
    kind: steps
    inputs: {parameters: {n: int}}
    body:
      - {name: dec, template: dec, input_bindings: {n: {template_input: n}}}
      - name: down
        template: rec
        when: "{{inputs.parameters.n}} > 0"
        input_bindings: {n: {step_output: dec.m}}
)";

}  // namespace

TEST(Engine, AgreesWithReferenceInterpreter) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    EXPECT_EQ(check_against_reference(seed, false, 8, 200us), "");
    EXPECT_EQ(check_against_reference(seed, true, 8), "");
  }
}

TEST(Engine, DependenciesRespectedUnderRandomInterleavings) {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    WorkflowSpec spec = generate_workflow(seed);
    Harness h;
    std::mt19937 rng(static_cast<unsigned>(seed));
    std::mutex mu;
    auto runner = std::make_shared<FakeRunner>([&](const ScriptRun&) {
      std::unique_lock lock(mu);
      auto delay = std::chrono::microseconds(rng() % 2000);
      lock.unlock();
      std::this_thread::sleep_for(delay);
      return 0;
    });
    WorkflowResult r = h.run(spec, with_runner(runner));
    const auto& dag = std::get<DagTemplate>(spec.templates.at("main"));
    std::map<std::string, const StepRecord*> by_name;
    for (const auto& rec : r.records) {
      if (rec.parent == r.records.front().key && !rec.slice_index) by_name[rec.name] = &rec;
    }
    for (const auto& [from, to] : infer_dag_dependencies(dag)) {
      const StepRecord* a = by_name.at(from);
      const StepRecord* b = by_name.at(to);
      if (!b->started_at) continue;
      ASSERT_TRUE(a->ended_at) << from;
      EXPECT_GT(*b->started_at, *a->ended_at) << from << " -> " << to << " seed " << seed;
    }
  }
}

TEST(Engine, RetriesTransientExactlyMaxTimes) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun&) { return kExitTransient; });
  auto clock = std::make_shared<ManualClock>();
  RunConfig cfg = with_runner(runner);
  cfg.clock = clock;
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - name: a
        template: op
        key: a
        retry: {max_retries_on_transient: 2}
        input_bindings: {x: {literal: "1", type_tag: int}}
)");
  WorkflowResult r = h.run(spec, cfg);
  EXPECT_EQ(runner->calls("a"), 3);
  const StepRecord* a = find_record(r, "a");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->phase, Phase::Failed);
  EXPECT_EQ(a->attempt, 3);
  EXPECT_EQ(a->failure->kind, FailureKind::Transient);
  EXPECT_EQ(r.phase, Phase::Failed);
}

TEST(Engine, RetryBackoffUsesClock) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun& r) { return r.attempt < 3 ? kExitTransient : 0; });
  auto clock = std::make_shared<ManualClock>();
  RunConfig cfg = with_runner(runner);
  cfg.clock = clock;
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - {name: a, template: op, key: a, retry: {max_retries_on_transient: 5}, input_bindings: {x: {literal: "1", type_tag: int}}}
)");
  Engine engine(h.store, h.storage);
  cfg.retry_backoff = 1.5s;
  WorkflowResult r = engine.run_workflow(spec, cfg);
  EXPECT_EQ(r.phase, Phase::Succeeded);
  EXPECT_EQ(runner->calls("a"), 3);
  EXPECT_EQ(clock->slept(), 3s);
}

TEST(Engine, FatalIsNotRetried) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun&) { return 1; });
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - {name: a, template: op, key: a, retry: {max_retries_on_transient: 4}, input_bindings: {x: {literal: "1", type_tag: int}}}
      - {name: b, template: op, key: b, input_bindings: {x: {step_output: a.y}}}
      - {name: c, template: op, key: c, input_bindings: {x: {literal: "2", type_tag: int}}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(runner->calls("a"), 1);
  EXPECT_EQ(find_record(r, "a")->failure->kind, FailureKind::Fatal);
  EXPECT_EQ(find_record(r, "b")->phase, Phase::Skipped);
  EXPECT_EQ(runner->calls("b"), 0);
  EXPECT_EQ(r.phase, Phase::Failed);
}

TEST(Engine, WhenFalseSkipsWithoutExecution) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>();
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - {name: a, template: op, key: a, when: "1 > 2", input_bindings: {x: {literal: "1", type_tag: int}}}
      - {name: b, template: op, key: b, when: "'x' == 'x'", input_bindings: {x: {literal: "1", type_tag: int}}}
      - {name: c, template: op, key: c, input_bindings: {x: {step_output: a.y}}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(find_record(r, "a")->phase, Phase::Skipped);
  EXPECT_EQ(runner->calls("a"), 0);
  EXPECT_EQ(find_record(r, "b")->phase, Phase::Succeeded);
  // consuming a skipped step's output fails the consumer
  EXPECT_EQ(find_record(r, "c")->phase, Phase::Failed);
  EXPECT_EQ(r.phase, Phase::Failed);
}

TEST(Engine, WhenTypeErrorFailsStep) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>();
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - {name: a, template: op, key: a, when: "'a' < 2", input_bindings: {x: {literal: "1", type_tag: int}}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(find_record(r, "a")->phase, Phase::Failed);
  EXPECT_NE(find_record(r, "a")->failure->message.find("TypeError"), std::string::npos);
  EXPECT_EQ(runner->total(), 0);
}

TEST(Engine, ContinueOnFailedToleratesFailure) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun& r) { return r.step_key == "a" ? 1 : 0; });
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    outputs: {parameters: {out: int}}
    body:
      - {name: a, template: op, key: a, continue_on_failed: true, input_bindings: {x: {literal: "1", type_tag: int}}}
      - {name: b, template: op, key: b, dependencies: [a], input_bindings: {x: {literal: "5", type_tag: int}}}
    output_bindings: {out: {step_output: b.y}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(find_record(r, "a")->phase, Phase::Failed);
  EXPECT_EQ(find_record(r, "b")->phase, Phase::Succeeded);
  EXPECT_EQ(r.phase, Phase::Succeeded);
  EXPECT_EQ(r.outputs.parameters.at("out").text, fake_output("x=5\n"));
}

TEST(Engine, RecursionDepths) {
  for (int n : {0, 1, 7, 99}) {
    Harness h;
    WorkflowSpec spec = parse_workflow_document(kRecursive);
    spec.global_inputs.values.parameters["n"].text = std::to_string(n);
    auto runner = std::make_shared<DecRunner>();
    WorkflowResult r = h.run(spec, with_runner(runner));
    EXPECT_EQ(r.phase, Phase::Succeeded) << n;
    EXPECT_EQ(runner->calls.load(), n + 1);
    int instances = 0, skipped = 0;
    for (const auto& rec : r.records) {
      if (rec.template_name == "rec" && rec.phase == Phase::Succeeded) ++instances;
      if (rec.template_name == "rec" && rec.phase == Phase::Skipped) ++skipped;
    }
    EXPECT_EQ(instances, n + 1) << n;
    EXPECT_EQ(skipped, 1) << n;
  }
}

TEST(Engine, RecursionLimitAborts) {
  Harness h;
  WorkflowSpec spec = parse_workflow_document(kRecursive);
  spec.global_inputs.values.parameters["n"].text = "100";
  auto runner = std::make_shared<DecRunner>();
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(r.phase, Phase::Failed);
  ASSERT_TRUE(r.abort_code);
  EXPECT_EQ(*r.abort_code, ErrorCode::RecursionLimitExceeded);
  EXPECT_EQ(h.store.workflow_status(r.workflow_id), Phase::Failed);
  for (const auto& rec : r.records) EXPECT_TRUE(is_terminal(rec.phase)) << rec.key;

  RunConfig low = with_runner(runner);
  low.max_recursion_depth = 3;
  spec.global_inputs.values.parameters["n"].text = "3";
  EXPECT_EQ(h.run(spec, low).abort_code, ErrorCode::RecursionLimitExceeded);
  spec.global_inputs.values.parameters["n"].text = "2";
  EXPECT_EQ(h.run(spec, low).phase, Phase::Succeeded);
}

TEST(Engine, SlicesStackInIndexOrder) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun&) { return 0; }, 300us);
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    outputs: {parameters: {ys: json}}
    body:
      - name: fan
        template: op
        key: fan
        input_bindings: {x: {literal: "[5, 4, 3, 2, 1, 0, 9, 8]", type_tag: json}}
        slices: {sliced_inputs: [x], stacked_outputs: [y], parallelism: 3}
    output_bindings: {ys: {step_output: fan.y}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  ASSERT_EQ(r.phase, Phase::Succeeded);
  std::string want = "[";
  int xs[] = {5, 4, 3, 2, 1, 0, 9, 8};
  for (int i = 0; i < 8; ++i) {
    want += (i ? "," : "") + fake_output("x=" + std::to_string(xs[i]) + "\n");
    const StepRecord* inst = find_record(r, "fan-" + std::to_string(i));
    ASSERT_TRUE(inst);
    EXPECT_EQ(inst->slice_index, i);
    EXPECT_EQ(inst->inputs.parameters.at("x").text, std::to_string(xs[i]));
    EXPECT_EQ(inst->parent, "fan");
  }
  EXPECT_EQ(r.outputs.parameters.at("ys").text, want + "]");
  EXPECT_LE(runner->max_concurrent(), 3);
  EXPECT_EQ(find_record(r, "fan")->type, StepType::Steps);
}

TEST(Engine, SliceToleranceAndGaps) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun& r) { return r.step_key == "fan-1" ? 1 : 0; });
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    outputs: {parameters: {ys: json}}
    body:
      - name: fan
        template: op
        key: fan
        continue_on_success_ratio: "0.5"
        input_bindings: {x: {literal: "[1, 2, 3]", type_tag: json}}
        slices: {sliced_inputs: [x], stacked_outputs: [y]}
    output_bindings: {ys: {step_output: fan.y}}
)");
  WorkflowResult r = h.run(spec, with_runner(runner));
  EXPECT_EQ(r.phase, Phase::Succeeded);
  EXPECT_EQ(r.outputs.parameters.at("ys").text,
            "[" + fake_output("x=1\n") + ",null," + fake_output("x=3\n") + "]");
}

TEST(Engine, ParallelismBoundsScripts) {
  Harness h;
  auto runner = std::make_shared<FakeRunner>([](const ScriptRun&) { return 0; }, 2000us);
  std::string body = "  main:\n    kind: dag\n    body:\n";
  for (int i = 0; i < 40; ++i) {
    body += "      - {name: t" + std::to_string(i) + ", template: op, input_bindings: {x: {literal: \"" +
            std::to_string(i) + "\", type_tag: int}}}\n";
  }
  RunConfig cfg = with_runner(runner);
  cfg.parallelism = 4;
  WorkflowResult r = h.run(spec_with(body), cfg);
  EXPECT_EQ(r.phase, Phase::Succeeded);
  EXPECT_LE(runner->max_concurrent(), 4);
  EXPECT_GE(runner->max_concurrent(), 2);
  cfg.sequential = true;
  auto seq = std::make_shared<FakeRunner>([](const ScriptRun&) { return 0; }, 200us);
  cfg.runner = seq;
  h.run(spec_with(body), cfg);
  EXPECT_EQ(seq->max_concurrent(), 1);
}

TEST(Engine, DuplicateKeyFailsSecondClaimant) {
  // Keys collide only after rendering, so validation cannot see it.
  Harness h;
  auto runner = std::make_shared<FakeRunner>();
  RunConfig cfg = with_runner(runner);
  cfg.sequential = true;
  WorkflowSpec spec = spec_with(R"(  wrap:
    kind: steps
    inputs: {parameters: {tag: string, x: int}}
    body:
      - {name: s, template: op, key: "{{inputs.parameters.tag}}", input_bindings: {x: {template_input: x}}}
  main:
    kind: dag
    body:
      - {name: a, template: wrap, input_bindings: {tag: {literal: same}, x: {literal: "1", type_tag: int}}}
      - {name: b, template: wrap, dependencies: [a], input_bindings: {tag: {literal: same}, x: {literal: "2", type_tag: int}}}
)");
  WorkflowResult r = h.run(spec, cfg);
  const StepRecord* winner = find_record(r, "same");
  ASSERT_NE(winner, nullptr);
  EXPECT_EQ(winner->phase, Phase::Succeeded);
  EXPECT_EQ(winner->inputs.parameters.at("x").text, "1");
  int losers = 0;
  for (const auto& rec : r.records) {
    if (rec.name == "s" && rec.key != "same") {
      ++losers;
      EXPECT_EQ(rec.phase, Phase::Failed);
      EXPECT_FALSE(rec.keyed);
      ASSERT_TRUE(rec.failure);
      EXPECT_NE(rec.failure->message.find("DuplicateKey"), std::string::npos);
    }
  }
  EXPECT_EQ(losers, 1);
  EXPECT_EQ(runner->total(), 1);
}

TEST(Engine, ReuseReplaysWithoutExecution) {
  int replayed = 0;
  for (std::uint64_t seed = 0; replayed < 20; ++seed) {
    WorkflowSpec spec = generate_workflow(seed);
    Harness h;
    auto first = std::make_shared<FakeRunner>();
    WorkflowResult a = h.run(spec, with_runner(first));
    // Failed steps are not reusable; only fully successful runs replay for free.
    if (a.phase != Phase::Succeeded) continue;
    ++replayed;
    auto second = std::make_shared<FakeRunner>();
    WorkflowResult b = h.run(spec, with_runner(second), h.store.harvest_reuse(a.workflow_id));
    EXPECT_EQ(b.phase, Phase::Succeeded);
    EXPECT_EQ(second->total(), 0) << seed;
    EXPECT_EQ(b.outputs, a.outputs);
    std::map<std::string, Phase> before;
    for (const auto& rec : a.records) before[rec.key] = rec.phase;
    for (const auto& rec : b.records) {
      if (rec.keyed && rec.parent == b.records.front().key) {
        Phase want = before.at(rec.key) == Phase::Succeeded ? Phase::Reused : before.at(rec.key);
        EXPECT_EQ(rec.phase, want) << rec.key << " seed " << seed;
      }
    }
  }
}

TEST(Engine, ModifiedReuseFeedsDownstream) {
  Harness h;
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    outputs: {parameters: {out: int}}
    body:
      - {name: a, template: op, key: a, input_bindings: {x: {literal: "1", type_tag: int}}}
      - {name: b, template: op, key: b, input_bindings: {x: {step_output: a.y}}}
    output_bindings: {out: {step_output: b.y}}
)");
  WorkflowResult first = h.run(spec, with_runner(std::make_shared<FakeRunner>()));
  ASSERT_EQ(first.phase, Phase::Succeeded);
  StepRecord a = *h.store.query_step(first.workflow_id, "a");
  StepRecord patched = modify_output_parameter(a, "y", "12345");
  auto runner = std::make_shared<FakeRunner>();
  WorkflowResult second = h.run(spec, with_runner(runner), {patched});
  EXPECT_EQ(find_record(second, "a")->phase, Phase::Reused);
  EXPECT_EQ(runner->calls("a"), 0);
  EXPECT_EQ(runner->calls("b"), 1);
  EXPECT_EQ(find_record(second, "b")->inputs.parameters.at("x").text, "12345");
  EXPECT_EQ(second.outputs.parameters.at("out").text, fake_output("x=12345\n"));
}

TEST(Engine, ReuseWithIncompatibleOutputsFails) {
  Harness h;
  WorkflowSpec spec = spec_with(R"(  main:
    kind: dag
    body:
      - {name: a, template: op, key: a, input_bindings: {x: {literal: "1", type_tag: int}}}
)");
  StepRecord fake;
  fake.key = "a";
  fake.keyed = true;
  fake.phase = Phase::Succeeded;
  fake.outputs.parameters["y"] = ParameterValue::string("not-an-int");
  WorkflowResult r = h.run(spec, with_runner(std::make_shared<FakeRunner>()), {fake});
  EXPECT_EQ(find_record(r, "a")->phase, Phase::Failed);
}

TEST(Engine, RealScriptsWithArtifactsAndTimeout) {
  Harness h;
  WorkflowSpec spec = parse_workflow_document(R"(apiVersion: opflow/v1
name: art
entrypoint: main
templates:
  make:
    script: |
      mkdir -p out
      for i in 1 2 3; do echo "line $i" > out/$i; done
    outputs: {artifacts: {files: {}}}
    output_artifact_sources: {files: out}
  count:
    script: |
      ls in | wc -l | tr -d ' ' > n
    inputs: {artifacts: {files: {}}}
    input_artifact_mounts: {files: in}
    outputs: {parameters: {n: int}}
    output_parameter_sources: {n: n}
  slow:
    script: "sleep 5"
  main:
    kind: dag
    outputs: {parameters: {n: int}}
    body:
      - {name: make, template: make, key: make}
      - {name: count, template: count, key: count, input_bindings: {files: {step_output: make.files}}}
      - {name: slow, template: slow, key: slow, timeout_seconds: 1, continue_on_failed: true}
    output_bindings: {n: {step_output: count.n}}
)");
  ASSERT_FALSE(validate_workflow(spec).has_errors());
  auto t0 = std::chrono::steady_clock::now();
  WorkflowResult r = h.run(spec, RunConfig{});
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 4s);
  EXPECT_EQ(r.phase, Phase::Succeeded);
  EXPECT_EQ(r.outputs.parameters.at("n").text, "3");
  const StepRecord* make = find_record(r, "make");
  EXPECT_EQ(make->outputs.artifacts.at("files").location, artifact_key(r.workflow_id, "make", "files"));
  EXPECT_EQ(h.storage.list(artifact_key(r.workflow_id, "make", "files")).size(), 3u);
  EXPECT_EQ(find_record(r, "slow")->failure->kind, FailureKind::Timeout);
  EXPECT_TRUE(fs::exists(h.store.step_dir(r.workflow_id, "make") / "log"));
}

TEST(Engine, PersistedStateMatchesResult) {
  Harness h;
  WorkflowSpec spec = generate_workflow(7);
  WorkflowResult r = h.run(spec, with_runner(std::make_shared<FakeRunner>()));
  EXPECT_EQ(h.store.workflow_status(r.workflow_id), r.phase);
  EXPECT_EQ(h.store.list_steps(r.workflow_id), r.records);
  for (const auto& ev : h.store.phase_events(r.workflow_id)) {
    if (ev.from) {
      EXPECT_TRUE(is_legal_transition(*ev.from, ev.to));
    }
  }
  EXPECT_EQ(parse_workflow_document(h.store.spec_text(r.workflow_id)), spec);
}
