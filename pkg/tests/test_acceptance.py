"""Release gate for the toolkit.

Each test here pins one externally visible guarantee: gate conjunction,
fault routing, the revision budget, scheduler-oracle agreement, wait-gap
bridging, byte-level compilation determinism, the committed end-to-end
replay, the text-only pipeline, and batch reproducibility.  Tolerances are
stated inline; everything runs offline with the stub executor.
"""

import itertools
import json
import random
import re
import time
from pathlib import Path

import pytest

from evskit.adapters import StubExecutor
from evskit.agents import ParseError
from evskit.cli import main
from evskit.compiler import DurationModel, compile_evs, schedule
from evskit.critique import (
    CritiqueFinding,
    CritiqueVerdict,
    critique_rule,
    critique_semantic,
    critique_tool,
    evaluate_gate,
    load_rubric,
    load_rule_profile,
)
from evskit.evs import (
    Narration,
    NarrationSegment,
    PedagogicalText,
    Problem,
    SolutionStep,
    SymbolicElement,
    canonical_deserialize,
    canonical_serialize,
    validate_evs,
)
from evskit.llm import CannedTransport, ReplayTransport
from evskit.orchestrator import (
    PipelineConfig,
    Plan,
    ProductionState,
    produce_evs,
    run_stage,
)
from support import (
    assert_backbone_tiles,
    assert_timeline_equal,
    params_of,
    plan_as_tuples,
    random_evs,
    simulate_timeline,
    timeline_inputs_from_evs,
)

FIXTURES = Path(__file__).parent / "fixtures"


# ---------------------------------------------------------------------------
# 1. Gate logic is exactly logical conjunction.  Exact; < 1 s.


def test_gate_is_conjunction_on_all_eight_verdict_combinations():
    order = ("semantic", "tool", "rule")
    for bits in itertools.product((True, False), repeat=3):
        verdicts = []
        for validator, ok in zip(order, bits):
            findings = () if ok else (
                CritiqueFinding("error", f"{validator} rejected", validator),
            )
            verdicts.append(CritiqueVerdict(validator, ok, findings))
        # feed them out of order; the merge order must not depend on it
        shuffled = [verdicts[2], verdicts[0], verdicts[1]]
        passed, feedback = evaluate_gate(shuffled)
        assert passed == all(bits), f"conjunction broken for {bits}"
        expected_messages = [f"{v} rejected" for v, ok in zip(order, bits) if not ok]
        assert [f.message for f in feedback.findings] == expected_messages


# ---------------------------------------------------------------------------
# 2. Injected faults are rejected by exactly the intended validator.
#    16 faults ≥ the required 12; stub executor only; < 30 s.


def text_artifact(steps, final_answer="The answer is 7."):
    return PedagogicalText(
        premise="A short setup.",
        steps=tuple(SolutionStep(i, s, ()) for i, s in enumerate(steps)),
        final_answer=final_answer,
    )


def narration_artifact(texts):
    return Narration(tuple(NarrationSegment(i, t, 0) for i, t in enumerate(texts)))


GOOD_CODE = (
    "class GoodScene(Scene):\n"
    "    def construct(self):\n"
    "        self.play(Write(Tex('2+2=4')))\n"
    "        self.play(Create(Circle()))\n"
)

GOOD_TEXT = text_artifact(["First compute 2+2=4.", "Then check 4-1=3."])
GOOD_NARRATION = narration_artifact(["Two plus two.", "Makes four."])

BROKEN_SYNTAX_CODE = (
    "class BrokenScene(Scene):\n"
    "    def construct(self:\n"  # syntax error, but every rule token present
    "        self.play(Write(Tex('x')))\n"
    "        self.play(Create(Circle()))\n"
)

LONG = "x" * 500

FAULTS = [
    # (label, artifact, kind, validator that must reject, judge response or None)
    ("steps without any equation", text_artifact(["Count the boats."]), "text", "rule", None),
    ("hedging language in a step", text_artifact(["We get 2+2=4.", "So approximately four."]), "text", "rule", None),
    ("step over the length bound", text_artifact([f"Compute 2+2=4. {LONG}"]), "text", "rule", None),
    ("final answer over the length bound", text_artifact(["Use 2+2=4."], final_answer=LONG), "text", "rule", None),
    ("code never writes text", GOOD_CODE.replace("self.play(Write(Tex('2+2=4')))\n", "pass\n"), "code", "rule", None),
    ("code calls eval", GOOD_CODE + "        eval('1')\n", "code", "rule", None),
    ("code imports os", GOOD_CODE + "        import os\n", "code", "rule", None),
    ("code lacks a scene class", "def construct():\n    Write(Tex('x'))\n    Create(Circle())\n", "code", "rule", None),
    ("code raises at runtime", GOOD_CODE + "        1/0  #STUB:raise:division by zero\n", "code", "tool", None),
    ("code hangs until timeout", GOOD_CODE + "        #STUB:timeout\n", "code", "tool", None),
    ("code fails to compile", BROKEN_SYNTAX_CODE, "code", "tool", None),
    ("judge rejects the solution", GOOD_TEXT, "text", "semantic", '```json\n{"all_pass": false}\n```'),
    ("judge answers gibberish", GOOD_TEXT, "text", "semantic", "as an evaluator I feel conflicted"),
    ("single-segment narration", narration_artifact(["All in one breath."]), "narration", "rule", None),
    ("code fence inside narration", narration_artifact(["First part.", "Then ``` appears."]), "narration", "rule", None),
]

PROFILE_FOR_KIND = {"text": "math_text", "code": "math_code", "narration": "narration"}
RUBRIC_FOR_KIND = {"text": "math_solution", "code": "illustration", "narration": "narration"}


def applicable_verdicts(artifact, kind, judge_response):
    judge = CannedTransport(judge_response) if judge_response else CannedTransport()
    rubric = load_rubric(RUBRIC_FOR_KIND[kind])
    verdicts = {
        "semantic": critique_semantic(artifact, rubric, judge),
        "rule": critique_rule(artifact, load_rule_profile(PROFILE_FOR_KIND[kind])),
    }
    if kind == "code":
        verdicts["tool"] = critique_tool(artifact, StubExecutor())
    return verdicts


def test_each_injected_fault_is_rejected_by_exactly_its_validator():
    assert len(FAULTS) >= 12
    for label, artifact, kind, intended, judge_response in FAULTS:
        verdicts = applicable_verdicts(artifact, kind, judge_response)
        rejected = {name for name, v in verdicts.items() if not v.passed}
        assert rejected == {intended}, (
            f"{label}: expected only {intended} to reject, got {sorted(rejected)}"
        )
        passed, _ = evaluate_gate(list(verdicts.values()))
        assert not passed, f"{label}: the gate let the fault through"


def test_clean_artifacts_pass_every_validator():
    for artifact, kind in ((GOOD_TEXT, "text"), (GOOD_CODE, "code"), (GOOD_NARRATION, "narration")):
        verdicts = applicable_verdicts(artifact, kind, None)
        assert all(v.passed for v in verdicts.values()), kind


def test_unparseable_agent_output_consumes_an_iteration_not_a_gate():
    gate_calls = []

    def generate(feedback):
        raise ParseError("no fenced JSON found")

    def gate(artifact):
        gate_calls.append(artifact)
        return True, None

    state = ProductionState(Plan.make("p", False))
    outcome = run_stage(state, "solving", generate, gate, max_iterations=3)
    assert outcome.status == "budget_exhausted"
    assert outcome.iterations_used == 3
    assert gate_calls == []  # parse failures never reach the validators
    assert "output unparseable" in outcome.final_feedback.findings[0].message
    assert outcome.final_feedback.source == "rule"


# ---------------------------------------------------------------------------
# 3. Revision budget: k failures before success ⇒ min(k+1, 3) iterations,
#    success iff k ≤ 2.  Exact.


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_revision_budget_is_three_iterations_per_stage(k):
    attempts = []

    def generate(feedback):
        attempts.append(feedback)
        return f"attempt-{len(attempts)}"

    def gate(artifact):
        n = int(artifact.split("-")[1])
        if n <= k:
            return False, pytest_feedback(f"attempt {n} rejected")
        return True, pytest_feedback("")

    state = ProductionState(Plan.make("p", False))
    outcome = run_stage(state, "solving", generate, gate, max_iterations=3)
    assert outcome.iterations_used == min(k + 1, 3)
    assert (outcome.status == "passed") == (k <= 2)


def pytest_feedback(message):
    from evskit.critique import Feedback

    findings = (CritiqueFinding("error", message, "all"),) if message else ()
    return Feedback("merged", findings)


# ---------------------------------------------------------------------------
# 4. Scheduler equals the independent simulator: exhaustive small grid plus
#    1000 random instances.  Tiling exact, durations within 1e-9 s; < 60 s.


DENSITY_SOURCES = {
    0: [],                                        # animation clamps to the 2 s floor
    10: ["123456789"],                            # 9 glyphs + 1 element → 3.5 s
    40: ["1" * 39],                               # 39 glyphs + 1 element → 8.0 s
}
SEGMENT_DURATIONS = (0.5, 6.0)  # shorter and longer than every animation time


def compositions(total, parts):
    """All ways to split `total` segments into `parts` positive runs."""
    if parts == 1:
        yield (total,)
        return
    for head in range(1, total - parts + 2):
        for rest in compositions(total - head, parts - 1):
            yield (head,) + rest


def grid_instances():
    for n_steps in (1, 2, 3):
        for density_combo in itertools.product(DENSITY_SOURCES, repeat=n_steps):
            steps = tuple(
                SolutionStep(
                    i,
                    f"step {i}",
                    tuple(SymbolicElement(s, "expression") for s in DENSITY_SOURCES[d]),
                )
                for i, d in enumerate(density_combo)
            )
            for premise_narrated in (False, True):
                blocks = (["premise"] if premise_narrated else []) + list(range(n_steps))
                for m in range(len(blocks), 5):
                    for comp in compositions(m, len(blocks)):
                        for durations in itertools.product(SEGMENT_DURATIONS, repeat=m):
                            segments = []
                            d_iter = iter(durations)
                            for block, count in zip(blocks, comp):
                                step_index = -1 if block == "premise" else block
                                for _ in range(count):
                                    segments.append(
                                        NarrationSegment(
                                            len(segments),
                                            f"segment {len(segments)}",
                                            step_index,
                                            next(d_iter),
                                        )
                                    )
                            yield steps, Narration(tuple(segments))


def test_schedule_equals_simulator_on_the_exhaustive_grid():
    model = DurationModel()
    count = 0
    started = time.monotonic()
    for steps, narration in grid_instances():
        p_text = PedagogicalText("premise text", steps, "the answer")
        plan = schedule(p_text, narration, None, model=model)
        sim_steps = [(s.index, [e.source for e in s.symbolic_elements]) for s in steps]
        sim_segments = [
            (seg.index, "premise" if seg.step_index == -1 else seg.step_index, seg.est_duration_s)
            for seg in narration.segments
        ]
        expected = simulate_timeline(sim_steps, sim_segments, [], params_of(model))
        assert_timeline_equal(plan_as_tuples(plan), expected, tol=1e-9)
        assert_backbone_tiles(plan, tol=1e-9)
        count += 1
    assert count >= 3000, f"grid unexpectedly small: {count}"
    assert time.monotonic() - started < 60.0


def test_schedule_equals_simulator_on_1000_random_instances():
    model = DurationModel()
    rng = random.Random(46_2026)
    started = time.monotonic()
    for n in range(1000):
        evs = random_evs(rng, n, max_steps=6, max_segments=12, with_alignment=False)
        clip_durations = {}
        if evs.p_illus and rng.random() < 0.5:
            for ci in range(len(evs.p_illus)):
                if rng.random() < 0.7:
                    clip_durations[ci] = rng.random() * 12.0
        plan = schedule(
            evs.p_text, evs.narration, evs.p_illus, model=model, clip_durations=clip_durations
        )
        steps, segments, clips = timeline_inputs_from_evs(evs, clip_durations)
        expected = simulate_timeline(steps, segments, clips, params_of(model))
        assert_timeline_equal(plan_as_tuples(plan), expected, tol=1e-9)
        assert_backbone_tiles(plan, tol=1e-9)
    assert time.monotonic() - started < 60.0


# ---------------------------------------------------------------------------
# 5. Every scheduled block's wait bridges exactly the narration–animation
#    gap.  Exact (1e-9).


def test_wait_always_equals_narration_minus_animation_clamped_at_zero():
    model = DurationModel()
    rng = random.Random(777)
    checked = 0
    for n in range(300):
        evs = random_evs(rng, n, with_alignment=False)
        plan = schedule(evs.p_text, evs.narration, evs.p_illus, model=model)
        narrated = {}
        for seg in evs.narration.segments:
            narrated[seg.step_index] = narrated.get(seg.step_index, 0.0) + seg.est_duration_s
        anim = {e.subject: e.duration_s for e in plan.events if e.kind == "show_step"}
        for event in plan.events:
            if event.kind != "wait":
                continue
            expected = max(0.0, narrated.get(event.subject, 0.0) - anim[event.subject])
            assert abs(event.duration_s - expected) < 1e-9
            checked += 1
    assert checked >= 300  # every block emits a wait, even a zero-length one


# ---------------------------------------------------------------------------
# 6. Compilation is byte-deterministic over 100 random scripts.  Exact.


def test_manifest_bytes_identical_across_recompilation_of_100_scripts():
    rng = random.Random(100_100)
    for n in range(100):
        evs = random_evs(rng, n)
        blob = canonical_serialize(evs)
        again = canonical_deserialize(blob)
        first = compile_evs(evs, mode="manifest_only").to_bytes()
        second = compile_evs(again, mode="manifest_only").to_bytes()
        assert first == second
        assert json.loads(first)["evs_checksum"] == json.loads(second)["evs_checksum"]


# ---------------------------------------------------------------------------
# 7. The committed boat-allocation replay: valid EVS, the two landmark
#    equations, an answer matching a brute-force oracle, a manifest with the
#    3 step events in order.  < 10 s, fully offline.


def brute_force_boats(total=46, boats=10, large_cap=6, small_cap=4):
    hits = [
        (large, boats - large)
        for large in range(boats + 1)
        if large_cap * large + small_cap * (boats - large) == total
    ]
    assert len(hits) == 1, "the puzzle must have a unique answer"
    return hits[0]


def test_boat_problem_replays_end_to_end(tmp_path):
    started = time.monotonic()
    fixture_dir = FIXTURES / "boat"
    assert fixture_dir.is_dir(), "committed fixtures are missing; run scripts/make_fixtures.py"

    out = tmp_path / "out"
    code = main(
        [
            "generate",
            str(fixture_dir / "problem.json"),
            "--replay",
            str(fixture_dir),
            "--out",
            str(out),
            "--compile",
            "manifest",
        ]
    )
    assert code == 0

    evs = canonical_deserialize((out / "boats-46.evs.json").read_bytes())
    assert validate_evs(evs) == []
    statements = [s.statement for s in evs.p_text.steps]
    assert any("10×4=40" in s for s in statements)
    assert any("46−40=6" in s for s in statements)

    large, small = brute_force_boats()
    answer = evs.p_text.final_answer
    assert int(re.search(r"(\d+)\s+large", answer).group(1)) == large
    assert int(re.search(r"(\d+)\s+small", answer).group(1)) == small

    manifest = json.loads((out / "boats-46.manifest.json").read_text(encoding="utf-8"))
    step_events = [
        e for e in manifest["events"] if e["kind"] == "show_step" and e["subject"] >= 0
    ]
    assert [e["subject"] for e in step_events] == [0, 1, 2]
    starts = [e["start_s"] for e in step_events]
    assert starts == sorted(starts)

    assert time.monotonic() - started < 10.0


# ---------------------------------------------------------------------------
# 8. The same pipeline with illustration disabled still yields a valid,
#    compilable script with no visual assets.  Exact.


def test_pipeline_without_illustration_compiles_cleanly():
    transport = ReplayTransport(FIXTURES / "boat")
    config = PipelineConfig(transport=transport, use_illustration=False)
    problem = Problem.from_dict(
        json.loads((FIXTURES / "boat" / "problem.json").read_text(encoding="utf-8"))
    )
    evs = produce_evs(problem, config)
    assert evs.p_illus is None
    assert validate_evs(evs) == []
    assert evs.alignment.illustration_triggers == ()
    manifest = compile_evs(evs, mode="manifest_only")
    assert not any(e["kind"] == "play_clip" for e in manifest.events)
    assert manifest.total_duration_s > 0


# ---------------------------------------------------------------------------
# 9. Batch runs are reproducible: parallelism 4 and 1 produce identical
#    per-problem artifacts over the committed 8-problem corpus.  Exact.


def test_batch_parallelism_4_matches_serial_over_8_problems(tmp_path):
    problems = FIXTURES / "batch" / "problems"
    replay = FIXTURES / "batch" / "replay"
    assert problems.is_dir() and replay.is_dir(), "run scripts/make_fixtures.py"
    assert len(list(problems.glob("*.json"))) == 8

    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    args = ["batch", str(problems), "--replay", str(replay)]
    assert main(args + ["--out", str(serial), "--parallelism", "1"]) == 0
    assert main(args + ["--out", str(parallel), "--parallelism", "4"]) == 0

    report = json.loads((serial / "batch_report.json").read_text(encoding="utf-8"))
    assert report["total"] == 8 and report["failed"] == 0

    compared = 0
    for path in sorted(serial.glob("*.json")):
        if path.name == "batch_report.json":
            continue  # contains wall-clock times; everything else must be identical
        assert (parallel / path.name).read_bytes() == path.read_bytes(), path.name
        compared += 1
    assert compared == 16  # 8 scripts + 8 manifests
