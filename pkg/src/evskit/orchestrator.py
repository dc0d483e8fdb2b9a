"""Pipeline orchestration: planning, bounded critique–revision, alignment.

The orchestrator drives each working agent through a generate → gate →
revise loop with a hard per-stage iteration budget, accumulates validated
artifacts in a production state machine, and finally derives the alignment
itself — timing is computed, never generated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import agents
from .adapters import HarnessExecutor, StubExecutor
from .compiler import DurationModel, ScheduleError, estimate_narration_duration, plan_to_alignment, schedule
from .critique import (
    CritiqueFinding,
    Feedback,
    Rubric,
    critique_rule,
    critique_semantic,
    critique_tool,
    evaluate_gate,
    extract_json_block,
    load_rubric,
    load_rule_profile,
    verdict_from_findings,
)
from .evs import (
    EVS,
    PREMISE,
    Alignment,
    EVSValidationError,
    Finding,
    Narration,
    NarrationSegment,
    Problem,
    validate_evs,
)
from .llm import CannedTransport, LiveTransport, ReplayTransport, TransportError
from .prompts import DEFAULT_TEMPLATES, PLANNER_TEMPLATE

log = logging.getLogger(__name__)

MAX_ITERATIONS_DEFAULT = 3

STAGES = ("planning", "solving", "illustrating", "narrating", "aligning", "done", "failed")

_TRANSITIONS = {
    "planning": {"solving", "failed"},
    "solving": {"illustrating", "narrating", "failed"},
    "illustrating": {"narrating", "failed"},
    "narrating": {"aligning", "failed"},
    "aligning": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


class StateError(RuntimeError):
    """An illegal production-state transition was attempted."""


@dataclass(frozen=True)
class Plan:
    problem_id: str
    subtasks: tuple[str, ...]
    use_illustration: bool
    rationale: str = ""
    audience_constraints: str = ""

    def __post_init__(self):
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        expected = ("solve", "illustrate", "narrate") if self.use_illustration else ("solve", "narrate")
        if self.subtasks != expected:
            raise ValueError(f"subtasks {self.subtasks} inconsistent with use_illustration={self.use_illustration}")

    @classmethod
    def make(cls, problem_id: str, use_illustration: bool, rationale: str = "", audience_constraints: str = "") -> "Plan":
        subtasks = ("solve", "illustrate", "narrate") if use_illustration else ("solve", "narrate")
        return cls(problem_id, subtasks, use_illustration, rationale, audience_constraints)


@dataclass(frozen=True)
class StageOutcome:
    stage: str
    status: str  # "passed" | "budget_exhausted"
    iterations_used: int
    final_feedback: Feedback | None = None
    artifact: object = None

    def __post_init__(self):
        if self.status not in ("passed", "budget_exhausted"):
            raise ValueError(f"unknown stage status: {self.status!r}")
        if self.status == "passed" and self.artifact is None:
            raise ValueError("a passed stage must carry its artifact")


class ProductionState:
    """Mutable per-problem pipeline state; owned by exactly one pipeline."""

    def __init__(self, plan: Plan):
        self.plan = plan
        self.stage = "planning"
        self.iteration_counts: dict[str, int] = {}
        self.validated: dict[str, object] = {}
        self.warnings: list[CritiqueFinding] = []
        self.last_feedback: Feedback | None = None

    def advance(self, to: str):
        if to not in STAGES:
            raise StateError(f"unknown stage: {to!r}")
        if to not in _TRANSITIONS[self.stage]:
            raise StateError(f"illegal transition {self.stage} → {to}")
        if to == "illustrating" and not self.plan.use_illustration:
            raise StateError("illustrating is not part of this plan")
        if to == "narrating" and self.stage == "solving" and self.plan.use_illustration:
            raise StateError("plan requires illustration before narration")
        self.stage = to

    def to_dict(self) -> dict:
        """Snapshot for persistence; resumption semantics are caller-defined."""
        return {
            "plan": {
                "problem_id": self.plan.problem_id,
                "subtasks": list(self.plan.subtasks),
                "use_illustration": self.plan.use_illustration,
                "rationale": self.plan.rationale,
                "audience_constraints": self.plan.audience_constraints,
            },
            "stage": self.stage,
            "iteration_counts": dict(self.iteration_counts),
            "validated_stages": sorted(self.validated),
            "warnings": [[f.severity, f.message, f.location] for f in self.warnings],
        }


class PipelineFailure(Exception):
    """produce_evs could not deliver a valid EVS."""

    def __init__(self, outcome: StageOutcome, internal: bool = False):
        self.outcome = outcome
        self.internal = internal
        detail = "internal error" if internal else outcome.status
        super().__init__(f"pipeline failed at stage {outcome.stage} ({detail})")


@dataclass
class PipelineConfig:
    """Everything a pipeline run needs; shared read-only across a batch."""

    transport: object
    judge_transport: object = None
    executor: object = field(default_factory=StubExecutor)
    templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    rubrics: dict = field(default_factory=dict)
    rule_profiles: dict = field(default_factory=dict)
    max_iterations: int = MAX_ITERATIONS_DEFAULT
    stage_max_iterations: dict = field(default_factory=dict)
    use_illustration: bool | None = None
    narration_sees_illustration: bool = False
    planner: str = "heuristic"  # "heuristic" | "llm"
    duration_model: DurationModel = field(default_factory=DurationModel)
    template_id: str = "stepwise-v1"
    clip_overflow: str = "stretch"
    tool_timeout_s: float = 30.0

    def __post_init__(self):
        if self.judge_transport is None:
            self.judge_transport = self.transport

    def budget_for(self, stage: str) -> int:
        return int(self.stage_max_iterations.get(stage, self.max_iterations))

    def rubric_for(self, artifact_kind: str) -> Rubric:
        got = self.rubrics.get(artifact_kind)
        if isinstance(got, Rubric):
            return got
        name = got or {"p_text": "math_solution", "p_illus": "illustration", "narration": "narration"}[artifact_kind]
        return load_rubric(name)

    def rules_for(self, artifact_kind: str, subject: str) -> list:
        got = self.rule_profiles.get(artifact_kind)
        if isinstance(got, list):
            return got
        if got is None:
            if artifact_kind == "p_text":
                got = "math_text" if subject == "mathematics" else "language_arts_text"
            elif artifact_kind == "p_illus":
                got = "math_code"
            else:
                got = "narration"
        return load_rule_profile(got)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "PipelineConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(doc, **overrides)

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> "PipelineConfig":
        kwargs: dict = {}
        if "transport" in doc:
            kwargs["transport"] = _transport_from_config(doc["transport"])
        if "judge_transport" in doc:
            kwargs["judge_transport"] = _transport_from_config(doc["judge_transport"])
        if "executor" in doc:
            kwargs["executor"] = _executor_from_config(doc["executor"])
        for key in (
            "max_iterations",
            "stage_max_iterations",
            "use_illustration",
            "narration_sees_illustration",
            "planner",
            "template_id",
            "clip_overflow",
            "tool_timeout_s",
        ):
            if key in doc:
                kwargs[key] = doc[key]
        if "duration_model" in doc:
            kwargs["duration_model"] = DurationModel.from_dict(doc["duration_model"])
        if "rubrics" in doc:
            kwargs["rubrics"] = dict(doc["rubrics"])
        if "rule_profiles" in doc:
            kwargs["rule_profiles"] = dict(doc["rule_profiles"])
        kwargs.update(overrides)
        if "transport" not in kwargs:
            kwargs["transport"] = CannedTransport()
        return cls(**kwargs)


def _transport_from_config(doc: dict):
    mode = doc.get("mode", "canned")
    if mode == "replay":
        return ReplayTransport(doc["fixture_dir"])
    if mode == "live":
        return LiveTransport(
            endpoint=doc.get("endpoint"),
            token=doc.get("token"),
            model=doc.get("model"),
            temperature=float(doc.get("temperature", 0.0)),
        )
    if mode == "canned":
        return CannedTransport(doc.get("response"))
    raise ValueError(f"unknown transport mode in config: {mode!r}")


def _executor_from_config(doc: dict):
    mode = doc.get("mode", "stub")
    if mode == "stub":
        return StubExecutor(default_duration_s=float(doc.get("default_duration_s", 4.0)))
    if mode == "harness":
        return HarnessExecutor(list(doc["command"]))
    raise ValueError(f"unknown executor mode in config: {mode!r}")


# ---------------------------------------------------------------------------
# Planning.

_HEURISTIC_ILLUSTRATION = {"mathematics": True, "language-arts": False, "other": False}


def plan(q: Problem, config: PipelineConfig) -> Plan:
    """Decide the stage list for a problem.

    Heuristic mode uses subject defaults (overridable by config); LLM mode
    asks the planner and falls back to the heuristic when its answer cannot
    be parsed.
    """
    if not q.statement.strip():
        raise ValueError("problem statement is empty")
    heuristic_use = _HEURISTIC_ILLUSTRATION.get(q.subject, False)
    if config.use_illustration is not None:
        heuristic_use = bool(config.use_illustration)

    if config.planner == "llm":
        template = config.templates.get("planner-v1", PLANNER_TEMPLATE)
        task = (
            "Plan the video for this problem.\n\n"
            f"Subject: {q.subject}\nGrade band: {q.grade_band}\nProblem: {q.statement}"
        )
        response = config.transport.complete(template.render(task))
        try:
            doc = extract_json_block(response)
            if not isinstance(doc, dict) or "use_illustration" not in doc:
                raise ValueError("planner JSON missing use_illustration")
            use = bool(doc["use_illustration"])
            if config.use_illustration is not None:
                use = bool(config.use_illustration)
            return Plan.make(
                q.id,
                use,
                rationale=str(doc.get("rationale", "")),
                audience_constraints=str(doc.get("audience_constraints", "")),
            )
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("planner output unparseable (%s); falling back to heuristic", exc)
            return Plan.make(
                q.id,
                heuristic_use,
                rationale=f"heuristic fallback: planner output unparseable ({exc})",
            )
    return Plan.make(q.id, heuristic_use, rationale=f"subject default for {q.subject}")


# ---------------------------------------------------------------------------
# The critique–revision loop.

def run_stage(
    state: ProductionState,
    stage_name: str,
    generate,
    gate,
    max_iterations: int = MAX_ITERATIONS_DEFAULT,
) -> StageOutcome:
    """Drive generate → gate → revise until pass or budget exhaustion.

    ``generate(feedback)`` produces an artifact (feedback is None on the
    first attempt); ``gate(artifact)`` returns (passed, merged Feedback).
    Unparseable generations consume an iteration and come back to the model
    as rule-style findings.  Transport failures end the stage immediately.
    """
    feedback: Feedback | None = None
    artifact = None
    for attempt in range(1, max_iterations + 1):
        state.iteration_counts[stage_name] = attempt
        try:
            artifact = generate(feedback)
        except agents.ParseError as exc:
            feedback = Feedback(
                source="rule",
                findings=(
                    CritiqueFinding("error", f"output unparseable: {exc}", stage_name),
                ),
                iteration=attempt,
            )
            state.last_feedback = feedback
            continue
        except TransportError as exc:
            feedback = Feedback(
                source="merged",
                findings=(CritiqueFinding("error", f"transport failure: {exc}", stage_name),),
                iteration=attempt,
            )
            state.last_feedback = feedback
            return StageOutcome(
                stage=stage_name,
                status="budget_exhausted",
                iterations_used=attempt,
                final_feedback=feedback,
                artifact=None,
            )
        passed, merged = gate(artifact)
        if passed:
            state.last_feedback = None
            return StageOutcome(
                stage=stage_name,
                status="passed",
                iterations_used=attempt,
                final_feedback=None,
                artifact=artifact,
            )
        feedback = replace(merged, iteration=attempt)
        state.last_feedback = feedback
    return StageOutcome(
        stage=stage_name,
        status="budget_exhausted",
        iterations_used=max_iterations,
        final_feedback=feedback,
        artifact=artifact,
    )


# ---------------------------------------------------------------------------
# Stage gates.

def _narration_structure_findings(p_text, narration: Narration) -> list[CritiqueFinding]:
    findings = []
    step_indices = {s.index for s in p_text.steps}
    referenced = set()
    for seg in narration.segments:
        if seg.step_index != PREMISE:
            referenced.add(seg.step_index)
            if seg.step_index not in step_indices:
                findings.append(
                    CritiqueFinding(
                        "error",
                        f"dangling step reference: segment {seg.index} → step {seg.step_index}",
                        f"segments[{seg.index}]",
                    )
                )
    for idx in sorted(step_indices - referenced):
        findings.append(
            CritiqueFinding("error", f"step {idx} is not verbalized by any segment", "segments")
        )
    seen = set()
    prev = object()
    for seg in narration.segments:
        if seg.step_index != prev:
            if seg.step_index in seen:
                findings.append(
                    CritiqueFinding(
                        "error",
                        f"segments for step {seg.step_index} are not consecutive",
                        "segments",
                    )
                )
            seen.add(seg.step_index)
            prev = seg.step_index
    return findings


def _gate_p_text(config: PipelineConfig, q: Problem):
    rubric = config.rubric_for("p_text")
    rules = config.rules_for("p_text", q.subject)

    def gate(artifact):
        sem = critique_semantic(artifact, rubric, config.judge_transport)
        rule = critique_rule(artifact, rules)
        return evaluate_gate([sem, rule])

    return gate


def _gate_p_illus(config: PipelineConfig, q: Problem):
    rubric = config.rubric_for("p_illus")
    rules = config.rules_for("p_illus", q.subject)

    def gate(artifact):
        sem = critique_semantic(list(artifact), rubric, config.judge_transport)
        tool_findings: list[CritiqueFinding] = []
        for i, asset in enumerate(artifact):
            v = critique_tool(asset.code, config.executor, timeout_s=config.tool_timeout_s)
            for f in v.findings:
                tool_findings.append(
                    CritiqueFinding(f.severity, f.message, f"assets[{i}].{f.location}")
                )
            if not v.passed and not any(x.severity == "error" for x in v.findings):
                tool_findings.append(
                    CritiqueFinding("error", "execution failed", f"assets[{i}].code")
                )
        tool = verdict_from_findings("tool", tool_findings)
        rule = critique_rule(list(artifact), rules)
        return evaluate_gate([sem, tool, rule])

    return gate


def _gate_narration(config: PipelineConfig, q: Problem, p_text):
    rubric = config.rubric_for("narration")
    rules = config.rules_for("narration", q.subject)

    def gate(artifact):
        sem = critique_semantic(artifact, rubric, config.judge_transport)
        findings = _narration_structure_findings(p_text, artifact)
        profile_verdict = critique_rule(artifact, rules)
        rule = verdict_from_findings("rule", findings + list(profile_verdict.findings))
        return evaluate_gate([sem, rule])

    return gate


# ---------------------------------------------------------------------------
# Alignment and the full pipeline.

def build_alignment(
    p_text,
    narration: Narration,
    p_illus=None,
    template_id: str = "stepwise-v1",
    model: DurationModel | None = None,
    clip_overflow: str = "stretch",
) -> Alignment:
    """Derive the timing windows for validated content and narration.

    Purely computed — no agent output is consulted.  Precondition failures
    (dangling references, empty narration) surface as validation findings.
    """
    model = model or DurationModel()
    if not narration.segments:
        raise EVSValidationError([Finding("narration.segments", "narration has no segments")])
    try:
        render_plan = schedule(
            p_text,
            narration,
            p_illus,
            model=model,
            template_id=template_id,
            clip_overflow=clip_overflow,
        )
    except ScheduleError as exc:
        raise EVSValidationError(exc.findings) from exc
    return plan_to_alignment(render_plan, model)


def produce_evs(q: Problem, config: PipelineConfig) -> EVS:
    """Run the whole pipeline for one problem; raises PipelineFailure.

    plan → solve → (illustrate) → narrate → align → validate.  Gate failures
    inside stages trigger revision; failure of the final validation is an
    internal error (alignment is computed, so it must be correct by
    construction).
    """
    the_plan = plan(q, config)
    state = ProductionState(the_plan)
    state.advance("solving")

    solver_template = config.templates.get("solver-v1")
    outcome = run_stage(
        state,
        "solving",
        lambda fb: agents.solve(q, fb, config.transport, solver_template or agents.SOLVER_TEMPLATE),
        _gate_p_text(config, q),
        config.budget_for("solving"),
    )
    if outcome.status != "passed":
        state.advance("failed")
        raise PipelineFailure(outcome)
    p_text = outcome.artifact
    state.validated["p_text"] = p_text

    p_illus = None
    if the_plan.use_illustration:
        state.advance("illustrating")
        required = tuple(
            r.function for r in config.rules_for("p_illus", q.subject) if r.kind == "function_must_use"
        )
        illus_template = config.templates.get("illustrator-v1")
        outcome = run_stage(
            state,
            "illustrating",
            lambda fb: agents.illustrate(
                q,
                p_text,
                fb,
                config.transport,
                illus_template or agents.ILLUSTRATOR_TEMPLATE,
                required_primitives=required or ("Write", "Create"),
            ),
            _gate_p_illus(config, q),
            config.budget_for("illustrating"),
        )
        if outcome.status != "passed":
            state.advance("failed")
            raise PipelineFailure(outcome)
        p_illus = tuple(outcome.artifact)
        state.validated["p_illus"] = p_illus

    state.advance("narrating")
    narr_template = config.templates.get("narrator-v1")
    outcome = run_stage(
        state,
        "narrating",
        lambda fb: agents.narrate(
            q,
            p_text,
            p_illus if config.narration_sees_illustration else None,
            fb,
            config.transport,
            narr_template or agents.NARRATOR_TEMPLATE,
        ),
        _gate_narration(config, q, p_text),
        config.budget_for("narrating"),
    )
    if outcome.status != "passed":
        state.advance("failed")
        raise PipelineFailure(outcome)
    narration = outcome.artifact
    state.validated["narration"] = narration

    state.advance("aligning")
    segments = tuple(
        NarrationSegment(
            index=seg.index,
            text=seg.text,
            step_index=seg.step_index,
            est_duration_s=estimate_narration_duration(seg.text, config.duration_model),
        )
        for seg in narration.segments
    )
    narration = Narration(segments=segments)
    try:
        alignment = build_alignment(
            p_text,
            narration,
            p_illus,
            template_id=config.template_id,
            model=config.duration_model,
            clip_overflow=config.clip_overflow,
        )
        evs = EVS(problem=q, p_text=p_text, narration=narration, p_illus=p_illus, alignment=alignment)
        findings = validate_evs(evs)
    except EVSValidationError as exc:
        findings = exc.findings
        evs = None
    if findings or evs is None:
        state.advance("failed")
        fb = Feedback(
            source="merged",
            findings=tuple(CritiqueFinding("error", f.message, f.location) for f in findings),
        )
        raise PipelineFailure(
            StageOutcome(
                stage="aligning",
                status="budget_exhausted",
                iterations_used=0,
                final_feedback=fb,
                artifact=None,
            ),
            internal=True,
        )
    state.advance("done")
    return evs
