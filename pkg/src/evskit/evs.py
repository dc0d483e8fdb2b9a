"""EVS data model, cross-reference validation, and canonical serialization.

An executable video script (EVS) bundles pedagogical content, narration,
and the alignment rules that bind them to a timeline.  The canonical JSON
form is byte-stable: two scripts with equal field values serialize to
identical bytes regardless of construction or map-insertion order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

EVS_VERSION = 1

# Sentinel step index for narration segments that verbalize the problem
# premise rather than a solution step.  Serialized as the tag "premise".
PREMISE = -1

SUBJECTS = ("mathematics", "language-arts", "other")
GRADE_BANDS = ("elementary", "middle", "other")
ELEMENT_KINDS = ("equation", "expression", "shape", "label")


class EVSFormatError(ValueError):
    """On-disk EVS JSON cannot be decoded into the model."""


class EVSValidationError(ValueError):
    """An operation required a valid EVS but validation findings exist."""

    def __init__(self, findings: list["Finding"]):
        self.findings = list(findings)
        summary = "; ".join(f.message for f in self.findings[:5])
        super().__init__(f"invalid EVS ({len(self.findings)} findings): {summary}")


@dataclass(frozen=True)
class Finding:
    """One violated invariant: where it was found and what is wrong."""

    location: str
    message: str


@dataclass(frozen=True)
class Problem:
    id: str
    subject: str
    grade_band: str
    statement: str
    figures: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "figures", tuple(self.figures))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "subject": self.subject,
            "grade_band": self.grade_band,
            "statement": self.statement,
            "figures": list(self.figures),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            id=str(d["id"]),
            subject=str(d["subject"]),
            grade_band=str(d["grade_band"]),
            statement=str(d["statement"]),
            figures=tuple(str(f) for f in d.get("figures", ())),
        )


@dataclass(frozen=True)
class SymbolicElement:
    """A renderable markup fragment: equation, expression, shape, or label."""

    source: str
    kind: str = "expression"

    def to_dict(self) -> dict:
        return {"source": self.source, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "SymbolicElement":
        return cls(source=str(d["source"]), kind=str(d.get("kind", "expression")))


@dataclass(frozen=True)
class SolutionStep:
    index: int
    statement: str
    symbolic_elements: tuple[SymbolicElement, ...] = ()
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "symbolic_elements", tuple(self.symbolic_elements))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "statement": self.statement,
            "symbolic_elements": [e.to_dict() for e in self.symbolic_elements],
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolutionStep":
        return cls(
            index=int(d["index"]),
            statement=str(d["statement"]),
            symbolic_elements=tuple(
                SymbolicElement.from_dict(e) for e in d.get("symbolic_elements", ())
            ),
            rationale=str(d.get("rationale", "")),
        )


@dataclass(frozen=True)
class PedagogicalText:
    premise: str
    steps: tuple[SolutionStep, ...]
    final_answer: str

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def to_dict(self) -> dict:
        return {
            "premise": self.premise,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PedagogicalText":
        return cls(
            premise=str(d.get("premise", "")),
            steps=tuple(SolutionStep.from_dict(s) for s in d.get("steps", ())),
            final_answer=str(d.get("final_answer", "")),
        )


@dataclass(frozen=True)
class IllustrationAsset:
    """Executable visualization code targeting one or more solution steps."""

    code: str
    asset_declarations: tuple[str, ...] = ()
    target_steps: tuple[int, ...] = ()
    required_primitives: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "asset_declarations", tuple(self.asset_declarations))
        object.__setattr__(self, "target_steps", tuple(int(i) for i in self.target_steps))
        object.__setattr__(self, "required_primitives", tuple(self.required_primitives))

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "asset_declarations": list(self.asset_declarations),
            "target_steps": list(self.target_steps),
            "required_primitives": list(self.required_primitives),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IllustrationAsset":
        return cls(
            code=str(d["code"]),
            asset_declarations=tuple(str(a) for a in d.get("asset_declarations", ())),
            target_steps=tuple(int(i) for i in d.get("target_steps", ())),
            required_primitives=tuple(str(p) for p in d.get("required_primitives", ())),
        )


@dataclass(frozen=True)
class NarrationSegment:
    index: int
    text: str
    step_index: int = PREMISE
    est_duration_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "est_duration_s", float(self.est_duration_s))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "text": self.text,
            "step_index": _encode_step_index(self.step_index),
            "est_duration_s": _canon_num(self.est_duration_s),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarrationSegment":
        return cls(
            index=int(d["index"]),
            text=str(d["text"]),
            step_index=_decode_step_index(d.get("step_index", "premise")),
            est_duration_s=float(d.get("est_duration_s", 0.0)),
        )


@dataclass(frozen=True)
class Narration:
    segments: tuple[NarrationSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "Narration":
        return cls(segments=tuple(NarrationSegment.from_dict(s) for s in d.get("segments", ())))


@dataclass(frozen=True)
class TimeWindow:
    start_s: float
    end_s: float

    def __post_init__(self):
        object.__setattr__(self, "start_s", float(self.start_s))
        object.__setattr__(self, "end_s", float(self.end_s))

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s

    def to_dict(self) -> dict:
        return {"start_s": _canon_num(self.start_s), "end_s": _canon_num(self.end_s)}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeWindow":
        return cls(start_s=float(d["start_s"]), end_s=float(d["end_s"]))


@dataclass(frozen=True)
class ClipTrigger:
    """Schedules one illustration clip inside the window of a step."""

    clip_index: int
    step_index: int
    window: TimeWindow

    def to_dict(self) -> dict:
        return {
            "clip_index": self.clip_index,
            "step_index": self.step_index,
            "window": self.window.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipTrigger":
        return cls(
            clip_index=int(d["clip_index"]),
            step_index=int(d["step_index"]),
            window=TimeWindow.from_dict(d["window"]),
        )


@dataclass(frozen=True)
class Alignment:
    """Orchestrator-derived timing that binds narration to visual events."""

    template_id: str
    step_windows: dict = field(default_factory=dict)
    segment_windows: dict = field(default_factory=dict)
    transition_s: float = 0.0
    illustration_triggers: tuple[ClipTrigger, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "step_windows", dict(self.step_windows))
        object.__setattr__(self, "segment_windows", dict(self.segment_windows))
        object.__setattr__(self, "transition_s", float(self.transition_s))
        object.__setattr__(self, "illustration_triggers", tuple(self.illustration_triggers))

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "step_windows": {
                _encode_step_index(k): w.to_dict() for k, w in self.step_windows.items()
            },
            "segment_windows": {str(k): w.to_dict() for k, w in self.segment_windows.items()},
            "transition_s": _canon_num(self.transition_s),
            "illustration_triggers": [t.to_dict() for t in self.illustration_triggers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Alignment":
        return cls(
            template_id=str(d["template_id"]),
            step_windows={
                _decode_step_index(k): TimeWindow.from_dict(w)
                for k, w in d.get("step_windows", {}).items()
            },
            segment_windows={
                int(k): TimeWindow.from_dict(w) for k, w in d.get("segment_windows", {}).items()
            },
            transition_s=float(d.get("transition_s", 0.0)),
            illustration_triggers=tuple(
                ClipTrigger.from_dict(t) for t in d.get("illustration_triggers", ())
            ),
        )


@dataclass(frozen=True)
class EVS:
    problem: Problem
    p_text: PedagogicalText
    narration: Narration
    p_illus: tuple[IllustrationAsset, ...] | None = None
    alignment: Alignment | None = None

    def __post_init__(self):
        if self.p_illus is not None:
            object.__setattr__(self, "p_illus", tuple(self.p_illus))

    def to_dict(self) -> dict:
        return {
            "evs_version": EVS_VERSION,
            "problem": self.problem.to_dict(),
            "p_text": self.p_text.to_dict(),
            "p_illus": None if self.p_illus is None else [a.to_dict() for a in self.p_illus],
            "narration": self.narration.to_dict(),
            "alignment": None if self.alignment is None else self.alignment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EVS":
        version = d.get("evs_version")
        if version != EVS_VERSION:
            raise EVSFormatError(f"unsupported evs_version: {version!r}")
        p_illus = d.get("p_illus")
        alignment = d.get("alignment")
        return cls(
            problem=Problem.from_dict(d["problem"]),
            p_text=PedagogicalText.from_dict(d["p_text"]),
            narration=Narration.from_dict(d["narration"]),
            p_illus=None if p_illus is None else tuple(IllustrationAsset.from_dict(a) for a in p_illus),
            alignment=None if alignment is None else Alignment.from_dict(alignment),
        )


def _encode_step_index(idx: int) -> str:
    return "premise" if idx == PREMISE else str(int(idx))


def _decode_step_index(raw) -> int:
    if raw == "premise":
        return PREMISE
    return int(raw)


def _canon_num(x) -> float:
    # Folds -0.0 into 0.0 so canonical bytes are insensitive to sign of zero.
    v = float(x)
    return 0.0 if v == 0.0 else v


def _bad_number(x) -> bool:
    try:
        v = float(x)
    except (TypeError, ValueError):
        return True
    return math.isnan(v) or math.isinf(v)


def validate_evs(evs: EVS) -> list[Finding]:
    """Check every cross-reference and structural invariant of an EVS.

    Total: returns one finding per violation and never raises for
    structurally well-formed input.  An empty report means the EVS is valid.
    """
    out: list[Finding] = []

    prob = evs.problem
    if not prob.statement.strip():
        out.append(Finding("problem.statement", "problem statement is empty"))
    if not prob.id:
        out.append(Finding("problem.id", "problem id is empty"))
    if prob.subject not in SUBJECTS:
        out.append(Finding("problem.subject", f"unknown subject: {prob.subject!r}"))
    if prob.grade_band not in GRADE_BANDS:
        out.append(Finding("problem.grade_band", f"unknown grade band: {prob.grade_band!r}"))

    steps = evs.p_text.steps
    if not steps:
        out.append(Finding("p_text.steps", "solution has no steps"))
    for pos, step in enumerate(steps):
        if step.index != pos:
            out.append(
                Finding(
                    f"p_text.steps[{pos}].index",
                    f"step indices must be contiguous from 0, got {step.index} at position {pos}",
                )
            )
        if not step.statement.strip():
            out.append(Finding(f"p_text.steps[{pos}].statement", f"step {pos} statement is empty"))
        for j, elem in enumerate(step.symbolic_elements):
            if not elem.source:
                out.append(
                    Finding(
                        f"p_text.steps[{pos}].symbolic_elements[{j}].source",
                        f"symbolic element {j} of step {pos} has empty source",
                    )
                )
            if elem.kind not in ELEMENT_KINDS:
                out.append(
                    Finding(
                        f"p_text.steps[{pos}].symbolic_elements[{j}].kind",
                        f"unknown element kind: {elem.kind!r}",
                    )
                )
    if not evs.p_text.final_answer.strip():
        out.append(Finding("p_text.final_answer", "final answer is empty"))

    step_indices = {s.index for s in steps}

    if evs.p_illus is not None:
        for i, asset in enumerate(evs.p_illus):
            if not asset.code.strip():
                out.append(Finding(f"p_illus[{i}].code", f"illustration {i} has empty code"))
            for t in asset.target_steps:
                if t not in step_indices:
                    out.append(
                        Finding(
                            f"p_illus[{i}].target_steps",
                            f"dangling step reference: illustration {i} → step {t}",
                        )
                    )

    segments = evs.narration.segments
    if not segments:
        out.append(Finding("narration.segments", "narration has no segments"))
    referenced: set[int] = set()
    for pos, seg in enumerate(segments):
        if seg.index != pos:
            out.append(
                Finding(
                    f"narration.segments[{pos}].index",
                    f"segment indices must be contiguous from 0, got {seg.index} at position {pos}",
                )
            )
        if not seg.text.strip():
            out.append(Finding(f"narration.segments[{pos}].text", f"segment {pos} text is empty"))
        if _bad_number(seg.est_duration_s) or seg.est_duration_s < 0:
            out.append(
                Finding(
                    f"narration.segments[{pos}].est_duration_s",
                    f"segment {pos} duration must be a finite number ≥ 0",
                )
            )
        if seg.step_index != PREMISE:
            referenced.add(seg.step_index)
            if seg.step_index not in step_indices:
                out.append(
                    Finding(
                        f"narration.segments[{pos}].step_index",
                        f"dangling step reference: segment {pos} → step {seg.step_index}",
                    )
                )
    for idx in sorted(step_indices):
        if idx not in referenced:
            out.append(
                Finding("narration.segments", f"step {idx} is not verbalized by any segment")
            )
    # Segments for the same logical unit must form one consecutive run.
    seen_units: set[int] = set()
    prev_unit: int | None = None
    for seg in segments:
        if seg.step_index != prev_unit:
            if seg.step_index in seen_units:
                out.append(
                    Finding(
                        "narration.segments",
                        f"segments for step {_encode_step_index(seg.step_index)} are not consecutive",
                    )
                )
            seen_units.add(seg.step_index)
            prev_unit = seg.step_index

    if evs.alignment is not None:
        out.extend(_validate_alignment(evs))

    return out


def _validate_alignment(evs: EVS) -> list[Finding]:
    out: list[Finding] = []
    ali = evs.alignment
    assert ali is not None
    if _bad_number(ali.transition_s) or ali.transition_s < 0:
        out.append(Finding("alignment.transition_s", "transition must be a finite number ≥ 0"))

    def check_window(w: TimeWindow, loc: str):
        if _bad_number(w.start_s) or _bad_number(w.end_s):
            out.append(Finding(loc, "window bounds must be finite numbers"))
            return
        if w.start_s < 0:
            out.append(Finding(loc, "window starts before 0"))
        if w.end_s < w.start_s:
            out.append(Finding(loc, "window ends before it starts"))

    for key in sorted(ali.step_windows):
        check_window(ali.step_windows[key], f"alignment.step_windows[{_encode_step_index(key)}]")
    for key in sorted(ali.segment_windows):
        check_window(ali.segment_windows[key], f"alignment.segment_windows[{key}]")

    # Windows must be monotone and non-overlapping in index order
    # (premise precedes step 0 by sentinel ordering).
    for name, windows in (
        ("step_windows", [ali.step_windows[k] for k in sorted(ali.step_windows)]),
        ("segment_windows", [ali.segment_windows[k] for k in sorted(ali.segment_windows)]),
    ):
        for a, b in zip(windows, windows[1:]):
            if b.start_s < a.end_s:
                out.append(
                    Finding(f"alignment.{name}", f"{name} overlap or run backwards in index order")
                )
                break

    for seg in evs.narration.segments:
        if seg.index not in ali.segment_windows:
            out.append(
                Finding(
                    "alignment.segment_windows",
                    f"segment {seg.index} has no window",
                )
            )

    step_indices = {s.index for s in evs.p_text.steps}
    n_clips = 0 if evs.p_illus is None else len(evs.p_illus)
    for i, trig in enumerate(ali.illustration_triggers):
        if not (0 <= trig.clip_index < n_clips):
            out.append(
                Finding(
                    f"alignment.illustration_triggers[{i}]",
                    f"trigger references unknown clip {trig.clip_index}",
                )
            )
        if trig.step_index not in step_indices:
            out.append(
                Finding(
                    f"alignment.illustration_triggers[{i}]",
                    f"trigger references unknown step {trig.step_index}",
                )
            )
        check_window(trig.window, f"alignment.illustration_triggers[{i}].window")
    return out


def _normalize_strings(obj):
    if isinstance(obj, str):
        return obj.replace("\r\n", "\n").replace("\r", "\n")
    if isinstance(obj, list):
        return [_normalize_strings(v) for v in obj]
    if isinstance(obj, dict):
        return {_normalize_strings(k): _normalize_strings(v) for k, v in obj.items()}
    return obj


def canonical_json_bytes(doc: dict) -> bytes:
    """Serialize a plain document with stable key order and number format."""
    normalized = _normalize_strings(doc)
    text = json.dumps(normalized, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return text.encode("utf-8") + b"\n"


def canonical_serialize(evs: EVS) -> bytes:
    """Serialize a valid EVS to its canonical byte form.

    Rejects invalid scripts: callers get the full validation report rather
    than a half-trusted document on disk.
    """
    findings = validate_evs(evs)
    if findings:
        raise EVSValidationError(findings)
    return canonical_json_bytes(evs.to_dict())


def canonical_deserialize(data: bytes) -> EVS:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EVSFormatError(f"not a UTF-8 JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise EVSFormatError("top-level EVS document must be a JSON object")
    try:
        return EVS.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, EVSFormatError):
            raise
        raise EVSFormatError(f"malformed EVS document: {exc}") from exc
