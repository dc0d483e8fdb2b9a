"""Deterministic compilation of a script into a timed render plan.

Scheduling is pure arithmetic over the script: no randomness, no clocks,
no model calls.  Running it twice on the same input yields byte-identical
manifests, which is what makes refinement loops and caching safe.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .evs import (
    EVS,
    PREMISE,
    Alignment,
    ClipTrigger,
    EVSValidationError,
    Finding,
    NarrationSegment,
    TimeWindow,
    canonical_json_bytes,
    canonical_serialize,
)

log = logging.getLogger(__name__)

_CONTROL_SEQ = re.compile(r"\\(?:[a-zA-Z]+|.)")

# Unified CJK ideograph ranges; each such character is narrated on its own
# rather than as part of a space-separated word.
_CJK_RANGES = ((0x3400, 0x4DBF), (0x4E00, 0x9FFF), (0xF900, 0xFAFF))


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


@dataclass(frozen=True)
class DurationModel:
    """Tunable constants for the timing arithmetic.

    Defaults: a step needs 2 s of base display time plus 0.15 s per rendered
    glyph, clamped to [2 s, 20 s]; narration reads 0.4 s per word and 0.25 s
    per CJK character; block transitions take 0.5 s.
    """

    base_display_s: float = 2.0
    per_glyph_s: float = 0.15
    min_step_s: float = 2.0
    max_step_s: float = 20.0
    per_word_s: float = 0.4
    per_cjk_char_s: float = 0.25
    transition_s: float = 0.5

    def to_dict(self) -> dict:
        return {
            "base_display_s": self.base_display_s,
            "per_glyph_s": self.per_glyph_s,
            "min_step_s": self.min_step_s,
            "max_step_s": self.max_step_s,
            "per_word_s": self.per_word_s,
            "per_cjk_char_s": self.per_cjk_char_s,
            "transition_s": self.transition_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DurationModel":
        return cls(**{k: float(v) for k, v in d.items()})


def symbolic_density(sources: list[str] | tuple[str, ...]) -> int:
    """Count rendered glyphs across markup fragments.

    A control sequence (``\\times``, ``\\frac`` …) renders as one glyph;
    braces and whitespace render as none; every other character is one.
    Each fragment adds one glyph for its surrounding box.
    """
    total = 0
    for source in sources:
        total += 1  # the element's own box
        rest = source
        while rest:
            m = _CONTROL_SEQ.match(rest)
            if m:
                total += 1
                rest = rest[m.end():]
                continue
            ch = rest[0]
            if not ch.isspace() and ch not in "{}":
                total += 1
            rest = rest[1:]
    return total


def count_words_and_cjk(text: str) -> tuple[int, int]:
    """Split narration into space-separated words and CJK characters."""
    cjk = sum(1 for ch in text if _is_cjk(ch))
    without_cjk = "".join(" " if _is_cjk(ch) else ch for ch in text)
    words = len(without_cjk.split())
    return words, cjk


def estimate_narration_duration(text: str, model: DurationModel) -> float:
    words, cjk = count_words_and_cjk(text)
    return model.per_word_s * words + model.per_cjk_char_s * cjk


def animation_time(step_sources: list[str] | tuple[str, ...], model: DurationModel) -> float:
    raw = model.base_display_s + model.per_glyph_s * symbolic_density(step_sources)
    return min(model.max_step_s, max(model.min_step_s, raw))


@dataclass(frozen=True)
class RenderEvent:
    """One entry on the master timeline.

    kind is one of show_step, play_clip, wait, transition.  subject is the
    step index (or the premise sentinel) for show_step/wait/transition, or
    the clip index for play_clip.
    """

    kind: str
    subject: int
    start_s: float
    duration_s: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subject": self.subject,
            "start_s": self.start_s,
            "duration_s": self.duration_s,
        }


@dataclass(frozen=True)
class RenderPlan:
    events: tuple[RenderEvent, ...]
    total_duration_s: float
    template_id: str
    step_windows: dict = field(default_factory=dict)
    segment_windows: dict = field(default_factory=dict)
    clip_triggers: tuple[ClipTrigger, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "step_windows", dict(self.step_windows))
        object.__setattr__(self, "segment_windows", dict(self.segment_windows))
        object.__setattr__(self, "clip_triggers", tuple(self.clip_triggers))


class ClipOverflow(ValueError):
    """A clip is longer than its host window under the strict policy."""


class ScheduleError(ValueError):
    """The script cannot be scheduled (bad references or narration gaps)."""

    def __init__(self, findings: list[Finding]):
        self.findings = list(findings)
        super().__init__("; ".join(f.message for f in findings) or "unschedulable script")


def _blocks_of(p_text, narration) -> list[tuple[int, list[NarrationSegment]]]:
    """Group the timeline into display blocks: premise first, then each step.

    A block exists for the premise only when some segment narrates it; every
    solution step gets a block whether or not it is narrated (scheduling is
    total over steps so silent steps still appear on screen).
    """
    by_unit: dict[int, list[NarrationSegment]] = {}
    for seg in narration.segments:
        by_unit.setdefault(seg.step_index, []).append(seg)
    blocks: list[tuple[int, list[NarrationSegment]]] = []
    if PREMISE in by_unit:
        blocks.append((PREMISE, by_unit[PREMISE]))
    for step in p_text.steps:
        blocks.append((step.index, by_unit.get(step.index, [])))
    return blocks


def schedule(
    p_text,
    narration,
    p_illus=None,
    model: DurationModel | None = None,
    template_id: str = "stepwise-v1",
    clip_durations: dict | None = None,
    clip_overflow: str = "stretch",
) -> RenderPlan:
    """Lay the script out on a single master timeline.

    Each display block shows its unit for ``max(animation, narration)``
    seconds: the show_step event covers the animation, and an explicit wait
    event (zero-length when narration is not the longer side) bridges the
    remainder so narration never outlives the screen.  Blocks abut via one
    transition event.  Clips overlay the window of their first target step
    starting at that step's visual start; with known durations the stretch
    policy grows the window to fit, strict raises ClipOverflow.
    """
    model = model or DurationModel()
    clip_durations = dict(clip_durations or {})
    if clip_overflow not in ("stretch", "strict"):
        raise ValueError(f"unknown clip overflow policy: {clip_overflow!r}")

    problems: list[Finding] = []
    step_indices = {s.index for s in p_text.steps}
    for seg in narration.segments:
        if seg.step_index != PREMISE and seg.step_index not in step_indices:
            problems.append(
                Finding(
                    f"narration.segments[{seg.index}].step_index",
                    f"dangling step reference: segment {seg.index} → step {seg.step_index}",
                )
            )
        if seg.est_duration_s < 0:
            problems.append(
                Finding(
                    f"narration.segments[{seg.index}].est_duration_s",
                    f"segment {seg.index} has negative duration",
                )
            )
    if not p_text.steps:
        problems.append(Finding("p_text.steps", "nothing to schedule: no steps"))
    if problems:
        raise ScheduleError(problems)

    sources_by_step: dict[int, tuple[str, ...]] = {
        s.index: tuple(e.source for e in s.symbolic_elements) for s in p_text.steps
    }

    clips_by_step: dict[int, list[int]] = {}
    if p_illus:
        for ci, asset in enumerate(p_illus):
            if asset.target_steps:
                clips_by_step.setdefault(asset.target_steps[0], []).append(ci)

    events: list[RenderEvent] = []
    step_windows: dict[int, TimeWindow] = {}
    segment_windows: dict[int, TimeWindow] = {}
    triggers: list[ClipTrigger] = []

    cursor = 0.0
    blocks = _blocks_of(p_text, narration)
    for bi, (unit, segments) in enumerate(blocks):
        if bi > 0:
            events.append(RenderEvent("transition", unit, cursor, model.transition_s))
            cursor += model.transition_s

        anim = animation_time(sources_by_step.get(unit, ()), model)
        narr = sum(seg.est_duration_s for seg in segments)
        window_len = max(anim, narr)

        # Known clip durations can extend the window under the stretch policy.
        for ci in clips_by_step.get(unit, ()):
            dur = clip_durations.get(ci)
            if dur is None:
                continue
            if dur > window_len:
                if clip_overflow == "strict":
                    raise ClipOverflow(
                        f"clip {ci} runs {dur:.3f}s but step {unit} window is {window_len:.3f}s"
                    )
                window_len = float(dur)

        start = cursor
        events.append(RenderEvent("show_step", unit, start, anim))
        wait = window_len - anim
        events.append(RenderEvent("wait", unit, start + anim, max(0.0, wait)))

        for ci in clips_by_step.get(unit, ()):
            dur = clip_durations.get(ci)
            clip_len = window_len if dur is None else float(dur)
            trig_window = TimeWindow(start, start + clip_len)
            events.append(RenderEvent("play_clip", ci, start, clip_len))
            triggers.append(ClipTrigger(ci, unit, trig_window))

        seg_cursor = start
        for seg in segments:
            segment_windows[seg.index] = TimeWindow(seg_cursor, seg_cursor + seg.est_duration_s)
            seg_cursor += seg.est_duration_s

        step_windows[unit] = TimeWindow(start, start + window_len)
        cursor = start + window_len

    return RenderPlan(
        events=tuple(events),
        total_duration_s=cursor,
        template_id=template_id,
        step_windows=step_windows,
        segment_windows=segment_windows,
        clip_triggers=tuple(triggers),
    )


def plan_to_alignment(plan: RenderPlan, model: DurationModel) -> Alignment:
    return Alignment(
        template_id=plan.template_id,
        step_windows=dict(plan.step_windows),
        segment_windows=dict(plan.segment_windows),
        transition_s=model.transition_s,
        illustration_triggers=plan.clip_triggers,
    )


def fill_narration_estimates(evs: EVS, model: DurationModel) -> EVS:
    """Return a copy whose segments carry model-estimated durations."""
    segments = tuple(
        replace(seg, est_duration_s=estimate_narration_duration(seg.text, model))
        for seg in evs.narration.segments
    )
    return replace(evs, narration=replace(evs.narration, segments=segments))


@dataclass(frozen=True)
class VideoManifest:
    """The compiled artifact: an ordered storyboard plus audio references."""

    evs_checksum: str
    template_id: str
    total_duration_s: float
    events: tuple[dict, ...]
    storyboard: tuple[dict, ...]
    audio: tuple[dict, ...]
    media: tuple[dict, ...] = ()
    mode: str = "manifest_only"

    def to_dict(self) -> dict:
        return {
            "manifest_version": 1,
            "mode": self.mode,
            "evs_checksum": self.evs_checksum,
            "template_id": self.template_id,
            "total_duration_s": self.total_duration_s,
            "events": list(self.events),
            "storyboard": list(self.storyboard),
            "audio": list(self.audio),
            "media": list(self.media),
        }

    def to_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())


class AssemblyError(RuntimeError):
    """Full compilation failed while producing media for a specific event."""


def _rel(path: str, base: Path) -> str:
    """Store media paths relative to the manifest's directory when possible."""
    if not path:
        return ""
    try:
        return Path(path).relative_to(base).as_posix()
    except ValueError:
        return str(path)


def _storyboard(evs: EVS) -> list[dict]:
    entries = [
        {
            "unit": "premise",
            "text": evs.p_text.premise,
            "symbolic_sources": [],
        }
    ]
    for step in evs.p_text.steps:
        entries.append(
            {
                "unit": step.index,
                "text": step.statement,
                "symbolic_sources": [e.source for e in step.symbolic_elements],
            }
        )
    entries.append({"unit": "final_answer", "text": evs.p_text.final_answer, "symbolic_sources": []})
    return entries


def compile_evs(
    evs: EVS,
    mode: str = "manifest_only",
    model: DurationModel | None = None,
    out_dir: str | Path | None = None,
    tts=None,
    executor=None,
    clip_overflow: str = "stretch",
) -> VideoManifest:
    """Compile a valid aligned-or-alignable script into a manifest.

    manifest_only builds the storyboard and timing with placeholder audio
    references; full additionally synthesizes narration audio and renders
    illustration clips, then re-schedules with the measured durations.
    """
    if mode not in ("manifest_only", "full"):
        raise ValueError(f"unknown compile mode: {mode!r}")
    model = model or DurationModel()

    checksum = hashlib.sha256(canonical_serialize(evs)).hexdigest()

    audio: list[dict] = []
    media: list[dict] = []
    clip_durations: dict[int, float] = {}
    working = evs

    if mode == "full":
        if tts is None:
            raise AssemblyError("full compilation requires a speech synthesizer")
        if out_dir is None:
            raise AssemblyError("full compilation requires an output directory")
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

        new_segments = []
        for seg in evs.narration.segments:
            try:
                resp = tts.synthesize(seg.text, out_dir=out_path, name=f"segment_{seg.index:03d}")
            except Exception as exc:  # noqa: BLE001 — adapter failures become assembly errors
                raise AssemblyError(f"speech synthesis failed for segment {seg.index}: {exc}") from exc
            new_segments.append(replace(seg, est_duration_s=resp.actual_duration_s))
            audio.append(
                {
                    "segment": seg.index,
                    "path": _rel(resp.audio_path, out_path),
                    "duration_s": resp.actual_duration_s,
                }
            )
        working = replace(evs, narration=replace(evs.narration, segments=tuple(new_segments)))

        if evs.p_illus:
            if executor is None:
                raise AssemblyError("full compilation requires a clip executor")
            for ci, asset in enumerate(evs.p_illus):
                result = executor.run(
                    asset.code,
                    mode="render",
                    output_dir=str(out_path) if out_path else None,
                )
                if result.status != "ok":
                    raise AssemblyError(
                        f"clip {ci} failed to render ({result.status}): "
                        + "; ".join(result.diagnostics)
                    )
                if result.clip_duration_s is not None:
                    clip_durations[ci] = float(result.clip_duration_s)
                media.append(
                    {
                        "clip": ci,
                        "path": _rel(result.artifact_path or "", out_path),
                        "duration_s": result.clip_duration_s,
                    }
                )
    else:
        for seg in evs.narration.segments:
            audio.append(
                {
                    "segment": seg.index,
                    "path": f"audio/segment_{seg.index:03d}.wav",
                    "duration_s": seg.est_duration_s,
                }
            )

    template_id = evs.alignment.template_id if evs.alignment else "stepwise-v1"
    plan = schedule(
        working.p_text,
        working.narration,
        working.p_illus,
        model=model,
        template_id=template_id,
        clip_durations=clip_durations,
        clip_overflow=clip_overflow,
    )
    log.info(
        "compiled %s: %d events, %.3fs total", evs.problem.id, len(plan.events), plan.total_duration_s
    )

    return VideoManifest(
        evs_checksum=checksum,
        template_id=plan.template_id,
        total_duration_s=plan.total_duration_s,
        events=tuple(e.to_dict() for e in plan.events),
        storyboard=tuple(_storyboard(working)),
        audio=tuple(audio),
        media=tuple(media),
        mode=mode,
    )


def write_manifest(manifest: VideoManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(manifest.to_bytes())
    return path


__all__ = [
    "AssemblyError",
    "ClipOverflow",
    "DurationModel",
    "RenderEvent",
    "RenderPlan",
    "ScheduleError",
    "VideoManifest",
    "animation_time",
    "compile_evs",
    "count_words_and_cjk",
    "estimate_narration_duration",
    "fill_narration_estimates",
    "plan_to_alignment",
    "schedule",
    "symbolic_density",
    "write_manifest",
]
