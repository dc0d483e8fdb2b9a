"""Shared test helpers: independent timing oracles and a random EVS factory.

The oracle implementations here deliberately share no code with the package:
density is counted with an explicit character walk, word counting with a
state machine, and the timeline is simulated event by event with a moving
clock.  Agreement between the two sides is what the scheduling tests assert.
"""

from __future__ import annotations

import random

from evskit.evs import (
    EVS,
    PREMISE,
    IllustrationAsset,
    Narration,
    NarrationSegment,
    PedagogicalText,
    Problem,
    SolutionStep,
    SymbolicElement,
)
from evskit.orchestrator import build_alignment

# ---------------------------------------------------------------------------
# Independent counting oracles.


def oracle_density(sources) -> int:
    total = 0
    for src in sources:
        total += 1  # per-element structure weight
        i = 0
        while i < len(src):
            c = src[i]
            if c == "\\":
                j = i + 1
                while j < len(src) and src[j].isalpha():
                    j += 1
                if j == i + 1:  # backslash + one non-letter (or trailing)
                    j = min(i + 2, len(src))
                total += 1
                i = j
            elif c in "{}" or c.isspace():
                i += 1
            else:
                total += 1
                i += 1
    return total


def _oracle_is_cjk(ch: str) -> bool:
    cp = ord(ch)
    if 0x3400 <= cp <= 0x4DBF:
        return True
    if 0x4E00 <= cp <= 0x9FFF:
        return True
    if 0xF900 <= cp <= 0xFAFF:
        return True
    return False


def oracle_words_cjk(text: str) -> tuple[int, int]:
    words = 0
    cjk = 0
    in_word = False
    for ch in text:
        if _oracle_is_cjk(ch):
            cjk += 1
            in_word = False
        elif ch.isspace():
            in_word = False
        else:
            if not in_word:
                words += 1
            in_word = True
    return words, cjk


# ---------------------------------------------------------------------------
# Event-by-event timeline simulator.
#
# steps: list of (step_index, [symbolic sources]) in display order
# segments: list of (segment_index, unit, duration) where unit is a step
#   index or the string "premise"; order within a unit = list order
# clips: list of (clip_index, first_target_step, duration_or_None)
# params: dict with base, per_glyph, min, max, transition


def simulate_timeline(steps, segments, clips, params):
    events = []
    step_windows = {}
    segment_windows = {}
    clip_windows = []

    units = []
    if any(unit == "premise" for _, unit, _ in segments):
        units.append("premise")
    units.extend(idx for idx, _ in steps)

    clock = 0.0
    first = True
    for unit in units:
        if not first:
            events.append(("transition", unit, clock, params["transition"]))
            clock += params["transition"]
        first = False

        if unit == "premise":
            srcs = []
        else:
            srcs = next(s for i, s in steps if i == unit)
        anim = params["base"] + params["per_glyph"] * oracle_density(srcs)
        if anim < params["min"]:
            anim = params["min"]
        if anim > params["max"]:
            anim = params["max"]
        narr = 0.0
        for _i, u, d in segments:
            if u == unit:
                narr += d
        window = anim if anim > narr else narr
        for _ci, target, dur in clips:
            if target == unit and dur is not None and dur > window:
                window = dur

        start = clock
        events.append(("show_step", unit, start, anim))
        events.append(("wait", unit, start + anim, window - anim))

        cursor = start
        for i, u, d in segments:
            if u == unit:
                segment_windows[i] = (cursor, cursor + d)
                cursor += d

        for ci, target, dur in clips:
            if target == unit:
                length = window if dur is None else dur
                events.append(("play_clip", ci, start, length))
                clip_windows.append((ci, unit, start, start + length))

        step_windows[unit] = (start, start + window)
        clock = start + window

    return {
        "events": events,
        "total": clock,
        "step_windows": step_windows,
        "segment_windows": segment_windows,
        "clip_windows": clip_windows,
    }


def plan_as_tuples(plan):
    """Normalize a RenderPlan to the simulator's tuple shape for comparison."""
    def unit_of(kind, subject):
        if kind == "play_clip":
            return subject
        return "premise" if subject == PREMISE else subject

    events = [(e.kind, unit_of(e.kind, e.subject), e.start_s, e.duration_s) for e in plan.events]
    step_windows = {
        ("premise" if k == PREMISE else k): (w.start_s, w.end_s)
        for k, w in plan.step_windows.items()
    }
    segment_windows = {k: (w.start_s, w.end_s) for k, w in plan.segment_windows.items()}
    clip_windows = [
        (t.clip_index, ("premise" if t.step_index == PREMISE else t.step_index),
         t.window.start_s, t.window.end_s)
        for t in plan.clip_triggers
    ]
    return {
        "events": events,
        "total": plan.total_duration_s,
        "step_windows": step_windows,
        "segment_windows": segment_windows,
        "clip_windows": clip_windows,
    }


def assert_timeline_equal(actual, expected, tol=1e-9):
    assert len(actual["events"]) == len(expected["events"]), (
        f"event count {len(actual['events'])} != {len(expected['events'])}"
    )
    for got, want in zip(actual["events"], expected["events"]):
        assert got[0] == want[0] and got[1] == want[1], f"{got} vs {want}"
        assert abs(got[2] - want[2]) <= tol, f"start {got} vs {want}"
        assert abs(got[3] - want[3]) <= tol, f"duration {got} vs {want}"
    assert abs(actual["total"] - expected["total"]) <= tol
    assert actual["step_windows"].keys() == expected["step_windows"].keys()
    for k in expected["step_windows"]:
        ga, gb = actual["step_windows"][k]
        wa, wb = expected["step_windows"][k]
        assert abs(ga - wa) <= tol and abs(gb - wb) <= tol, f"step window {k}"
    assert actual["segment_windows"].keys() == expected["segment_windows"].keys()
    for k in expected["segment_windows"]:
        ga, gb = actual["segment_windows"][k]
        wa, wb = expected["segment_windows"][k]
        assert abs(ga - wa) <= tol and abs(gb - wb) <= tol, f"segment window {k}"
    assert len(actual["clip_windows"]) == len(expected["clip_windows"])
    for got, want in zip(actual["clip_windows"], expected["clip_windows"]):
        assert got[0] == want[0] and got[1] == want[1]
        assert abs(got[2] - want[2]) <= tol and abs(got[3] - want[3]) <= tol


def assert_backbone_tiles(plan, tol=1e-9):
    """The non-overlay events must cover [0, total] with exact abutment."""
    backbone = [e for e in plan.events if e.kind != "play_clip"]
    assert backbone, "empty plan"
    assert abs(backbone[0].start_s) <= tol
    for a, b in zip(backbone, backbone[1:]):
        assert abs(a.end_s - b.start_s) <= tol, f"gap between {a} and {b}"
    assert abs(backbone[-1].end_s - plan.total_duration_s) <= tol
    covered = sum(e.duration_s for e in backbone)
    assert abs(covered - plan.total_duration_s) <= tol


def params_of(model) -> dict:
    return {
        "base": model.base_display_s,
        "per_glyph": model.per_glyph_s,
        "min": model.min_step_s,
        "max": model.max_step_s,
        "transition": model.transition_s,
    }


def timeline_inputs_from_evs(evs, clip_durations=None):
    """Flatten an EVS into the simulator's plain-tuple inputs."""
    clip_durations = clip_durations or {}
    steps = [(s.index, [e.source for e in s.symbolic_elements]) for s in evs.p_text.steps]
    segments = [
        (seg.index, "premise" if seg.step_index == PREMISE else seg.step_index, seg.est_duration_s)
        for seg in evs.narration.segments
    ]
    clips = [
        (ci, asset.target_steps[0], clip_durations.get(ci))
        for ci, asset in enumerate(evs.p_illus or ())
        if asset.target_steps
    ]
    return steps, segments, clips


# ---------------------------------------------------------------------------
# Random valid EVS factory.

_VOCAB = (
    "the total number of boats students share apples count groups first then we "
    "each large small holds discrepancy difference per remaining answer check final"
).split()

_SOURCES = (
    "x=1",
    "10\\times4=40",
    "46-40=6",
    "6-4=2",
    "a+b",
    "\\frac{46}{10}",
    "l+s=10",
    "6l+4s=46",
)


def _words(rng: random.Random, lo=2, hi=10, cjk=False) -> str:
    n = rng.randint(lo, hi)
    parts = [rng.choice(_VOCAB) for _ in range(n)]
    if cjk and rng.random() < 0.5:
        parts.insert(rng.randrange(len(parts) + 1), "大船学生"[: rng.randint(1, 4)])
    return " ".join(parts)


def random_problem(rng: random.Random, n: int = 0) -> Problem:
    return Problem(
        id=f"prob-{n:04d}",
        subject=rng.choice(("mathematics", "language-arts", "other")),
        grade_band=rng.choice(("elementary", "middle", "other")),
        statement=_words(rng, 4, 12),
        figures=tuple(f"fig://{n}/{i}" for i in range(rng.randint(0, 2))),
    )


def random_evs(
    rng: random.Random,
    n: int = 0,
    max_steps: int = 6,
    max_segments: int = 12,
    with_illustration: bool | None = None,
    with_alignment: bool | None = None,
) -> EVS:
    problem = random_problem(rng, n)
    n_steps = rng.randint(1, max_steps)
    steps = []
    for i in range(n_steps):
        n_elems = rng.randint(0, 3)
        elems = tuple(
            SymbolicElement(
                source=rng.choice(_SOURCES),
                kind=rng.choice(("equation", "expression", "shape", "label")),
            )
            for _ in range(n_elems)
        )
        steps.append(
            SolutionStep(
                index=i,
                statement=_words(rng, 3, 9, cjk=True),
                symbolic_elements=elems,
                rationale=_words(rng, 0, 4) if rng.random() < 0.5 else "",
            )
        )
    p_text = PedagogicalText(
        premise=_words(rng, 3, 8),
        steps=tuple(steps),
        final_answer=_words(rng, 2, 6),
    )

    # Segments: optional premise run first, then ≥1 consecutive run per step.
    budget = max(0, max_segments - n_steps)
    units: list[int] = []
    if rng.random() < 0.6 and budget > 0:
        units.append(PREMISE)
        budget -= 1
    for i in range(n_steps):
        units.append(i)
    extra_positions = [k for k in range(len(units))]
    while budget > 0 and rng.random() < 0.45:
        pos = rng.choice(extra_positions)
        units.insert(units.index(units[pos]), units[pos])
        budget -= 1
    segments = tuple(
        NarrationSegment(
            index=k,
            text=_words(rng, 2, 12, cjk=True),
            step_index=u,
            est_duration_s=rng.choice((0.0, 0.75, 1.5, 2.25)) + rng.random() * 6.0,
        )
        for k, u in enumerate(units)
    )
    narration = Narration(segments=segments)

    if with_illustration is None:
        with_illustration = rng.random() < 0.5
    p_illus = None
    if with_illustration:
        n_assets = rng.randint(1, 2)
        assets = []
        for a in range(n_assets):
            first = rng.randrange(n_steps)
            targets = tuple(sorted(set([first] + [rng.randrange(n_steps) for _ in range(rng.randint(0, 2))])))
            assets.append(
                IllustrationAsset(
                    code=f"class Scene{a}(Scene):\n    def construct(self):\n        self.play(Write(Tex('s{a}')))\n",
                    asset_declarations=(f"scene-{a}",),
                    target_steps=targets,
                )
            )
        p_illus = tuple(assets)

    if with_alignment is None:
        with_alignment = rng.random() < 0.5
    alignment = None
    if with_alignment:
        alignment = build_alignment(p_text, narration, p_illus)

    return EVS(
        problem=problem,
        p_text=p_text,
        narration=narration,
        p_illus=p_illus,
        alignment=alignment,
    )
