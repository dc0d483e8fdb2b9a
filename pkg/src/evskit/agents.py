"""The three working agents: solver, illustrator, narrator.

Each agent renders a prompt (embedding critique feedback verbatim on
regeneration), calls the transport, and parses the model's single fenced
JSON answer into typed artifacts.  Anything unparseable raises ParseError
with the raw response attached; the orchestrator turns that into a
rule-style gate failure rather than crashing the pipeline.
"""

from __future__ import annotations

import json
import re

from .critique import extract_json_block
from .evs import (
    IllustrationAsset,
    Narration,
    NarrationSegment,
    PedagogicalText,
    Problem,
    SolutionStep,
    SymbolicElement,
    PREMISE,
)
from .prompts import (
    ILLUSTRATOR_TEMPLATE,
    NARRATOR_TEMPLATE,
    SOLVER_TEMPLATE,
    PromptTemplate,
)


class ParseError(ValueError):
    """Agent output did not match the required structured format."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


# Markup control sequences that display as a single glyph on screen.
MATH_SYMBOLS = {
    "times": "×",
    "div": "÷",
    "cdot": "·",
    "le": "≤",
    "leq": "≤",
    "ge": "≥",
    "geq": "≥",
    "ne": "≠",
    "neq": "≠",
    "pm": "±",
    "rightarrow": "→",
    "to": "→",
}

_MATH_SPAN = re.compile(r"\$([^$]+)\$")
_CONTROL = re.compile(r"\\([a-zA-Z]+)")


def markup_to_display(source: str) -> str:
    """Render a math markup span as tight on-screen text.

    Control sequences map to their glyphs, braces vanish, spaces collapse,
    and the ASCII hyphen becomes a true minus sign.
    """
    text = _CONTROL.sub(lambda m: MATH_SYMBOLS.get(m.group(1), m.group(1)), source)
    text = text.replace("{", "").replace("}", "")
    text = re.sub(r"\s+", "", text)
    text = text.replace("-", "−")
    return text


def statement_with_display_math(raw: str) -> tuple[str, tuple[SymbolicElement, ...]]:
    """Split a statement into display text plus its extracted markup spans."""
    elements = []
    for span in _MATH_SPAN.findall(raw):
        span = span.strip()
        kind = "equation" if "=" in span else "expression"
        elements.append(SymbolicElement(source=span, kind=kind))
    display = _MATH_SPAN.sub(lambda m: markup_to_display(m.group(1)), raw)
    return display, tuple(elements)


def _problem_brief(q: Problem) -> str:
    lines = [
        f"Subject: {q.subject}",
        f"Grade band: {q.grade_band}",
        f"Problem: {q.statement}",
    ]
    if q.figures:
        lines.append("Figures (references only): " + ", ".join(q.figures))
    return "\n".join(lines)


def _steps_brief(p_text: PedagogicalText) -> str:
    lines = [f"Premise: {p_text.premise}"]
    for step in p_text.steps:
        lines.append(f"Step {step.index}: {step.statement}")
    lines.append(f"Final answer: {p_text.final_answer}")
    return "\n".join(lines)


def _parse_json(response: str) -> dict:
    if not response.strip():
        raise ParseError("empty response", raw=response)
    try:
        doc = extract_json_block(response)
    except json.JSONDecodeError as exc:
        raise ParseError(f"no parseable JSON block: {exc}", raw=response) from exc
    if not isinstance(doc, dict):
        raise ParseError("JSON block is not an object", raw=response)
    return doc


def solve(
    q: Problem,
    feedback=None,
    transport=None,
    template: PromptTemplate = SOLVER_TEMPLATE,
) -> PedagogicalText:
    """Produce structured solution steps for the problem."""
    task = "Write the worked solution for this problem.\n\n" + _problem_brief(q)
    response = transport.complete(template.render(task, feedback))
    doc = _parse_json(response)
    try:
        raw_steps = doc["steps"]
        premise = str(doc["premise"])
        final_answer = str(doc["final_answer"])
    except KeyError as exc:
        raise ParseError(f"solution JSON missing key: {exc}", raw=response) from exc
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ParseError("solution has no steps", raw=response)
    steps = []
    for i, entry in enumerate(raw_steps):
        if not isinstance(entry, dict) or "statement" not in entry:
            raise ParseError(f"step {i} has no statement", raw=response)
        display, elements = statement_with_display_math(str(entry["statement"]))
        steps.append(
            SolutionStep(
                index=i,
                statement=display,
                symbolic_elements=elements,
                rationale=str(entry.get("rationale", "")),
            )
        )
    return PedagogicalText(premise=premise, steps=tuple(steps), final_answer=final_answer)


_PY_FENCE = re.compile(r"```python\s*\n(.*?)```", re.DOTALL)


def illustrate(
    q: Problem,
    p_text: PedagogicalText,
    feedback=None,
    transport=None,
    template: PromptTemplate = ILLUSTRATOR_TEMPLATE,
    required_primitives: tuple[str, ...] = ("Write", "Create"),
) -> tuple[IllustrationAsset, ...]:
    """Produce executable scene code for the validated solution."""
    task = (
        "Write scene code illustrating this solution.\n\n"
        + _problem_brief(q)
        + "\n\n"
        + _steps_brief(p_text)
    )
    response = transport.complete(template.render(task, feedback))
    doc = _parse_json(response)
    entries = doc.get("assets")
    if not isinstance(entries, list) or not entries:
        raise ParseError("asset header missing or empty", raw=response)
    code_blocks = _PY_FENCE.findall(response)
    if len(code_blocks) != len(entries):
        raise ParseError(
            f"asset header lists {len(entries)} assets but found {len(code_blocks)} code blocks",
            raw=response,
        )
    assets = []
    for entry, code in zip(entries, code_blocks):
        if not isinstance(entry, dict):
            raise ParseError("asset header entry is not an object", raw=response)
        try:
            target_steps = tuple(int(s) for s in entry.get("target_steps", ()))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad target_steps: {exc}", raw=response) from exc
        declares = tuple(str(d) for d in entry.get("declares", ()))
        assets.append(
            IllustrationAsset(
                code=code.strip() + "\n",
                asset_declarations=declares,
                target_steps=target_steps,
                required_primitives=tuple(required_primitives),
            )
        )
    return tuple(assets)


def narrate(
    q: Problem,
    p_text: PedagogicalText,
    p_illus=None,
    feedback=None,
    transport=None,
    template: PromptTemplate = NARRATOR_TEMPLATE,
) -> Narration:
    """Produce step-tagged spoken segments for the validated solution."""
    task = "Write the narration for this video.\n\n" + _problem_brief(q) + "\n\n" + _steps_brief(p_text)
    if p_illus:
        shown = ", ".join(
            d for asset in p_illus for d in asset.asset_declarations
        )
        task += f"\n\nAnimated visuals on screen: {shown or 'one scene per step'}."
    response = transport.complete(template.render(task, feedback))
    doc = _parse_json(response)
    entries = doc.get("segments")
    if not isinstance(entries, list) or not entries:
        raise ParseError("narration JSON missing segments", raw=response)
    segments = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "text" not in entry:
            raise ParseError(f"segment {i} has no text", raw=response)
        if "step" not in entry:
            raise ParseError(f"segment {i} has no step tag", raw=response)
        tag = entry["step"]
        if tag == "premise":
            step_index = PREMISE
        else:
            try:
                step_index = int(tag)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"segment {i} has bad step tag: {tag!r}", raw=response) from exc
        segments.append(
            NarrationSegment(index=i, text=str(entry["text"]), step_index=step_index)
        )
    return Narration(segments=tuple(segments))
