"""The heterogeneous quality gate: semantic, tool, and rule critique.

Each validator returns a CritiqueVerdict; evaluate_gate takes their logical
conjunction and merges findings into one Feedback in a fixed order
(semantic, then tool, then rule) so regeneration prompts are deterministic.
Warn-severity findings inform but never block.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .evs import IllustrationAsset, Narration, PedagogicalText
from .prompts import JUDGE_TEMPLATE, PromptTemplate

log = logging.getLogger(__name__)

VALIDATOR_ORDER = ("semantic", "tool", "rule")

# Which validators gate each stage's artifact.
STAGE_VALIDATORS = {
    "p_text": ("semantic", "rule"),
    "p_illus": ("semantic", "tool", "rule"),
    "narration": ("semantic", "rule"),
}


@dataclass(frozen=True)
class CritiqueFinding:
    severity: str  # "error" | "warn"
    message: str
    location: str


@dataclass(frozen=True)
class CritiqueVerdict:
    validator: str  # "semantic" | "tool" | "rule"
    passed: bool
    findings: tuple[CritiqueFinding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(self.findings))
        if self.passed and any(f.severity == "error" for f in self.findings):
            raise ValueError("a passing verdict cannot carry error findings")


def verdict_from_findings(validator: str, findings: list[CritiqueFinding]) -> CritiqueVerdict:
    passed = not any(f.severity == "error" for f in findings)
    return CritiqueVerdict(validator=validator, passed=passed, findings=tuple(findings))


@dataclass(frozen=True)
class Feedback:
    source: str  # "semantic" | "tool" | "rule" | "merged"
    findings: tuple[CritiqueFinding, ...]
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(self.findings))


@dataclass(frozen=True)
class Rubric:
    rubric_id: str
    criteria: tuple[tuple[str, str], ...]  # (criterion text, pass/fail guidance)
    exemplars: tuple[tuple[str, str, str], ...] = ()  # (excerpt, verdict, justification)
    judge_template: PromptTemplate = JUDGE_TEMPLATE

    def __post_init__(self):
        object.__setattr__(self, "criteria", tuple(tuple(c) for c in self.criteria))
        object.__setattr__(self, "exemplars", tuple(tuple(e) for e in self.exemplars))
        if not self.criteria:
            raise ValueError(f"rubric {self.rubric_id} has no criteria")


# ---------------------------------------------------------------------------
# Artifact views: rules and judges address artifact regions by selector.

def artifact_regions(artifact) -> dict:
    """Break an artifact into named text regions for selectors.

    Returns a map selector → list of (location, text).  Accepted artifacts:
    PedagogicalText, IllustrationAsset (or list thereof), Narration, or a
    bare code string.
    """
    regions: dict[str, list[tuple[str, str]]] = {}
    if isinstance(artifact, PedagogicalText):
        regions["premise"] = [("premise", artifact.premise)]
        regions["steps"] = [
            (
                f"steps[{s.index}]",
                " ".join(
                    [s.statement, s.rationale, *(e.source for e in s.symbolic_elements)]
                ).strip(),
            )
            for s in artifact.steps
        ]
        regions["final_answer"] = [("final_answer", artifact.final_answer)]
    elif isinstance(artifact, Narration):
        regions["segments"] = [
            (f"segments[{seg.index}]", seg.text) for seg in artifact.segments
        ]
    elif isinstance(artifact, IllustrationAsset):
        regions["code"] = [("code", artifact.code)]
    elif isinstance(artifact, (list, tuple)) and all(
        isinstance(a, IllustrationAsset) for a in artifact
    ):
        regions["code"] = [(f"assets[{i}].code", a.code) for i, a in enumerate(artifact)]
    elif isinstance(artifact, str):
        regions["code"] = [("code", artifact)]
    else:
        raise TypeError(f"cannot build critique regions for {type(artifact).__name__}")
    regions["all"] = [pair for key in sorted(regions) for pair in regions[key]]
    return regions


def artifact_to_text(artifact) -> str:
    """Flatten an artifact into the prose the judge reads."""
    regions = artifact_regions(artifact)
    lines = []
    for loc, text in regions["all"]:
        lines.append(f"[{loc}]\n{text}")
    return "\n\n".join(lines)


# ---------------------------------------------------------------------------
# Rule-based critique.

RULE_KINDS = (
    "keyword_present",
    "keyword_absent",
    "pattern_match",
    "function_must_use",
    "function_forbidden",
    "segment_count_range",
    "length_bound",
)


@dataclass(frozen=True)
class Rule:
    """One declarative structural check.

    kind selects the predicate; the remaining fields parameterize it.  A
    failing rule yields one finding with this rule's severity.
    """

    kind: str
    keyword: str = ""
    pattern: str = ""
    function: str = ""
    selector: str = "all"
    min_count: int = 0
    max_count: int = 0
    max_chars: int = 0
    severity: str = "error"
    message: str = ""

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind: {self.kind!r}")
        if self.severity not in ("error", "warn"):
            raise ValueError(f"unknown severity: {self.severity!r}")

    def evaluate(self, regions: dict) -> list[CritiqueFinding]:
        selector = self.selector
        if self.kind in ("function_must_use", "function_forbidden") and selector == "all":
            selector = "code"
        selected = regions.get(selector, [])
        joined = "\n".join(text for _, text in selected)

        def fail(default_msg: str, location: str) -> list[CritiqueFinding]:
            return [CritiqueFinding(self.severity, self.message or default_msg, location)]

        if self.kind == "keyword_present":
            if self.keyword not in joined:
                return fail(f"required keyword missing: {self.keyword!r}", selector)
            return []
        if self.kind == "keyword_absent":
            out = []
            for loc, text in selected:
                if self.keyword in text:
                    out.extend(fail(f"forbidden keyword present: {self.keyword!r}", loc))
            return out
        if self.kind == "pattern_match":
            if re.search(self.pattern, joined) is None:
                return fail(f"required pattern not found: {self.pattern!r}", selector)
            return []
        if self.kind == "function_must_use":
            if re.search(rf"\b{re.escape(self.function)}\s*\(", joined) is None:
                return fail(f"required function not used: {self.function}", selector)
            return []
        if self.kind == "function_forbidden":
            out = []
            for loc, text in selected:
                if re.search(rf"\b{re.escape(self.function)}\s*\(", text):
                    out.extend(fail(f"forbidden function used: {self.function}", loc))
            return out
        if self.kind == "segment_count_range":
            count = len(regions.get("segments", []))
            if not (self.min_count <= count <= self.max_count):
                return fail(
                    f"segment count {count} outside [{self.min_count}, {self.max_count}]",
                    "segments",
                )
            return []
        if self.kind == "length_bound":
            out = []
            for loc, text in selected:
                if len(text) > self.max_chars:
                    out.extend(
                        fail(f"region exceeds {self.max_chars} characters ({len(text)})", loc)
                    )
            return out
        raise AssertionError(self.kind)

    @classmethod
    def from_dict(cls, d: dict) -> "Rule":
        return cls(
            kind=str(d["kind"]),
            keyword=str(d.get("keyword", "")),
            pattern=str(d.get("pattern", "")),
            function=str(d.get("function", "")),
            selector=str(d.get("selector", "all")),
            min_count=int(d.get("min_count", 0)),
            max_count=int(d.get("max_count", 0)),
            max_chars=int(d.get("max_chars", 0)),
            severity=str(d.get("severity", "error")),
            message=str(d.get("message", "")),
        )


def critique_rule(artifact, rules: list[Rule]) -> CritiqueVerdict:
    """Evaluate every rule (no short-circuit); findings come in rule order."""
    regions = artifact_regions(artifact)
    findings: list[CritiqueFinding] = []
    for rule in rules:
        findings.extend(rule.evaluate(regions))
    return verdict_from_findings("rule", findings)


# ---------------------------------------------------------------------------
# Tool-based critique.

def critique_tool(code: str, executor, timeout_s: float = 30.0) -> CritiqueVerdict:
    """Run illustration code through the executor and map its outcome.

    Any executor failure becomes a fail verdict — the gate must always
    answer, never hang or crash on hostile generated code.
    """
    try:
        result = executor.run(code, mode="check", timeout_s=timeout_s)
    except Exception as exc:  # noqa: BLE001 — gate totality over adapter faults
        return CritiqueVerdict(
            "tool",
            False,
            (CritiqueFinding("error", f"executor unavailable: {exc}", "code"),),
        )
    if result.status == "ok":
        findings = tuple(
            CritiqueFinding("warn", d, "code") for d in result.diagnostics if d
        )
        return CritiqueVerdict("tool", True, findings)
    findings = [
        CritiqueFinding("error", f"execution {result.status}", "code"),
    ]
    findings.extend(CritiqueFinding("error", d, "code") for d in result.diagnostics if d)
    return CritiqueVerdict("tool", False, tuple(findings))


# ---------------------------------------------------------------------------
# Semantic critique.

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def extract_json_block(text: str):
    """Parse the first fenced JSON block (or the whole text as JSON)."""
    m = _FENCE.search(text)
    candidate = m.group(1) if m else text
    return json.loads(candidate)


def build_judge_prompt(artifact, rubric: Rubric) -> str:
    lines = ["Criteria:"]
    for i, (criterion, guidance) in enumerate(rubric.criteria):
        entry = f"{i + 1}. {criterion}"
        if guidance:
            entry += f" ({guidance})"
        lines.append(entry)
    if rubric.exemplars:
        lines.append("")
        lines.append("Calibration examples:")
        for excerpt, verdict, justification in rubric.exemplars:
            lines.append(f"- artifact: {excerpt}\n  verdict: {verdict} — {justification}")
    lines.append("")
    lines.append("Artifact under review:")
    lines.append(artifact_to_text(artifact))
    return rubric.judge_template.render("\n".join(lines))


def critique_semantic(artifact, rubric: Rubric, transport) -> CritiqueVerdict:
    """Ask the judge to grade the artifact against the rubric's criteria.

    The judge answers per-criterion; overall pass is their conjunction.
    Output that cannot be parsed is itself a failure — an unreadable judge
    must not silently wave artifacts through.
    """
    prompt = build_judge_prompt(artifact, rubric)
    response = transport.complete(prompt)
    try:
        doc = extract_json_block(response)
        if not isinstance(doc, dict):
            raise ValueError("judge document is not an object")
        if "all_pass" in doc:
            if bool(doc["all_pass"]):
                return CritiqueVerdict("semantic", True, ())
            return CritiqueVerdict(
                "semantic",
                False,
                (CritiqueFinding("error", "judge rejected the artifact", "all"),),
            )
        entries = doc["criteria"]
        if not isinstance(entries, list) or len(entries) != len(rubric.criteria):
            raise ValueError(
                f"expected {len(rubric.criteria)} criterion verdicts, got "
                f"{len(entries) if isinstance(entries, list) else type(entries).__name__}"
            )
        findings = []
        for i, entry in enumerate(entries):
            passed = bool(entry["pass"])
            if not passed:
                criterion = rubric.criteria[i][0]
                reason = str(entry.get("reason", "")).strip()
                msg = f"criterion failed: {criterion}"
                if reason:
                    msg += f" — {reason}"
                findings.append(CritiqueFinding("error", msg, f"criteria[{i}]"))
        return verdict_from_findings("semantic", findings)
    except (ValueError, KeyError, TypeError) as exc:
        log.debug("judge output unparseable: %s", exc)
        return CritiqueVerdict(
            "semantic",
            False,
            (CritiqueFinding("error", "judge output unparseable", "all"),),
        )


# ---------------------------------------------------------------------------
# Gate conjunction and feedback merge.

def evaluate_gate(verdicts: list[CritiqueVerdict]) -> tuple[bool, Feedback]:
    """Conjoin verdicts and merge findings semantic → tool → rule.

    Findings are deduplicated by (message, location), keeping the first
    occurrence in merge order.
    """
    if not verdicts:
        raise ValueError("evaluate_gate requires at least one verdict")
    seen_validators = set()
    for v in verdicts:
        if v.validator not in VALIDATOR_ORDER:
            raise ValueError(f"unknown validator: {v.validator!r}")
        if v.validator in seen_validators:
            raise ValueError(f"duplicate verdict for validator {v.validator!r}")
        seen_validators.add(v.validator)

    passed = all(v.passed for v in verdicts)
    ordered = sorted(verdicts, key=lambda v: VALIDATOR_ORDER.index(v.validator))
    merged: list[CritiqueFinding] = []
    seen: set[tuple[str, str]] = set()
    for v in ordered:
        for f in v.findings:
            key = (f.message, f.location)
            if key in seen:
                continue
            seen.add(key)
            merged.append(f)
    return passed, Feedback(source="merged", findings=tuple(merged))


# ---------------------------------------------------------------------------
# Catalogue loading.

def _data_root() -> Path:
    return Path(str(resources.files("evskit").joinpath("data")))


def load_rule_profile(name: str, search_dir: str | Path | None = None) -> list[Rule]:
    """Load ``rules/<name>.json`` from the package catalogue or a directory."""
    base = Path(search_dir) if search_dir else _data_root() / "rules"
    path = base / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no rule profile {name!r} at {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    return [Rule.from_dict(d) for d in doc["rules"]]


def load_rubric(name: str, search_dir: str | Path | None = None) -> Rubric:
    """Load ``rubrics/<name>.json`` from the package catalogue or a directory."""
    base = Path(search_dir) if search_dir else _data_root() / "rubrics"
    path = base / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no rubric {name!r} at {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    return Rubric(
        rubric_id=str(doc["rubric_id"]),
        criteria=tuple((str(c["text"]), str(c.get("guidance", ""))) for c in doc["criteria"]),
        exemplars=tuple(
            (str(e["excerpt"]), str(e["verdict"]), str(e.get("justification", "")))
            for e in doc.get("exemplars", ())
        ),
    )
