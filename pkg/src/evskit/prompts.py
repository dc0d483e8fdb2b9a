"""Prompt templates for the working agents, the planner, and the judge.

Templates are plain data: a role preamble, optional few-shot exemplars, and
output-format instructions.  Rendering binds the task description and, on
regeneration, embeds every critique finding verbatim so the model sees
exactly what the gate rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    role_preamble: str
    output_format_instructions: str
    few_shot_exemplars: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "few_shot_exemplars", tuple(self.few_shot_exemplars))

    def render(self, task: str, feedback=None) -> str:
        parts = [self.role_preamble.strip()]
        for ex_input, ex_output in self.few_shot_exemplars:
            parts.append(f"Example input:\n{ex_input}\nExample output:\n{ex_output}")
        parts.append(task.strip())
        if feedback is not None and feedback.findings:
            lines = ["Your previous attempt was rejected. Address every point below:"]
            for finding in feedback.findings:
                lines.append(f"- [{finding.severity}] {finding.location}: {finding.message}")
            parts.append("\n".join(lines))
        parts.append(self.output_format_instructions.strip())
        rendered = "\n\n".join(p for p in parts if p)
        if not rendered:
            raise ValueError(f"template {self.template_id} rendered empty text")
        return rendered


SOLVER_TEMPLATE = PromptTemplate(
    template_id="solver-v1",
    role_preamble=(
        "You are a careful teacher writing a worked solution for a student video. "
        "Break the solution into small, logically atomic steps. Put every formula "
        "inside $...$ markup spans. Keep each step to one idea."
    ),
    output_format_instructions=(
        "Answer with a single fenced JSON block and nothing else:\n"
        "```json\n"
        "{\n"
        '  "premise": "<restatement of the given facts>",\n'
        '  "steps": [{"statement": "<one step, math in $...$>", "rationale": "<why>"}],\n'
        '  "final_answer": "<the conclusion in one sentence>"\n'
        "}\n"
        "```"
    ),
)

ILLUSTRATOR_TEMPLATE = PromptTemplate(
    template_id="illustrator-v1",
    role_preamble=(
        "You are an animation programmer. Write short scene code that visualizes "
        "the given solution steps, using Write(Tex(...)) for formulas and "
        "Create(...) for shapes. One scene class per asset."
    ),
    output_format_instructions=(
        "Answer with exactly one fenced JSON header listing the assets, followed by "
        "one fenced python block per asset, in the same order:\n"
        "```json\n"
        '{"assets": [{"name": "<SceneName>", "declares": ["<asset>"], "target_steps": [0]}]}\n'
        "```\n"
        "```python\n"
        "<scene code>\n"
        "```"
    ),
)

NARRATOR_TEMPLATE = PromptTemplate(
    template_id="narrator-v1",
    role_preamble=(
        "You are a narrator for an educational video. Write spoken text for the "
        "premise and for each solution step, in order. Tag every segment with the "
        "step it verbalizes; use \"premise\" for the opening."
    ),
    output_format_instructions=(
        "Answer with a single fenced JSON block:\n"
        "```json\n"
        '{"segments": [{"step": "premise", "text": "<spoken text>"}, {"step": 0, "text": "..."}]}\n'
        "```"
    ),
)

PLANNER_TEMPLATE = PromptTemplate(
    template_id="planner-v1",
    role_preamble=(
        "You are planning the production of one educational video. Decide whether "
        "an animated illustration would help this problem, and note any audience "
        "constraints (vocabulary, pacing) for the grade band."
    ),
    output_format_instructions=(
        "Answer with a single fenced JSON block:\n"
        "```json\n"
        '{"use_illustration": true, "rationale": "<why>", "audience_constraints": "<notes>"}\n'
        "```"
    ),
)

JUDGE_TEMPLATE = PromptTemplate(
    template_id="judge-v1",
    role_preamble=(
        "You are a strict reviewer. Judge the artifact against each numbered "
        "criterion independently. Fail a criterion only for a concrete defect."
    ),
    output_format_instructions=(
        "Answer with a single fenced JSON block:\n"
        "```json\n"
        '{"criteria": [{"pass": true, "reason": "<short justification>"}]}\n'
        "```\n"
        "with one entry per criterion, in the order given."
    ),
)

DEFAULT_TEMPLATES = {
    t.template_id: t
    for t in (
        SOLVER_TEMPLATE,
        ILLUSTRATOR_TEMPLATE,
        NARRATOR_TEMPLATE,
        PLANNER_TEMPLATE,
        JUDGE_TEMPLATE,
    )
}
