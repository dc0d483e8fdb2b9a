#!/usr/bin/env python3
"""Regenerate the committed replay fixtures under tests/fixtures/.

Each fixture directory is a set of ``<prompt-digest>.txt`` files produced by
recording one scripted pipeline run per problem.  Tests (and the CLI) replay
them byte-for-byte, so the suite stays deterministic and fully offline.

Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from evskit.evs import Problem  # noqa: E402
from evskit.llm import CannedTransport, ScriptedTransport  # noqa: E402
from evskit.orchestrator import PipelineConfig, produce_evs  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"

ACCEPT = CannedTransport.ALL_PASS


def fenced(doc) -> str:
    return "```json\n" + json.dumps(doc, indent=2) + "\n```\n"


def solution_response(premise, steps, final_answer) -> str:
    return fenced(
        {
            "premise": premise,
            "steps": [{"statement": s, "rationale": r} for s, r in steps],
            "final_answer": final_answer,
        }
    )


def illustration_response(name, declares, target_steps, body) -> str:
    header = fenced({"assets": [{"name": name, "declares": declares, "target_steps": target_steps}]})
    return header + "\n```python\n" + body + "```\n"


def narration_response(segments) -> str:
    return fenced({"segments": [{"step": step, "text": text} for step, text in segments]})


# ---------------------------------------------------------------------------
# Problem content.


def boat_problem(total: int, suffix: str = "") -> Problem:
    return Problem(
        id=f"boats-{total}{suffix}",
        subject="mathematics",
        grade_band="elementary",
        statement=(
            f"A class of {total} students goes boating, taking 10 boats all filled up. "
            "Large boats hold 6 people, small boats hold 4. How many of each?"
        ),
    )


def boat_script(total: int) -> list:
    boats, large_cap, small_cap = 10, 6, 4
    all_small = small_cap * boats
    diff = total - all_small
    swap = large_cap - small_cap
    large = diff // swap
    small = boats - large
    assert large_cap * large + small_cap * small == total, "fixture arithmetic is wrong"

    solution = solution_response(
        premise=(
            f"There are {total} students in {boats} full boats; "
            f"large boats hold {large_cap}, small boats hold {small_cap}."
        ),
        steps=[
            (
                f"Assume all {boats} boats are small: ${boats}\\times{small_cap}={all_small}$ students fit.",
                "Try the extreme case first.",
            ),
            (
                f"The difference is ${total}-{all_small}={diff}$ students left over.",
                "Compare with the real total.",
            ),
            (
                f"Each large boat adds ${large_cap}-{small_cap}={swap}$ seats, "
                f"so ${diff}\\div{swap}={large}$ large boats.",
                "Swap small boats for large ones until everyone fits.",
            ),
        ],
        final_answer=f"There are {large} large boats and {small} small boats.",
    )

    scene = f"Boats{total}Scene"
    code = (
        f"class {scene}(Scene):\n"
        "    def construct(self):\n"
        f'        self.play(Write(Tex(r"{boats} \\times {small_cap} = {all_small}")))\n'
        "        row = VGroup(*[Circle() for _ in range(10)])\n"
        "        self.play(Create(row))\n"
        f'        self.play(Write(Tex(r"{total} - {all_small} = {diff}")))\n'
    )
    illustration = illustration_response(
        scene, ["boat row", "seat count"], [0, 1], code
    )

    narration = narration_response(
        [
            ("premise", f"{total} students set out in ten boats, and every seat is taken."),
            (0, "Start with a guess: suppose every boat is the small kind."),
            (0, f"Small boats hold four, so ten of them carry only {all_small} students."),
            (1, f"But {total} students came along, so {diff} of them still need seats."),
            (2, f"Swapping a small boat for a large one adds two seats, so {large} boats must be large."),
        ]
    )

    return [solution, ACCEPT, illustration, ACCEPT, narration, ACCEPT]


ESSAYS = [
    (
        "essay-tone",
        "Explain the difference between tone and mood in a short story.",
        "Tone and mood are related but distinct literary ideas.",
        [
            ("Tone is the narrator's attitude toward the subject.", "Definition first."),
            ("Mood is the feeling the text produces in the reader.", "Contrast with tone."),
        ],
        "Tone belongs to the speaker; mood belongs to the reader.",
        [
            ("premise", "Two words readers often mix up."),
            (0, "Tone is the attitude of the voice telling the story."),
            (1, "Mood is what the story makes you feel as you read."),
        ],
    ),
    (
        "essay-narrator",
        "Describe how a first-person narrator limits what the reader knows.",
        "A first-person narrator reports only what one character perceives.",
        [
            ("The reader sees events through a single set of eyes.", "Name the constraint."),
            ("Anything the narrator misses or hides stays unknown.", "Show the consequence."),
        ],
        "First person narrows the story to one character's knowledge and honesty.",
        [
            ("premise", "Who tells a story decides what we get to know."),
            (0, "With a first person narrator, we only see what that character sees."),
            (1, "Whatever the narrator misses, misreads, or conceals is lost to us too."),
        ],
    ),
    (
        "essay-simile",
        "What is the difference between a simile and a metaphor? Give one example of each.",
        "Both compare unlike things; the grammar of the comparison differs.",
        [
            ("A simile compares with the words like or as: brave as a lion.", "Define with example."),
            ("A metaphor asserts the comparison directly: the classroom was a zoo.", "Contrast form."),
        ],
        "A simile says something is like another thing; a metaphor says it is that thing.",
        [
            ("premise", "Two classic tools for comparison."),
            (0, "A simile keeps a little distance, comparing with like or as."),
            (1, "A metaphor removes the distance and calls one thing another."),
        ],
    ),
    (
        "essay-theme",
        "How is a story's theme different from its plot?",
        "Plot and theme answer different questions about the same story.",
        [
            ("Plot is the sequence of events: what happens and in what order.", "Define plot."),
            ("Theme is the underlying idea the events explore, such as courage or loss.", "Define theme."),
        ],
        "Plot is what happens; theme is what the story is about underneath.",
        [
            ("premise", "What happened, and what it meant."),
            (0, "The plot is the chain of events you could list on a timeline."),
            (1, "The theme is the idea those events keep circling back to."),
        ],
    ),
]


def essay_problem(pid: str, statement: str) -> Problem:
    return Problem(id=pid, subject="language-arts", grade_band="middle", statement=statement)


def essay_script(premise, steps, final_answer, segments) -> list:
    return [
        solution_response(premise, steps, final_answer),
        ACCEPT,
        narration_response(segments),
        ACCEPT,
    ]


# ---------------------------------------------------------------------------
# Recording.


def record(problem: Problem, responses: list, fixture_dir: Path):
    scripted = ScriptedTransport(responses)
    config = PipelineConfig(transport=scripted)
    produce_evs(problem, config)  # must succeed, or the fixtures are bad
    if len(scripted.exchanges) != len(responses):
        raise SystemExit(
            f"{problem.id}: scripted {len(responses)} turns but the pipeline used "
            f"{len(scripted.exchanges)}"
        )
    fixture_dir.mkdir(parents=True, exist_ok=True)
    scripted.dump_fixtures(fixture_dir)


def main() -> int:
    if FIXTURES.exists():
        shutil.rmtree(FIXTURES)

    boat_dir = FIXTURES / "boat"
    boat = boat_problem(46)
    record(boat, boat_script(46), boat_dir)
    (boat_dir / "problem.json").write_text(
        json.dumps(boat.to_dict(), indent=2) + "\n", encoding="utf-8"
    )

    batch_problems = FIXTURES / "batch" / "problems"
    batch_replay = FIXTURES / "batch" / "replay"
    batch_problems.mkdir(parents=True)

    problems = []
    for total in (42, 44, 46, 48):
        suffix = "b" if total == 46 else ""  # keep the id distinct from the solo fixture
        problems.append((boat_problem(total, suffix), boat_script(total)))
    for pid, statement, premise, steps, final_answer, segments in ESSAYS:
        problems.append(
            (essay_problem(pid, statement), essay_script(premise, steps, final_answer, segments))
        )

    for problem, responses in problems:
        record(problem, responses, batch_replay)
        (batch_problems / f"{problem.id}.json").write_text(
            json.dumps(problem.to_dict(), indent=2) + "\n", encoding="utf-8"
        )

    n_boat = len(list(boat_dir.glob("*.txt")))
    n_batch = len(list(batch_replay.glob("*.txt")))
    print(f"boat fixtures: {n_boat} responses + problem.json")
    print(f"batch fixtures: {len(problems)} problems, {n_batch} responses")
    return 0


if __name__ == "__main__":
    sys.exit(main())
