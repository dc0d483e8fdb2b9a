"""Command-line surface: generate, critique, compile, batch.

Exit codes are a closed contract: 0 success, 1 usage/config error,
2 pipeline or gate failure.  Offline modes (replay fixtures, stub judge,
stub executor) are the default; network-touching transports require an
explicit ``--live``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .adapters import StubExecutor, StubTTS
from .compiler import AssemblyError, ClipOverflow, ScheduleError, compile_evs, write_manifest
from .critique import (
    critique_rule,
    critique_semantic,
    critique_tool,
    evaluate_gate,
    load_rule_profile,
    load_rubric,
)
from .evs import (
    EVS,
    EVSFormatError,
    EVSValidationError,
    Narration,
    PedagogicalText,
    Problem,
    canonical_deserialize,
    canonical_serialize,
    validate_evs,
)
from .llm import CannedTransport, LiveTransport, ReplayTransport, TransportError
from .orchestrator import PipelineConfig, PipelineFailure, produce_evs

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2


class _Parser(argparse.ArgumentParser):
    # Usage problems are exit 1 in this tool, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


@dataclass(frozen=True)
class BatchEntry:
    problem_id: str
    status: str  # "succeeded" | "failed"
    stage: str = ""
    iterations: dict = None
    wall_time_s: float = 0.0
    manifest_path: str = ""
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "status": self.status,
            "stage": self.stage,
            "iterations": dict(self.iterations or {}),
            "wall_time_s": round(self.wall_time_s, 3),
            "manifest_path": self.manifest_path,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class BatchReport:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple(sorted(self.entries, key=lambda e: e.problem_id))
        )

    @property
    def succeeded(self) -> int:
        return sum(1 for e in self.entries if e.status == "succeeded")

    @property
    def failed(self) -> int:
        return len(self.entries) - self.succeeded

    def to_dict(self) -> dict:
        return {
            "total": len(self.entries),
            "succeeded": self.succeeded,
            "failed": self.failed,
            "entries": [e.to_dict() for e in self.entries],
        }


def _build_config(args) -> PipelineConfig:
    overrides = {}
    if args.replay:
        fixture_dir = Path(args.replay)
        if not fixture_dir.is_dir():
            raise UsageError(f"replay fixture directory not found: {fixture_dir}")
        transport = ReplayTransport(fixture_dir)
        overrides["transport"] = transport
        overrides["judge_transport"] = transport
    elif args.live:
        try:
            overrides["transport"] = LiveTransport()
        except TransportError as exc:
            raise UsageError(str(exc)) from exc
    if getattr(args, "max_iters", None):
        overrides["max_iterations"] = args.max_iters
    if args.config:
        config_path = Path(args.config)
        if not config_path.is_file():
            raise UsageError(f"config file not found: {config_path}")
        try:
            return PipelineConfig.from_file(config_path, **overrides)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad config file {config_path}: {exc}") from exc
    if "transport" not in overrides:
        overrides["transport"] = CannedTransport()
    return PipelineConfig(**overrides)


class UsageError(Exception):
    pass


def _load_problem(path: Path) -> Problem:
    if not path.is_file():
        raise UsageError(f"problem file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return Problem.from_dict(doc)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed problem file {path}: {exc}") from exc


def _print_failure(exc: PipelineFailure, problem_id: str, stream=None):
    stream = stream if stream is not None else sys.stderr
    outcome = exc.outcome
    kind = "internal error" if exc.internal else outcome.status
    print(f"pipeline failure: problem={problem_id} stage={outcome.stage} ({kind})", file=stream)
    print(f"  iterations used: {outcome.iterations_used}", file=stream)
    if outcome.final_feedback:
        for f in outcome.final_feedback.findings:
            print(f"  [{f.severity}] {f.location}: {f.message}", file=stream)


def _generate_one(problem: Problem, config: PipelineConfig, out_dir: Path, compile_mode: str | None):
    """Run one pipeline and write its artifacts; returns (evs_path, manifest_path)."""
    evs = produce_evs(problem, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    evs_path = out_dir / f"{problem.id}.evs.json"
    evs_path.write_bytes(canonical_serialize(evs))
    manifest_path = None
    if compile_mode:
        mode = "manifest_only" if compile_mode == "manifest" else "full"
        manifest = compile_evs(
            evs,
            mode=mode,
            model=config.duration_model,
            out_dir=out_dir / f"{problem.id}_media" if mode == "full" else None,
            tts=StubTTS(config.duration_model) if mode == "full" else None,
            executor=config.executor if mode == "full" else None,
            clip_overflow=config.clip_overflow,
        )
        manifest_path = out_dir / f"{problem.id}.manifest.json"
        write_manifest(manifest, manifest_path)
    return evs_path, manifest_path


def cmd_generate(args) -> int:
    try:
        problem = _load_problem(Path(args.problem))
        config = _build_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    try:
        evs_path, manifest_path = _generate_one(problem, config, out_dir, args.compile)
    except PipelineFailure as exc:
        _print_failure(exc, problem.id)
        return EXIT_PIPELINE
    except (ValueError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"evs: {evs_path}")
    if manifest_path:
        print(f"manifest: {manifest_path}")
    return EXIT_OK


def _load_artifact(path: Path):
    """Read a critique target: solution JSON, narration JSON, or code text."""
    if path.suffix == ".py":
        return path.read_text(encoding="utf-8")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "steps" in doc:
        return PedagogicalText.from_dict(doc)
    if isinstance(doc, dict) and "segments" in doc:
        return Narration.from_dict(doc)
    if isinstance(doc, dict) and "code" in doc:
        return str(doc["code"])
    raise UsageError(f"cannot tell what kind of artifact {path} holds")


def cmd_critique(args) -> int:
    try:
        artifact = _load_artifact(Path(args.artifact))
        config = _build_config(args)
        rules = load_rule_profile(args.profile)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    rubric_name = {
        "math_text": "math_solution",
        "language_arts_text": "math_solution",
        "math_code": "illustration",
        "narration": "narration",
    }.get(args.profile, "math_solution")
    rubric = load_rubric(rubric_name)

    verdicts = [critique_semantic(artifact, rubric, config.judge_transport)]
    if isinstance(artifact, str):
        verdicts.append(critique_tool(artifact, config.executor))
    verdicts.append(critique_rule(artifact, rules))
    passed, feedback = evaluate_gate(verdicts)
    for f in feedback.findings:
        print(f"[{f.severity}] {f.location}: {f.message}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_PIPELINE


def cmd_compile(args) -> int:
    path = Path(args.evs)
    if not path.is_file():
        print(f"error: EVS file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        evs = canonical_deserialize(path.read_bytes())
    except EVSFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    findings = validate_evs(evs)
    if findings:
        for f in findings:
            print(f"[error] {f.location}: {f.message}", file=sys.stderr)
        return EXIT_PIPELINE
    out_dir = Path(args.out)
    mode = "manifest_only" if (args.compile or "manifest") == "manifest" else "full"
    try:
        manifest = compile_evs(
            evs,
            mode=mode,
            out_dir=out_dir / f"{evs.problem.id}_media" if mode == "full" else None,
            tts=StubTTS() if mode == "full" else None,
            executor=StubExecutor() if mode == "full" else None,
        )
    except (EVSValidationError, AssemblyError, ClipOverflow, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / f"{evs.problem.id}.manifest.json"
    write_manifest(manifest, manifest_path)
    print(f"manifest: {manifest_path}")
    return EXIT_OK


def cmd_batch(args) -> int:
    in_dir = Path(args.problems)
    if not in_dir.is_dir():
        print(f"error: problem directory not found: {in_dir}", file=sys.stderr)
        return EXIT_USAGE
    problem_files = sorted(
        p
        for p in in_dir.glob("*.json")
        if not p.name.endswith(".evs.json") and not p.name.endswith(".manifest.json")
    )
    if not problem_files:
        print(f"error: no problem files in {in_dir}", file=sys.stderr)
        return EXIT_USAGE
    try:
        problems = [_load_problem(p) for p in problem_files]
        config = _build_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)

    def run_one(problem: Problem) -> BatchEntry:
        started = time.monotonic()
        try:
            _evs_path, manifest_path = _generate_one(
                problem, config, out_dir, args.compile or "manifest"
            )
            return BatchEntry(
                problem_id=problem.id,
                status="succeeded",
                iterations={},
                wall_time_s=time.monotonic() - started,
                manifest_path=str(manifest_path or ""),
            )
        except PipelineFailure as exc:
            return BatchEntry(
                problem_id=problem.id,
                status="failed",
                stage=exc.outcome.stage,
                iterations={exc.outcome.stage: exc.outcome.iterations_used},
                wall_time_s=time.monotonic() - started,
                detail="; ".join(
                    f.message for f in (exc.outcome.final_feedback.findings if exc.outcome.final_feedback else ())
                ),
            )
        except (ValueError, TransportError) as exc:
            return BatchEntry(
                problem_id=problem.id,
                status="failed",
                stage="planning",
                iterations={},
                wall_time_s=time.monotonic() - started,
                detail=str(exc),
            )

    parallelism = max(1, args.parallelism)
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        entries = list(pool.map(run_one, problems))

    report = BatchReport(tuple(entries))
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "batch_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    for entry in report.entries:
        marker = "ok " if entry.status == "succeeded" else "FAIL"
        stage = f" stage={entry.stage}" if entry.stage else ""
        print(f"{marker} {entry.problem_id}{stage}")
    print(f"batch: {report.succeeded}/{len(report.entries)} succeeded; report: {report_path}")
    return EXIT_OK if report.failed == 0 else EXIT_PIPELINE


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--replay", help="replay fixture directory (offline, default-safe)")
    p.add_argument("--live", action="store_true", help="allow live LLM endpoint from env")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evskit", description="Produce and compile executable video scripts.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="run the pipeline for one problem")
    g.add_argument("problem", help="problem JSON file")
    g.add_argument("--compile", choices=["manifest", "full"], help="also compile the EVS")
    g.add_argument("--max-iters", type=int, help="per-stage iteration budget override")
    g.add_argument("--profile", help=argparse.SUPPRESS)
    _add_common_flags(g)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("critique", help="run the quality gate over one artifact file")
    c.add_argument("artifact", help="solution/narration JSON or .py code file")
    c.add_argument("--profile", required=True, help="rule profile name (e.g. math_text)")
    _add_common_flags(c)
    c.set_defaults(func=cmd_critique)

    k = sub.add_parser("compile", help="compile an EVS file into a manifest")
    k.add_argument("evs", help="canonical EVS JSON file")
    k.add_argument("--compile", choices=["manifest", "full"], default="manifest", help="compilation mode")
    _add_common_flags(k)
    k.set_defaults(func=cmd_compile)

    b = sub.add_parser("batch", help="run the pipeline over a directory of problems")
    b.add_argument("problems", help="directory of problem JSON files")
    b.add_argument("--compile", choices=["manifest", "full"], help="also compile each EVS")
    b.add_argument("--parallelism", type=int, default=1, help="concurrent pipelines")
    b.add_argument("--max-iters", type=int, help="per-stage iteration budget override")
    _add_common_flags(b)
    b.set_defaults(func=cmd_batch)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
