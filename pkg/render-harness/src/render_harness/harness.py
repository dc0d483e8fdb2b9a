"""The request handler: compile, dry-run, and optionally render one scene.

``run`` never raises on bad *code* — broken, hostile, or hanging submissions
all come back as well-formed response dicts.  It does raise on a malformed
*request*, which the CLI turns into a nonzero exit (the caller's adapter
already maps that to a runtime error on its side).
"""

from __future__ import annotations

import json
import traceback
from pathlib import Path

from .engine import Scene
from .sandbox import WallClockExceeded, restricted_namespace, wall_clock_limit

HARNESS_VERSION = 1
MODES = ("check", "render")
DEFAULT_TIMEOUT_S = 30.0
_TRACEBACK_LIMIT = 40


class BadRequest(ValueError):
    """The request envelope itself is unusable; exit nonzero."""


def _error(status: str, diagnostics) -> dict:
    return {"status": status, "diagnostics": list(diagnostics)}


def _trimmed_traceback(exc: BaseException) -> list[str]:
    lines = []
    for chunk in traceback.format_exception(type(exc), exc, exc.__traceback__):
        lines.extend(chunk.rstrip("\n").split("\n"))
    # Drop harness-internal frames; user code runs in <scene>.
    start = 0
    for i, line in enumerate(lines):
        if '"<scene>"' in line:
            start = i
            break
    kept = lines[:1] + lines[start:] if start else lines
    return kept[-_TRACEBACK_LIMIT:]


def _parse_request(request: dict) -> tuple[str, str, str | None, float, str | None]:
    if not isinstance(request, dict):
        raise BadRequest("request must be a JSON object")
    version = request.get("harness_version")
    if version != HARNESS_VERSION:
        raise BadRequest(f"unsupported harness_version: {version!r}")
    mode = request.get("mode")
    if mode not in MODES:
        raise BadRequest(f"mode must be one of {MODES}, got {mode!r}")
    code = request.get("code")
    if not isinstance(code, str):
        raise BadRequest("code must be a string")
    scene_name = request.get("scene_name")
    try:
        timeout_s = float(request.get("timeout_s") or DEFAULT_TIMEOUT_S)
    except (TypeError, ValueError) as exc:
        raise BadRequest(f"timeout_s is not a number: {exc}") from exc
    output_dir = request.get("output_dir")
    if mode == "render" and not output_dir:
        raise BadRequest("render mode requires output_dir")
    return mode, code, scene_name, timeout_s, output_dir


def _pick_scene_class(namespace: dict, scene_name: str | None):
    named = namespace.get(scene_name) if scene_name else None
    if isinstance(named, type) and issubclass(named, Scene) and named is not Scene:
        return named
    for value in namespace.values():
        if isinstance(value, type) and issubclass(value, Scene) and value is not Scene:
            return value
    return None


def run(request: dict) -> dict:
    """Handle one request and return the response dict."""
    mode, code, scene_name, timeout_s, output_dir = _parse_request(request)

    try:
        compiled = compile(code, "<scene>", "exec")
    except (SyntaxError, ValueError) as exc:
        # ValueError covers source with null bytes; both are compile errors.
        detail = (
            f"SyntaxError: {exc.msg} (line {exc.lineno})"
            if isinstance(exc, SyntaxError)
            else f"{type(exc).__name__}: {exc}"
        )
        return _error("compile_error", [detail] + _trimmed_traceback(exc))

    namespace = restricted_namespace()
    try:
        with wall_clock_limit(timeout_s):
            exec(compiled, namespace)
            scene_cls = _pick_scene_class(namespace, scene_name)
            if scene_cls is None:
                return _error("runtime_error", ["no Scene subclass defined in the submission"])
            scene = scene_cls()
            scene.construct()
    except WallClockExceeded as exc:
        return _error("timeout", [str(exc)])
    except RecursionError as exc:
        return _error("runtime_error", [f"RecursionError: {exc}"])
    except BaseException as exc:  # noqa: BLE001 - hostile code throws anything
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            return _error("runtime_error", [f"{type(exc).__name__} raised by submission"])
        return _error("runtime_error", _trimmed_traceback(exc))

    response = {"status": "ok", "diagnostics": list(scene.calls)}
    if mode == "render":
        duration = float(scene.time)
        artifact = Path(output_dir) / f"{type(scene).__name__}.trace.json"
        artifact.parent.mkdir(parents=True, exist_ok=True)
        artifact.write_text(
            json.dumps(
                {
                    "scene": type(scene).__name__,
                    "duration_s": duration,
                    "calls": list(scene.calls),
                    "mobjects_on_screen": len(scene.mobjects),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        response["clip_duration_s"] = duration
        response["artifact_path"] = str(artifact)
    return response
