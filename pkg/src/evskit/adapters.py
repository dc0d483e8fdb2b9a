"""Adapters for the code-execution harness and the speech synthesizer.

Both come in a real flavor (subprocess / HTTP) and an offline stub, behind
the same call shape, so the pipeline and its tests never need the network
or external binaries unless explicitly configured.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import wave
from dataclasses import dataclass
from pathlib import Path

from .compiler import DurationModel, estimate_narration_duration

log = logging.getLogger(__name__)

HARNESS_VERSION = 1
# Extra wall time granted beyond the requested timeout before the subprocess
# is killed: covers interpreter startup and response flushing.
TIMEOUT_GRACE_S = 5.0

ENV_TTS_ENDPOINT = "EVS_TTS_ENDPOINT"

EXECUTOR_STATUSES = ("ok", "compile_error", "runtime_error", "timeout")


class AdapterError(RuntimeError):
    """A real adapter endpoint failed (network, protocol, artifact)."""


@dataclass(frozen=True)
class ExecutorResult:
    status: str
    diagnostics: tuple[str, ...] = ()
    clip_duration_s: float | None = None
    artifact_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        if self.status not in EXECUTOR_STATUSES:
            raise ValueError(f"unknown executor status: {self.status!r}")


@dataclass(frozen=True)
class TTSResponse:
    audio_path: str
    actual_duration_s: float


_SCENE_CLASS = re.compile(r"class\s+(\w+)\s*\(\s*Scene\s*\)")


def scene_name_of(code: str, default: str = "GeneratedScene") -> str:
    m = _SCENE_CLASS.search(code)
    return m.group(1) if m else default


class StubExecutor:
    """Offline executor: real syntax check, scripted runtime behavior.

    Runtime outcomes are keyed by markers in the code so tests can force
    each status without running anything:

    - ``#STUB:ok:<seconds>`` → ok with that clip duration (render mode)
    - ``#STUB:raise`` or ``#STUB:raise:<msg>`` → runtime_error
    - ``#STUB:timeout`` → timeout
    - no marker → ok (render mode reports ``default_duration_s``)
    """

    def __init__(self, default_duration_s: float = 4.0):
        self.default_duration_s = float(default_duration_s)

    def run(
        self,
        code: str,
        mode: str = "check",
        timeout_s: float = 30.0,
        output_dir: str | None = None,
    ) -> ExecutorResult:
        try:
            compile(code, "<illustration>", "exec")
        except SyntaxError as exc:
            return ExecutorResult(
                status="compile_error",
                diagnostics=(f"SyntaxError: {exc.msg} (line {exc.lineno})",),
            )
        m = re.search(r"#STUB:(\w+)(?::([^\n]*))?", code)
        marker, arg = (m.group(1), m.group(2)) if m else ("ok", None)
        if marker == "timeout":
            return ExecutorResult(
                status="timeout",
                diagnostics=(f"timed out after {timeout_s}s",),
            )
        if marker == "raise":
            msg = arg or "scripted failure"
            return ExecutorResult(
                status="runtime_error",
                diagnostics=(f"RuntimeError: {msg}",),
            )
        if marker != "ok":
            return ExecutorResult(
                status="runtime_error",
                diagnostics=(f"unknown stub marker: {marker}",),
            )
        duration = float(arg) if arg else self.default_duration_s
        if mode == "render":
            artifact = None
            if output_dir:
                artifact = str(Path(output_dir) / f"{scene_name_of(code)}.stub.json")
                Path(artifact).parent.mkdir(parents=True, exist_ok=True)
                Path(artifact).write_text(
                    json.dumps({"scene": scene_name_of(code), "duration_s": duration}),
                    encoding="utf-8",
                )
            return ExecutorResult(
                status="ok", clip_duration_s=duration, artifact_path=artifact
            )
        return ExecutorResult(status="ok")


class HarnessExecutor:
    """Runs code through the external harness: one subprocess, one JSON
    request on stdin, one JSON response on stdout."""

    def __init__(self, command: list[str]):
        if not command:
            raise ValueError("harness command is empty")
        self.command = list(command)

    def run(
        self,
        code: str,
        mode: str = "check",
        timeout_s: float = 30.0,
        output_dir: str | None = None,
    ) -> ExecutorResult:
        request = {
            "harness_version": HARNESS_VERSION,
            "mode": mode,
            "code": code,
            "scene_name": scene_name_of(code),
            "timeout_s": timeout_s,
            "output_dir": output_dir,
        }
        try:
            proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
            )
        except OSError as exc:
            return ExecutorResult(
                status="runtime_error",
                diagnostics=(f"harness unavailable: {exc}",),
            )
        try:
            stdout, stderr = proc.communicate(
                json.dumps(request), timeout=timeout_s + TIMEOUT_GRACE_S
            )
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            return ExecutorResult(
                status="timeout",
                diagnostics=(f"harness killed after {timeout_s + TIMEOUT_GRACE_S:.1f}s",),
            )
        try:
            doc = json.loads(stdout)
            status = doc["status"]
            raw_diag = doc.get("diagnostics", [])
        except (ValueError, KeyError, TypeError):
            detail = (stderr or stdout or "").strip()[:500]
            return ExecutorResult(
                status="runtime_error",
                diagnostics=("malformed harness response", detail) if detail else ("malformed harness response",),
            )
        if isinstance(raw_diag, str):
            diagnostics = tuple(line for line in raw_diag.splitlines() if line)
        else:
            diagnostics = tuple(str(d) for d in raw_diag)
        if status not in EXECUTOR_STATUSES:
            return ExecutorResult(
                status="runtime_error",
                diagnostics=(f"harness returned unknown status {status!r}",) + diagnostics,
            )
        duration = doc.get("clip_duration_s")
        return ExecutorResult(
            status=status,
            diagnostics=diagnostics,
            clip_duration_s=None if duration is None else float(duration),
            artifact_path=doc.get("artifact_path"),
        )


def execute_visualization(
    code: str,
    mode: str = "check",
    timeout_s: float = 30.0,
    executor=None,
) -> ExecutorResult:
    """Run visualization code through the configured executor (stub default)."""
    executor = executor or StubExecutor()
    return executor.run(code, mode=mode, timeout_s=timeout_s)


class StubTTS:
    """Offline synthesizer: writes a silence artifact of the estimated length.

    The duration honored in the manifest is derived from the actual frame
    count, so the reported number always matches the artifact within 1 ms.
    """

    SAMPLE_RATE = 22050

    def __init__(self, model: DurationModel | None = None, fixed_duration_s: float | None = None):
        self.model = model or DurationModel()
        self.fixed_duration_s = fixed_duration_s

    def synthesize(self, text: str, out_dir=None, name: str = "segment") -> TTSResponse:
        if self.fixed_duration_s is not None:
            duration = float(self.fixed_duration_s)
        else:
            duration = estimate_narration_duration(text, self.model)
        frames = max(1, round(duration * self.SAMPLE_RATE))
        actual = frames / self.SAMPLE_RATE
        out_dir = Path(out_dir) if out_dir else Path.cwd()
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{name}.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(self.SAMPLE_RATE)
            w.writeframes(b"\x00\x00" * frames)
        return TTSResponse(audio_path=str(path), actual_duration_s=actual)


class RealTTS:
    """HTTP synthesizer client: posts text, stores the returned waveform."""

    def __init__(self, endpoint: str | None = None, voice: str = "default", timeout_s: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENV_TTS_ENDPOINT, "")
        self.voice = voice
        self.timeout_s = timeout_s
        if not self.endpoint:
            raise AdapterError(
                f"speech endpoint not configured ({ENV_TTS_ENDPOINT} unset and none given)"
            )

    def synthesize(self, text: str, out_dir=None, name: str = "segment") -> TTSResponse:
        import base64

        import requests

        try:
            resp = requests.post(
                self.endpoint,
                json={"text": text, "voice": self.voice},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise AdapterError(f"speech endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterError(f"speech endpoint returned {resp.status_code}")
        try:
            doc = resp.json()
            audio = base64.b64decode(doc["audio_b64"])
            duration = float(doc["duration_s"])
        except (ValueError, KeyError, TypeError) as exc:
            raise AdapterError(f"malformed speech response: {exc}") from exc
        out_dir = Path(out_dir) if out_dir else Path.cwd()
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{name}.wav"
        path.write_bytes(audio)
        return TTSResponse(audio_path=str(path), actual_duration_s=duration)


def synth_speech(
    text: str,
    mode: str = "stub",
    model: DurationModel | None = None,
    endpoint: str | None = None,
    voice: str = "default",
    out_dir=None,
    name: str = "segment",
) -> TTSResponse:
    """Synthesize one narration segment in real or stub mode."""
    if mode == "stub":
        return StubTTS(model=model).synthesize(text, out_dir=out_dir, name=name)
    if mode == "real":
        return RealTTS(endpoint=endpoint, voice=voice).synthesize(text, out_dir=out_dir, name=name)
    raise ValueError(f"unknown speech mode: {mode!r}")
