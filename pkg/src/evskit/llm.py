"""Pluggable LLM transports: live HTTP, replay fixtures, scripted, canned.

Replay is the workhorse: responses are looked up by a digest of the
normalized prompt, so a fixture directory makes an entire pipeline run
deterministic and network-free.  Changing a prompt template changes the
digests and invalidates fixtures — deliberately, so recorded tests cannot
silently drift from the prompts they were recorded against.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
import unicodedata
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

ENV_ENDPOINT = "EVS_LLM_ENDPOINT"
ENV_TOKEN = "EVS_LLM_TOKEN"
ENV_MODEL = "EVS_LLM_MODEL"


class TransportError(RuntimeError):
    """The transport could not produce a response (endpoint or fixture)."""


@dataclass(frozen=True)
class LLMTranscript:
    request: str
    response: str
    model: str
    wall_time_s: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class TranscriptLog:
    """Append-only record of every transport call; safe across threads."""

    def __init__(self):
        self._entries: list[LLMTranscript] = []
        self._lock = threading.Lock()

    def append(self, entry: LLMTranscript):
        with self._lock:
            self._entries.append(entry)

    def entries(self) -> list[LLMTranscript]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def normalize_prompt(prompt: str) -> str:
    text = unicodedata.normalize("NFC", prompt)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return text.strip()


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(normalize_prompt(prompt).encode("utf-8")).hexdigest()


class ReplayTransport:
    """Answers from a directory of ``<digest>.txt`` fixture files."""

    def __init__(self, fixture_dir: str | Path, log_sink: TranscriptLog | None = None):
        self.fixture_dir = Path(fixture_dir)
        self.transcripts = log_sink if log_sink is not None else TranscriptLog()
        if not self.fixture_dir.is_dir():
            raise TransportError(f"replay fixture directory not found: {self.fixture_dir}")

    def complete(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        path = self.fixture_dir / f"{digest}.txt"
        if not path.is_file():
            raise TransportError(
                f"no replay fixture for prompt digest {digest} in {self.fixture_dir}"
            )
        response = path.read_text(encoding="utf-8")
        self.transcripts.append(
            LLMTranscript(request=prompt, response=response, model="replay", wall_time_s=0.0)
        )
        return response


class LiveTransport:
    """Chat-completions-style HTTP endpoint, configured from the environment.

    Request body: ``{"model", "messages": [{"role": "user", "content": ...}],
    "temperature"}``.  Response body: ``{"choices": [{"message": {"content":
    ...}}], "usage"?}``.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        token: str | None = None,
        model: str | None = None,
        temperature: float = 0.0,
        timeout_s: float = 120.0,
        log_sink: TranscriptLog | None = None,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT, "")
        self.token = token if token is not None else os.environ.get(ENV_TOKEN, "")
        self.model = model or os.environ.get(ENV_MODEL, "default")
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.transcripts = log_sink if log_sink is not None else TranscriptLog()
        if not self.endpoint:
            raise TransportError(
                f"live transport needs an endpoint ({ENV_ENDPOINT} unset and none given)"
            )

    def complete(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        started = time.monotonic()
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"LLM endpoint unreachable: {exc}") from exc
        elapsed = time.monotonic() - started
        if resp.status_code != 200:
            raise TransportError(f"LLM endpoint returned {resp.status_code}: {resp.text[:500]}")
        try:
            doc = resp.json()
            content = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed LLM response: {exc}") from exc
        usage = doc.get("usage") or {}
        self.transcripts.append(
            LLMTranscript(
                request=prompt,
                response=content,
                model=self.model,
                wall_time_s=elapsed,
                prompt_tokens=usage.get("prompt_tokens"),
                completion_tokens=usage.get("completion_tokens"),
            )
        )
        return content


class ScriptedTransport:
    """Plays back an ordered list of responses and records each exchange.

    Used by tests and by the fixture-minting script: run a pipeline against
    scripted responses, then ``dump_fixtures`` writes the recorded pairs as
    replay fixtures keyed by the real prompt digests.
    """

    def __init__(self, responses: list[str], log_sink: TranscriptLog | None = None):
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()
        self.exchanges: list[tuple[str, str]] = []
        self.transcripts = log_sink if log_sink is not None else TranscriptLog()

    def complete(self, prompt: str) -> str:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise TransportError(
                    f"scripted transport exhausted after {len(self._responses)} responses"
                )
            response = self._responses[self._cursor]
            self._cursor += 1
            self.exchanges.append((prompt, response))
        self.transcripts.append(
            LLMTranscript(request=prompt, response=response, model="scripted", wall_time_s=0.0)
        )
        return response

    def dump_fixtures(self, fixture_dir: str | Path) -> list[Path]:
        out = Path(fixture_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for prompt, response in self.exchanges:
            path = out / f"{prompt_digest(prompt)}.txt"
            path.write_text(response, encoding="utf-8")
            written.append(path)
        return written


class CannedTransport:
    """Answers every prompt with one fixed response.

    The default response is an all-pass judge verdict, which makes this the
    offline stand-in for semantic critique when no fixtures exist.
    """

    ALL_PASS = '```json\n{"all_pass": true}\n```'

    def __init__(self, response: str | None = None, log_sink: TranscriptLog | None = None):
        self.response = self.ALL_PASS if response is None else response
        self.transcripts = log_sink if log_sink is not None else TranscriptLog()

    def complete(self, prompt: str) -> str:
        self.transcripts.append(
            LLMTranscript(request=prompt, response=self.response, model="canned", wall_time_s=0.0)
        )
        return self.response


def make_transport(mode: str, **kwargs):
    """Build a transport by mode name: live | replay | scripted | canned."""
    if mode == "live":
        return LiveTransport(**kwargs)
    if mode == "replay":
        return ReplayTransport(**kwargs)
    if mode == "scripted":
        return ScriptedTransport(**kwargs)
    if mode == "canned":
        return CannedTransport(**kwargs)
    raise ValueError(f"unknown transport mode: {mode!r}")
