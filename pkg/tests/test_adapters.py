"""Executor and speech adapters: stubs, the subprocess harness, HTTP speech."""

import base64
import json
import sys
import threading
import wave
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

import evskit.adapters as adapters
from evskit.adapters import (
    AdapterError,
    ExecutorResult,
    HarnessExecutor,
    RealTTS,
    StubExecutor,
    StubTTS,
    TTSResponse,
    execute_visualization,
    scene_name_of,
    synth_speech,
)
from evskit.compiler import DurationModel

SCENE = (
    "class BoatScene(Scene):\n"
    "    def construct(self):\n"
    "        self.play(Write(Tex('x')))\n"
)


# ---------------------------------------------------------------------------
# Scene discovery and result invariants.


def test_scene_name_found_and_defaulted():
    assert scene_name_of(SCENE) == "BoatScene"
    assert scene_name_of("class  Spaced ( Scene ):\n    pass\n") == "Spaced"
    assert scene_name_of("x = 1\n") == "GeneratedScene"
    assert scene_name_of("x = 1\n", default="Fallback") == "Fallback"


def test_executor_result_rejects_unknown_status():
    with pytest.raises(ValueError):
        ExecutorResult(status="exploded")


def test_executor_result_freezes_diagnostics():
    r = ExecutorResult(status="ok", diagnostics=["a", "b"])
    assert r.diagnostics == ("a", "b")


# ---------------------------------------------------------------------------
# Stub executor.


def test_stub_check_mode_passes_clean_code():
    r = StubExecutor().run(SCENE, mode="check")
    assert r.status == "ok"
    assert r.clip_duration_s is None and r.artifact_path is None


def test_stub_syntax_check_is_real_and_wins_over_markers():
    r = StubExecutor().run("def broken(:\n    pass  #STUB:ok:3\n")
    assert r.status == "compile_error"
    assert "SyntaxError" in r.diagnostics[0]
    assert "line 1" in r.diagnostics[0]


def test_stub_markers_drive_runtime_outcomes():
    ex = StubExecutor()
    assert ex.run("x = 1  #STUB:timeout\n", timeout_s=7).diagnostics == ("timed out after 7s",)
    assert ex.run("x = 1  #STUB:timeout\n").status == "timeout"
    r = ex.run("x = 1  #STUB:raise:camera exploded\n")
    assert r.status == "runtime_error"
    assert r.diagnostics == ("RuntimeError: camera exploded",)
    assert StubExecutor().run("x = 1  #STUB:raise\n").diagnostics == (
        "RuntimeError: scripted failure",
    )
    assert StubExecutor().run("x = 1  #STUB:explode\n").status == "runtime_error"


def test_stub_render_reports_marked_duration(tmp_path):
    r = StubExecutor().run(SCENE + "#STUB:ok:2.5\n", mode="render", output_dir=str(tmp_path))
    assert r.status == "ok"
    assert r.clip_duration_s == 2.5
    doc = json.loads((tmp_path / "BoatScene.stub.json").read_text(encoding="utf-8"))
    assert doc == {"scene": "BoatScene", "duration_s": 2.5}
    assert r.artifact_path == str(tmp_path / "BoatScene.stub.json")


def test_stub_render_default_duration_without_marker(tmp_path):
    r = StubExecutor(default_duration_s=6.0).run(SCENE, mode="render", output_dir=str(tmp_path))
    assert r.clip_duration_s == 6.0


def test_stub_check_mode_never_writes(tmp_path):
    StubExecutor().run(SCENE + "#STUB:ok:2.5\n", mode="check", output_dir=str(tmp_path))
    assert list(tmp_path.iterdir()) == []


def test_execute_visualization_defaults_to_stub():
    assert execute_visualization(SCENE).status == "ok"


# ---------------------------------------------------------------------------
# Subprocess harness.


def fake_harness(tmp_path, body):
    """Write a one-shot harness executable and return its command line."""
    script = tmp_path / "harness.py"
    script.write_text(body, encoding="utf-8")
    return [sys.executable, str(script)]


ECHO_HARNESS = """\
import json, sys
req = json.load(sys.stdin)
resp = {
    "status": "ok",
    "clip_duration_s": 3.25,
    "diagnostics": [
        "mode=" + req["mode"],
        "scene=" + req["scene_name"],
        "version=" + str(req["harness_version"]),
        "timeout=" + str(req["timeout_s"]),
    ],
    "artifact_path": (req.get("output_dir") or "") + "/clip.json",
}
json.dump(resp, sys.stdout)
"""


def test_harness_round_trips_the_request(tmp_path):
    ex = HarnessExecutor(fake_harness(tmp_path, ECHO_HARNESS))
    r = ex.run(SCENE, mode="render", timeout_s=12.0, output_dir="/media")
    assert r.status == "ok"
    assert r.clip_duration_s == 3.25
    assert r.artifact_path == "/media/clip.json"
    assert "mode=render" in r.diagnostics
    assert "scene=BoatScene" in r.diagnostics
    assert "version=1" in r.diagnostics
    assert "timeout=12.0" in r.diagnostics


def test_harness_error_statuses_pass_through(tmp_path):
    body = (
        "import json, sys\n"
        "json.load(sys.stdin)\n"
        'json.dump({"status": "compile_error", "diagnostics": "bad tex\\nline 2"}, sys.stdout)\n'
    )
    r = HarnessExecutor(fake_harness(tmp_path, body)).run(SCENE)
    assert r.status == "compile_error"
    assert r.diagnostics == ("bad tex", "line 2")  # string form split into lines


def test_harness_malformed_stdout_is_contained(tmp_path):
    r = HarnessExecutor(fake_harness(tmp_path, 'print("plain text, not json")\n')).run(SCENE)
    assert r.status == "runtime_error"
    assert r.diagnostics[0] == "malformed harness response"


def test_harness_stderr_is_surfaced_in_malformed_detail(tmp_path):
    body = 'import sys\nprint("traceback: boom", file=sys.stderr)\n'
    r = HarnessExecutor(fake_harness(tmp_path, body)).run(SCENE)
    assert r.status == "runtime_error"
    assert any("boom" in d for d in r.diagnostics)


def test_harness_unknown_status_is_contained(tmp_path):
    body = 'import json, sys\njson.dump({"status": "exploded"}, sys.stdout)\n'
    r = HarnessExecutor(fake_harness(tmp_path, body)).run(SCENE)
    assert r.status == "runtime_error"
    assert "exploded" in r.diagnostics[0]


def test_harness_launch_failure_is_contained(tmp_path):
    r = HarnessExecutor([str(tmp_path / "missing-binary")]).run(SCENE)
    assert r.status == "runtime_error"
    assert "harness unavailable" in r.diagnostics[0]


def test_harness_hung_process_is_killed(tmp_path, monkeypatch):
    monkeypatch.setattr(adapters, "TIMEOUT_GRACE_S", 0.2)
    body = "import time\ntime.sleep(60)\n"
    r = HarnessExecutor(fake_harness(tmp_path, body)).run(SCENE, timeout_s=0.1)
    assert r.status == "timeout"
    assert "killed" in r.diagnostics[0]


def test_harness_rejects_empty_command():
    with pytest.raises(ValueError):
        HarnessExecutor([])


# ---------------------------------------------------------------------------
# Speech synthesis.


def wav_properties(path):
    with wave.open(path, "rb") as w:
        return w.getnframes(), w.getframerate(), w.getnchannels(), w.getsampwidth()


def test_stub_tts_ten_words_is_four_seconds(tmp_path):
    text = "one two three four five six seven eight nine ten"
    resp = StubTTS().synthesize(text, out_dir=tmp_path, name="seg0")
    assert resp.actual_duration_s == pytest.approx(4.0, abs=1e-3)
    frames, rate, channels, width = wav_properties(resp.audio_path)
    assert (channels, width, rate) == (1, 2, StubTTS.SAMPLE_RATE)
    assert frames / rate == resp.actual_duration_s


def test_stub_tts_artifact_length_matches_report_within_1ms(tmp_path):
    model = DurationModel()
    for i, text in enumerate(("hi", "a b c", "汉字 mixed in text", "")):
        resp = StubTTS(model).synthesize(text, out_dir=tmp_path, name=f"seg{i}")
        frames, rate, _, _ = wav_properties(resp.audio_path)
        assert abs(frames / rate - resp.actual_duration_s) < 1e-3


def test_stub_tts_fixed_duration(tmp_path):
    resp = StubTTS(fixed_duration_s=2.0).synthesize("whatever length", out_dir=tmp_path)
    assert resp.actual_duration_s == 2.0
    frames, rate, _, _ = wav_properties(resp.audio_path)
    assert frames == 2 * rate


def test_stub_tts_empty_text_still_produces_audio(tmp_path):
    resp = StubTTS().synthesize("", out_dir=tmp_path, name="empty")
    frames, _, _, _ = wav_properties(resp.audio_path)
    assert frames >= 1 and resp.actual_duration_s > 0


class _SpeechHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        self.server.seen.append((self.path, body))
        if self.path == "/fail":
            self.send_response(500)
            self.end_headers()
            return
        if self.path == "/garbled":
            payload = b'{"audio_b64": 17}'
        else:
            payload = json.dumps(
                {
                    "audio_b64": base64.b64encode(b"RIFFfakewav").decode("ascii"),
                    "duration_s": 1.75,
                }
            ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def speech_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _SpeechHandler)
    server.seen = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        thread.join()


def test_real_tts_round_trip(tmp_path, speech_server):
    endpoint = f"http://127.0.0.1:{speech_server.server_address[1]}/speak"
    resp = RealTTS(endpoint=endpoint, voice="alto").synthesize(
        "hello students", out_dir=tmp_path, name="seg3"
    )
    assert resp.actual_duration_s == 1.75
    with open(resp.audio_path, "rb") as fh:
        assert fh.read() == b"RIFFfakewav"
    path, body = speech_server.seen[0]
    assert path == "/speak"
    assert body == {"text": "hello students", "voice": "alto"}


def test_real_tts_http_error_raises(tmp_path, speech_server):
    endpoint = f"http://127.0.0.1:{speech_server.server_address[1]}/fail"
    with pytest.raises(AdapterError) as exc_info:
        RealTTS(endpoint=endpoint).synthesize("x", out_dir=tmp_path)
    assert "500" in str(exc_info.value)


def test_real_tts_malformed_body_raises(tmp_path, speech_server):
    endpoint = f"http://127.0.0.1:{speech_server.server_address[1]}/garbled"
    with pytest.raises(AdapterError) as exc_info:
        RealTTS(endpoint=endpoint).synthesize("x", out_dir=tmp_path)
    assert "malformed" in str(exc_info.value)


def test_real_tts_requires_endpoint(monkeypatch):
    monkeypatch.delenv(adapters.ENV_TTS_ENDPOINT, raising=False)
    with pytest.raises(AdapterError):
        RealTTS()


def test_real_tts_reads_endpoint_from_env(monkeypatch, tmp_path, speech_server):
    endpoint = f"http://127.0.0.1:{speech_server.server_address[1]}/speak"
    monkeypatch.setenv(adapters.ENV_TTS_ENDPOINT, endpoint)
    resp = RealTTS().synthesize("env configured", out_dir=tmp_path)
    assert isinstance(resp, TTSResponse)


def test_synth_speech_dispatch(tmp_path):
    resp = synth_speech("two words", mode="stub", out_dir=tmp_path)
    assert resp.actual_duration_s == pytest.approx(0.8, abs=1e-3)
    with pytest.raises(ValueError):
        synth_speech("x", mode="loud")
