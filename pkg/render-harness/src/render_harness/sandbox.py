"""Best-effort isolation for submitted scene code.

Two layers, both documented limitations rather than a security boundary:

1. A restricted namespace — file, process, and network access are denied by
   removing the dangerous builtins and replacing ``__import__`` with a
   gatekeeper that only admits a small set of computational modules (plus
   the animation API, served by the built-in engine).
2. A wall-clock limit via ``SIGALRM``, so hostile or accidental infinite
   loops end in a timeout response instead of a hung worker.
"""

from __future__ import annotations

import builtins
import signal
from contextlib import contextmanager

from . import engine

# Everything needed for arithmetic, layout math, and data shuffling; nothing
# that touches the filesystem, sockets, or other processes.
ALLOWED_MODULES = {
    "cmath",
    "collections",
    "decimal",
    "fractions",
    "functools",
    "itertools",
    "math",
    "random",
    "re",
    "string",
}

# The animation API modules are answered by the built-in engine.
ENGINE_MODULES = {"manim", "render_harness.engine"}

DENIED_BUILTINS = {
    "__import__",
    "breakpoint",
    "compile",
    "copyright",
    "credits",
    "eval",
    "exec",
    "exit",
    "globals",
    "help",
    "input",
    "license",
    "locals",
    "memoryview",
    "open",
    "quit",
    "vars",
}


class SandboxImportError(ImportError):
    pass


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    root = name.split(".")[0]
    if name in ENGINE_MODULES or root in ENGINE_MODULES:
        return engine
    if root in ALLOWED_MODULES:
        return builtins.__import__(name, globals, locals, fromlist, level)
    raise SandboxImportError(
        f"module {name!r} is not available inside the render harness"
    )


def restricted_namespace() -> dict:
    """A fresh exec namespace: engine API injected, risky builtins removed."""
    safe_builtins = {
        name: value
        for name, value in vars(builtins).items()
        if name not in DENIED_BUILTINS
    }
    safe_builtins["__import__"] = _guarded_import
    namespace = {name: getattr(engine, name) for name in engine.__all__}
    namespace["__name__"] = "__scene__"
    namespace["__builtins__"] = safe_builtins
    return namespace


class WallClockExceeded(Exception):
    """The submitted code ran past its wall-clock budget."""


@contextmanager
def wall_clock_limit(seconds: float):
    def on_alarm(signum, frame):
        raise WallClockExceeded(f"exceeded the {seconds:g}s wall-clock limit")

    previous = signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, max(0.001, float(seconds)))
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)
