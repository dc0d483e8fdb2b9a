"""Sandboxed scene-code execution worker speaking stdio JSON."""

from .harness import HARNESS_VERSION, BadRequest, run

__all__ = ["BadRequest", "HARNESS_VERSION", "run"]
__version__ = "0.1.0"
