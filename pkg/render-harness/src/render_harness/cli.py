"""stdio entry point: one JSON request on stdin, one JSON response on stdout.

One request per process.  A malformed request (as opposed to malformed
submitted code) is an internal failure: the process says why on stderr and
exits nonzero without writing a response.
"""

from __future__ import annotations

import json
import sys

from .harness import BadRequest, run


def main(argv=None) -> int:
    raw = sys.stdin.read()
    try:
        request = json.loads(raw)
    except ValueError as exc:
        print(f"render-harness: request is not JSON: {exc}", file=sys.stderr)
        return 1
    try:
        response = run(request)
    except BadRequest as exc:
        print(f"render-harness: bad request: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failure contract
        print(f"render-harness: internal error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(json.dumps(response))
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
