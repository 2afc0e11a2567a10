"""Echo simulator child (x = theta) for protocol tests and handshakes.

Runs standalone: ``python -m asnpe.simulators.echo_child``. Flags exercise
failure modes: ``--swap-pairs`` answers every second pair of requests in
reversed order, ``--fail-id N`` returns an error for request id N, and
``--crash-after N`` exits abruptly after N responses.
"""

from __future__ import annotations

import argparse
import json
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="echo simulator child")
    parser.add_argument("--swap-pairs", action="store_true")
    parser.add_argument("--fail-id", type=int, default=None)
    parser.add_argument("--crash-after", type=int, default=None)
    args = parser.parse_args(argv)

    answered = 0
    held = None

    def respond(msg):
        nonlocal answered
        if args.fail_id is not None and msg["id"] == args.fail_id:
            out = {"id": msg["id"], "error": "injected failure"}
        else:
            out = {"id": msg["id"], "x": msg["theta"]}
        sys.stdout.write(json.dumps(out) + "\n")
        sys.stdout.flush()
        answered += 1
        if args.crash_after is not None and answered >= args.crash_after:
            sys.exit(3)

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if args.swap_pairs:
            if held is None:
                held = msg
                continue
            respond(msg)
            respond(held)
            held = None
        else:
            respond(msg)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
