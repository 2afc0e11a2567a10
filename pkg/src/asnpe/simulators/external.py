"""Language-neutral subprocess simulator protocol.

The child speaks line-delimited JSON on stdin/stdout:

    request:  {"v": 1, "id": <int>, "theta": [<float>, ...]}
    response: {"id": <int>, "x": [<float>, ...]}
              {"id": <int>, "error": "<message>"}

Responses may arrive in any order; a reader thread matches them to pending
requests by id. Requests can be pipelined; writes are serialized. Timeouts,
malformed responses, and child death surface as SimulatorError so the
inference loop's replacement policy can handle them per-theta.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from concurrent.futures import Future
from pathlib import Path

import numpy as np

from ..errors import SimulatorError

__all__ = ["PROTOCOL_VERSION", "ExternalSimulator", "replay_transcript"]

PROTOCOL_VERSION = 1


class ExternalSimulator:
    """Handle for a child-process simulator; safe for concurrent simulate calls."""

    def __init__(self, command, working_dir=None, timeout: float = 60.0, transcript_path=None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.timeout = float(timeout)
        self._pending: dict[int, Future] = {}
        self._lock = threading.Lock()
        self._next_id = 0
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._transcript: list[str] = []
        try:
            self._proc = subprocess.Popen(
                command,
                cwd=working_dir,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SimulatorError(f"cannot spawn simulator {command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    # ----- protocol plumbing -----

    def _read_loop(self):
        stream = self._proc.stdout
        for line in stream:
            line = line.strip()
            if not line:
                continue
            self._record("<", line)
            try:
                msg = json.loads(line)
                rid = int(msg["id"])
            except (ValueError, KeyError, TypeError):
                self._fail_all(f"malformed response line: {line[:200]}")
                return
            with self._lock:
                fut = self._pending.pop(rid, None)
            if fut is None:
                continue
            if "error" in msg:
                fut.set_exception(SimulatorError(f"simulator error: {msg['error']}"))
            elif "x" in msg:
                fut.set_result(np.asarray(msg["x"], dtype=float))
            else:
                fut.set_exception(SimulatorError(f"response lacks 'x' and 'error': {line[:200]}"))
        self._fail_all("simulator process closed its output")

    def _fail_all(self, reason: str):
        with self._lock:
            pending = list(self._pending.values())
            self._pending.clear()
        for fut in pending:
            if not fut.done():
                fut.set_exception(SimulatorError(reason))

    def _record(self, direction: str, line: str):
        if self._transcript_path is not None:
            self._transcript.append(f"{direction} {line}")

    def _submit(self, theta) -> tuple[int, Future]:
        theta = np.asarray(theta, dtype=float).ravel()
        fut: Future = Future()
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            self._pending[rid] = fut
            line = json.dumps({"v": PROTOCOL_VERSION, "id": rid, "theta": theta.tolist()})
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                self._pending.pop(rid, None)
                raise SimulatorError(f"simulator stdin closed: {exc}") from exc
            self._record(">", line)
        return rid, fut

    # ----- public API -----

    def simulate(self, theta, rng=None) -> np.ndarray:
        """Blocking round trip for one theta; rng is accepted for interface
        parity with in-process simulators (stochasticity lives in the child)."""
        _, fut = self._submit(theta)
        try:
            return fut.result(timeout=self.timeout)
        except SimulatorError:
            raise
        except Exception as exc:  # TimeoutError and friends
            raise SimulatorError(f"simulator timed out or failed: {exc}") from exc

    def simulate_batch(self, thetas, max_in_flight: int = 8) -> list:
        """Pipelined simulation; returns results or SimulatorError per theta,
        in submission order."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        results: list = [None] * thetas.shape[0]
        window: list[tuple[int, Future]] = []
        next_idx = 0
        while next_idx < thetas.shape[0] or window:
            while next_idx < thetas.shape[0] and len(window) < max_in_flight:
                try:
                    _, fut = self._submit(thetas[next_idx])
                except SimulatorError as exc:
                    results[next_idx] = exc
                    next_idx += 1
                    continue
                window.append((next_idx, fut))
                next_idx += 1
            if not window:
                continue
            idx, fut = window.pop(0)
            try:
                results[idx] = fut.result(timeout=self.timeout)
            except SimulatorError as exc:
                results[idx] = exc
            except Exception as exc:
                results[idx] = SimulatorError(f"simulator timed out or failed: {exc}")
        return results

    def close(self):
        if self._transcript_path is not None and self._transcript:
            self._transcript_path.parent.mkdir(parents=True, exist_ok=True)
            self._transcript_path.write_text("\n".join(self._transcript) + "\n")
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def replay_transcript(path) -> list[dict]:
    """Parse a recorded transcript back into message dicts (direction kept).

    Replaying a transcript must yield values identical to those the live run
    parsed; the line format is '<direction> <json>'.
    """
    out = []
    for raw in Path(path).read_text().splitlines():
        if not raw.strip():
            continue
        direction, payload = raw.split(" ", 1)
        msg = json.loads(payload)
        msg["_direction"] = direction
        out.append(msg)
    return out
