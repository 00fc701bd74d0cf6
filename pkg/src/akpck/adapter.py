"""Client for external penetration simulators speaking a line protocol.

The harness spawns the configured command once and keeps it resident.  Per
evaluation it writes one line of whitespace-separated decimal numbers (the
physical coordinates, in the documented input order) to the child's stdin
and reads back one line holding a single decimal number.  Results are
cached by input hash so one simulator call serves every limit state
sharing the response surface.

Returned readings are snapped to a 2^-40 grid (below a picometer for
penetrations in meters) so that threshold margins computed from the same
reading subtract exactly.
"""

from __future__ import annotations

import logging
import math
import os
import selectors
import subprocess
import threading
import time

import numpy as np

from .errors import ExternalEvaluatorError

__all__ = ["ExternalAdapter", "snap_reading", "SNAP_GRID"]

log = logging.getLogger("akpck.adapter")

SNAP_GRID = 2.0 ** 40


def snap_reading(value: float) -> float:
    """Round a reading to the 2^-40 grid (exact for |value| < 2^13)."""
    return math.floor(value * SNAP_GRID + 0.5) / SNAP_GRID


class ExternalAdapter:
    """Resident child process evaluated point-by-point with caching.

    Calls are serialized through a lock (concurrency limit 1 per adapter);
    run more adapters, not more threads, if the simulator license allows.
    """

    def __init__(self, command, timeout: float = 600.0, name: str = "external"):
        self.command = [str(c) for c in command]
        self.timeout = float(timeout)
        self.name = name
        self.n_calls = 0
        self.n_cache_hits = 0
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._buffer = b""

    # -- lifecycle ----------------------------------------------------------

    def _ensure_child(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._buffer = b""
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            bufsize=0,
        )

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

    def __enter__(self) -> "ExternalAdapter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x) -> float:
        """Simulator reading at physical point ``x`` (cached by input hash)."""
        point = np.ascontiguousarray(x, dtype=float).reshape(-1)
        key = point.tobytes()
        with self._lock:
            if key in self._cache:
                self.n_cache_hits += 1
                return self._cache[key]
            value = self._query(point)
            self._cache[key] = value
            self.n_calls += 1
            return value

    def _fail(self, reason: str, payload: bytes | str = b"") -> ExternalEvaluatorError:
        if isinstance(payload, bytes):
            payload = payload.decode("utf-8", "replace")
        msg = f"adapter {self.name!r} ({' '.join(self.command)}): {reason}"
        if payload:
            msg += f"; offending payload: {payload!r}"
        log.error(msg)
        self.close()
        return ExternalEvaluatorError(msg)

    def _query(self, point: np.ndarray) -> float:
        self._ensure_child()
        line = " ".join(repr(float(v)) for v in point) + "\n"
        try:
            self._proc.stdin.write(line.encode("ascii"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            rc = self._proc.poll()
            raise self._fail(f"child pipe closed (exit status {rc})") from None
        raw = self._read_line()
        try:
            value = float(raw.strip())
        except ValueError:
            raise self._fail("unparseable reply", raw) from None
        if not math.isfinite(value):
            raise self._fail("non-finite reading", raw)
        return snap_reading(value)

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while b"\n" not in self._buffer:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise self._fail(f"no reply within {self.timeout} s", self._buffer)
                if not sel.select(remaining):
                    continue
                chunk = os.read(fd, 65536)
                if not chunk:
                    rc = self._proc.poll()
                    raise self._fail(
                        f"child closed stdout (exit status {rc})", self._buffer
                    )
                self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line
