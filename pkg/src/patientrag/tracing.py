"""Machine-readable run traces: one newline-delimited JSON file per trace id.

Records are deterministic given deterministic inputs; wall-clock timestamps can
be frozen via the deterministic flag so that identical runs produce
byte-identical trace files.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

FROZEN_TIMESTAMP = "1970-01-01T00:00:00+00:00"


def derive_trace_id(patient_id: str, query: str) -> str:
    """Content-addressed trace id so replayed runs stay byte-identical."""
    return hashlib.sha256(f"{patient_id}\x1f{query}".encode("utf-8")).hexdigest()[:16]


class TraceWriter:
    def __init__(self, directory, deterministic: bool = False):
        self.directory = Path(directory)
        self.deterministic = deterministic

    def _now(self) -> str:
        if self.deterministic:
            return FROZEN_TIMESTAMP
        return datetime.now(timezone.utc).isoformat()

    def begin(self, trace_id: str) -> "Trace":
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{trace_id}.jsonl"
        return Trace(trace_id, path, self._now)


class Trace:
    """Append-only record stream for one pipeline run; truncates on begin."""

    def __init__(self, trace_id: str, path: Path, clock):
        self.trace_id = trace_id
        self.path = path
        self._clock = clock
        self._seq = 0
        self._fh = path.open("w", encoding="utf-8")

    def record(self, stage: str, **payload) -> None:
        self._seq += 1
        entry = {"trace_id": self.trace_id, "seq": self._seq, "ts": self._clock(),
                 "stage": stage, **payload}
        self._fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False
