"""Exact top-k cosine similarity store with newline-delimited persistence.

The corpora here are small enough that an exact scan beats an approximate
index: results are reproducible, oracle-testable, and the on-disk format stays
diff-able. Patient context and medical knowledge live in two separate store
instances, never one store with a flag.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Chunk
from .embedding import validate_vector
from .errors import DimensionMismatchError, StoreParseError, StoreVersionError

FORMAT_NAME = "patientrag-vector-store"
SUPPORTED_VERSIONS = (1,)
CURRENT_VERSION = 1


@dataclass
class StoredEntry:
    entry_id: str
    chunk: Chunk
    vector: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)
    insertion_index: int = 0


@dataclass
class SearchHit:
    entry_id: str
    score: float
    rank: int
    chunk: Chunk
    metadata: dict[str, str]


def entry_id_for(chunk: Chunk) -> str:
    return f"{chunk.document_id}:{chunk.sequence}"


class VectorStore:
    """In-memory cosine index with reader/writer locking.

    Many concurrent readers or one writer; a search never observes a partially
    applied upsert batch because upserts validate everything first and commit
    under the lock.
    """

    def __init__(self, dimension: int | None = None):
        self.dimension = dimension
        self._entries: dict[str, StoredEntry] = {}
        self._next_index = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._entries)

    def upsert(self, entries: list[tuple[Chunk, np.ndarray, dict[str, str]]]) -> int:
        """Insert or replace entries; returns how many were written.

        Entry ids derive from the chunk identity (document id + sequence), so
        re-ingesting a document replaces its chunks while keeping their
        original insertion order for tie-breaking. A dimension mismatch rejects
        the whole batch with no partial write.
        """
        prepared: list[StoredEntry] = []
        dimension = self.dimension
        for chunk, vector, metadata in entries:
            vec = validate_vector(vector)
            if dimension is None:
                dimension = vec.shape[0]
            elif vec.shape[0] != dimension:
                raise DimensionMismatchError(
                    f"entry dimension {vec.shape[0]} does not match store dimension {dimension}"
                )
            # sorted key order keeps in-memory and reloaded stores byte-identical
            prepared.append(StoredEntry(
                entry_id=entry_id_for(chunk),
                chunk=chunk,
                vector=vec,
                metadata=dict(sorted((metadata or {}).items())),
            ))
        with self._lock:
            self.dimension = dimension
            for entry in prepared:
                existing = self._entries.get(entry.entry_id)
                if existing is not None:
                    entry.insertion_index = existing.insertion_index
                else:
                    entry.insertion_index = self._next_index
                    self._next_index += 1
                self._entries[entry.entry_id] = entry
        return len(prepared)

    def search(self, query, k: int, metadata_filter=None) -> list[SearchHit]:
        """Top-k entries by cosine similarity.

        ``metadata_filter`` is either a dict (every key must match exactly) or
        a callable over the metadata mapping. Ties break toward the lower
        insertion index so results are deterministic for a fixed store state.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        with self._lock:
            entries = list(self._entries.values())
            dimension = self.dimension
        if not entries:
            return []
        q = validate_vector(query)
        if q.shape[0] != dimension:
            raise DimensionMismatchError(
                f"query dimension {q.shape[0]} does not match store dimension {dimension}"
            )
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            raise DimensionMismatchError("query vector has zero norm")
        predicate = _as_predicate(metadata_filter)
        scored: list[tuple[float, int, StoredEntry]] = []
        for entry in entries:
            if predicate is not None and not predicate(entry.metadata):
                continue
            norm = float(np.linalg.norm(entry.vector))
            score = float(np.dot(q, entry.vector) / (q_norm * norm))
            score = max(-1.0, min(1.0, score))
            scored.append((score, entry.insertion_index, entry))
        scored.sort(key=lambda item: (-item[0], item[1]))
        hits = []
        for rank, (score, _, entry) in enumerate(scored[:k], start=1):
            hits.append(SearchHit(
                entry_id=entry.entry_id,
                score=score,
                rank=rank,
                chunk=entry.chunk,
                metadata=dict(entry.metadata),
            ))
        return hits

    def count_matching(self, metadata_filter) -> int:
        predicate = _as_predicate(metadata_filter)
        with self._lock:
            if predicate is None:
                return len(self._entries)
            return sum(1 for e in self._entries.values() if predicate(e.metadata))

    def distinct_metadata_values(self, key: str) -> list[str]:
        with self._lock:
            values = {e.metadata[key] for e in self._entries.values() if key in e.metadata}
        return sorted(values)

    def persist(self, path) -> None:
        """Write the store as one JSON header line plus one JSON line per entry."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            entries = sorted(self._entries.values(), key=lambda e: e.insertion_index)
            header = {
                "format": FORMAT_NAME,
                "version": CURRENT_VERSION,
                "dimension": self.dimension,
                "count": len(entries),
            }
            lines = [json.dumps(header, sort_keys=True)]
            for e in entries:
                lines.append(json.dumps({
                    "entry_id": e.entry_id,
                    "document_id": e.chunk.document_id,
                    "start_offset": e.chunk.start_offset,
                    "end_offset": e.chunk.end_offset,
                    "sequence": e.chunk.sequence,
                    "text": e.chunk.text,
                    "vector": e.vector.tolist(),
                    "metadata": e.metadata,
                    "insertion_index": e.insertion_index,
                }, sort_keys=True))
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "VectorStore":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise StoreParseError(path, 1, f"invalid header: {exc}") from exc
            if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
                raise StoreParseError(path, 1, "not a vector store file (bad format marker)")
            version = header.get("version")
            if version not in SUPPORTED_VERSIONS:
                raise StoreVersionError(version, SUPPORTED_VERSIONS)
            store = cls(dimension=header.get("dimension"))
            max_index = -1
            for line_number, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    chunk = Chunk(
                        document_id=rec["document_id"],
                        start_offset=rec["start_offset"],
                        end_offset=rec["end_offset"],
                        text=rec["text"],
                        sequence=rec["sequence"],
                    )
                    entry = StoredEntry(
                        entry_id=rec["entry_id"],
                        chunk=chunk,
                        vector=validate_vector(rec["vector"]),
                        metadata=dict(rec["metadata"]),
                        insertion_index=rec["insertion_index"],
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise StoreParseError(path, line_number, str(exc)) from exc
                if store.dimension is not None and entry.vector.shape[0] != store.dimension:
                    raise StoreParseError(
                        path, line_number,
                        f"vector dimension {entry.vector.shape[0]} != header dimension {store.dimension}",
                    )
                store._entries[entry.entry_id] = entry
                max_index = max(max_index, entry.insertion_index)
            store._next_index = max_index + 1
        return store


def _as_predicate(metadata_filter):
    if metadata_filter is None:
        return None
    if callable(metadata_filter):
        return metadata_filter
    if isinstance(metadata_filter, dict):
        wanted = dict(metadata_filter)
        return lambda meta: all(meta.get(k) == v for k, v in wanted.items())
    raise TypeError(f"metadata_filter must be a dict or callable, got {type(metadata_filter)!r}")


def store_filename(kind: str, version: int = CURRENT_VERSION) -> str:
    return f"{kind}_store.v{version}"
