"""Document ingestion and sliding-window character chunking.

Both the patient-context corpus and the medical-knowledge corpus flow through
the same splitter; only their chunking parameters differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib

from .errors import IngestionError

SOURCE_PATIENT_TRANSCRIPT = "patient_transcript"
SOURCE_MEDICAL_TEXTBOOK = "medical_textbook"
SOURCE_WEB_RESOURCE = "web_resource"
VALID_SOURCES = (SOURCE_PATIENT_TRANSCRIPT, SOURCE_MEDICAL_TEXTBOOK, SOURCE_WEB_RESOURCE)

VALID_FORMATS = ("plain_text", "markdown")


@dataclass
class ChunkingConfig:
    chunk_size: int
    overlap: int

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be > 0, got {self.chunk_size}")
        if self.overlap < 0:
            raise ValueError(f"overlap must be >= 0, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise ValueError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


# Defaults: small windows for the (short) structured patient context, large
# windows for textbook-scale knowledge documents. Overridable via config.
PATIENT_CHUNKING = ChunkingConfig(chunk_size=500, overlap=200)
KNOWLEDGE_CHUNKING = ChunkingConfig(chunk_size=2500, overlap=500)


@dataclass
class Document:
    id: str
    source: str
    title: str
    body: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in VALID_SOURCES:
            raise ValueError(f"unknown document source {self.source!r}")
        if not self.body:
            raise ValueError("document body must be non-empty")
        if self.source == SOURCE_PATIENT_TRANSCRIPT and "patient_id" not in self.metadata:
            raise ValueError("patient transcripts require a patient_id metadata key")


@dataclass
class Chunk:
    """A contiguous span of a document body.

    ``text`` is always the exact substring ``body[start_offset:end_offset]`` —
    chunks are extractive, never paraphrased.
    """

    document_id: str
    start_offset: int
    end_offset: int
    text: str
    sequence: int


def split_text(body: str, config: ChunkingConfig, document_id: str = "") -> list[Chunk]:
    """Split ``body`` into overlapping chunks on a fixed stride.

    Start offsets are 0, s, 2s, ... with s = chunk_size - overlap; the walk
    stops at the first offset whose chunk reaches the end of the body, so the
    final chunk may be shorter than chunk_size but always ends exactly at
    len(body). Every character lands in at least one chunk and consecutive
    chunks share exactly ``overlap`` characters.
    """
    if not body:
        return []
    chunks: list[Chunk] = []
    start = 0
    sequence = 0
    n = len(body)
    while True:
        end = min(start + config.chunk_size, n)
        chunks.append(
            Chunk(
                document_id=document_id,
                start_offset=start,
                end_offset=end,
                text=body[start:end],
                sequence=sequence,
            )
        )
        if end >= n:
            break
        start += config.stride
        sequence += 1
    return chunks


def chunk_document(doc: Document, config: ChunkingConfig) -> list[Chunk]:
    return split_text(doc.body, config, document_id=doc.id)


def load_document(
    data: bytes,
    format: str = "plain_text",
    metadata: dict[str, str] | None = None,
    *,
    source: str,
    doc_id: str | None = None,
    title: str = "",
) -> Document:
    """Decode raw bytes into a Document with LF-normalized line endings.

    Only pre-converted text arrives here (``.txt``/``.md``); binary formats are
    out of scope. Invalid UTF-8 raises an IngestionError naming the offending
    byte offset.
    """
    if format not in VALID_FORMATS:
        raise IngestionError(f"unsupported format {format!r}; expected one of {VALID_FORMATS}")
    if not data:
        raise IngestionError("refusing to ingest a zero-length document")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"input is not valid UTF-8 at byte offset {exc.start}") from exc
    body = text.replace("\r\n", "\n").replace("\r", "\n")
    if not body.strip():
        raise IngestionError("document contains only whitespace")
    meta = dict(metadata or {})
    meta.setdefault("format", format)
    if doc_id is None:
        doc_id = hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]
    return Document(id=doc_id, source=source, title=title, body=body, metadata=meta)
