"""Dual-source retrieval: patient-context retriever, knowledge retriever with
query augmentation, and query-conditioned contextual compression.

The knowledge retriever does not search on the bare question: the probe is the
question concatenated with the evidence already pulled from the patient's own
context, so knowledge retrieval is conditioned on this patient. Compression is
extractive and validated; anything a model paraphrases falls back to the
original text rather than entering the context silently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .embedding import EmbeddingProvider, embed_batch
from .errors import PatientNotFoundError
from .llm import ChatProvider
from .templates import TemplateStore
from .vectorstore import SearchHit, VectorStore

ORIGIN_PATIENT = "patient_context"
ORIGIN_KNOWLEDGE = "medical_knowledge"

DROP_SENTINEL = "NO_RELEVANT_CONTENT"

PROBE_SEPARATOR = "\n\n"


@dataclass
class RetrievalConfig:
    k_patient: int = 3
    k_knowledge: int = 3
    compression_enabled: bool = True
    compress_patient_side: bool = False
    min_score: float | None = None

    def __post_init__(self):
        if self.k_patient < 1 or self.k_knowledge < 1:
            raise ValueError("k_patient and k_knowledge must be >= 1")


@dataclass
class Evidence:
    origin: str
    entry_id: str
    text: str
    original_text: str
    score: float
    compressed: bool = False
    dropped: bool = False
    fallback: bool = False
    metadata: dict[str, str] = field(default_factory=dict)


def _hit_to_evidence(hit: SearchHit, origin: str) -> Evidence:
    return Evidence(
        origin=origin,
        entry_id=hit.entry_id,
        text=hit.chunk.text,
        original_text=hit.chunk.text,
        score=hit.score,
        metadata=hit.metadata,
    )


def _apply_min_score(evidence: list[Evidence], min_score: float | None) -> list[Evidence]:
    if min_score is None:
        return evidence
    return [e for e in evidence if e.score >= min_score]


def retrieve_patient_context(
    query: str,
    patient_id: str,
    *,
    store: VectorStore,
    embedder: EmbeddingProvider,
    config: RetrievalConfig,
) -> list[Evidence]:
    """Top-k chunks of this patient's structured context, by query similarity."""
    if store.count_matching({"patient_id": patient_id}) == 0:
        raise PatientNotFoundError(patient_id)
    [query_vec] = embed_batch([query], embedder)
    hits = store.search(query_vec, config.k_patient, {"patient_id": patient_id})
    return _apply_min_score([_hit_to_evidence(h, ORIGIN_PATIENT) for h in hits],
                            config.min_score)


def build_probe(query: str, patient_evidence: list[Evidence]) -> str:
    """Retrieval probe for the knowledge store: query first, then patient
    evidence texts in rank order, blank-line separated."""
    parts = [query] + [e.text for e in patient_evidence if not e.dropped]
    return PROBE_SEPARATOR.join(parts)


def retrieve_medical_knowledge(
    query: str,
    patient_evidence: list[Evidence],
    *,
    store: VectorStore,
    embedder: EmbeddingProvider,
    config: RetrievalConfig,
) -> list[Evidence]:
    """Top-k knowledge chunks for the patient-augmented probe."""
    probe = build_probe(query, patient_evidence)
    [probe_vec] = embed_batch([probe], embedder)
    hits = store.search(probe_vec, config.k_knowledge)
    return _apply_min_score([_hit_to_evidence(h, ORIGIN_KNOWLEDGE) for h in hits],
                            config.min_score)


_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Approximate sentence segmentation: split after . ? ! followed by whitespace."""
    return [s for s in (part.strip() for part in _SENTENCE_SPLIT_RE.split(text)) if s]


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def is_extractive(candidate: str, source: str) -> bool:
    """True when every sentence of ``candidate`` occurs verbatim in ``source``
    up to whitespace normalization."""
    normalized_source = normalize_whitespace(source)
    sentences = split_sentences(candidate)
    if not sentences:
        return False
    return all(normalize_whitespace(s) in normalized_source for s in sentences)


def compress_evidence(
    evidence: list[Evidence],
    query: str,
    chat: ChatProvider,
    templates: TemplateStore,
) -> list[Evidence]:
    """Query-conditioned extractive compression of retrieved evidence.

    Per item, the model is asked to return only the relevant sentences. Replies
    are validated as extractive; a paraphrased reply falls back to the original
    text with the fallback flag set, and the drop sentinel marks the item as
    irrelevant (kept in the trace, excluded from context assembly). Compression
    never raises and never lengthens an item.
    """
    out: list[Evidence] = []
    for item in evidence:
        if item.dropped:
            out.append(item)
            continue
        prompt = templates.render("compression", query=query, document=item.original_text)
        reply = chat.complete([{"role": "user", "content": prompt}], temperature=0.0).strip()
        if reply == DROP_SENTINEL:
            out.append(Evidence(**{**item.__dict__, "dropped": True}))
            continue
        if reply and len(reply) <= len(item.original_text) and is_extractive(reply, item.original_text):
            out.append(Evidence(**{**item.__dict__, "text": reply, "compressed": True}))
        else:
            out.append(Evidence(**{
                **item.__dict__,
                "text": item.original_text,
                "compressed": False,
                "fallback": True,
            }))
    return out
