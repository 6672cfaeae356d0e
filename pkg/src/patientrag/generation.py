"""Context assembly and answer generation; the executable answer pipeline.

The augmented context is an ordered concatenation: retrieved patient evidence,
then retrieved medical knowledge, then the question itself as the final
section. Generation defaults to temperature 0 so replayed runs are exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .embedding import EmbeddingProvider
from .errors import GenerationError, PatientRagError, PipelineStageError
from .llm import ChatProvider
from .retrieval import (
    Evidence,
    RetrievalConfig,
    build_probe,
    compress_evidence,
    retrieve_medical_knowledge,
    retrieve_patient_context,
)
from .templates import TemplateStore
from .tracing import TraceWriter, derive_trace_id
from .vectorstore import VectorStore

NO_PATIENT_EVIDENCE_MARKER = "No patient context retrieved."
NO_MEDICAL_EVIDENCE_MARKER = "No medical knowledge retrieved."

STAGE_PATIENT_RETRIEVAL = "patient_retrieval"
STAGE_KNOWLEDGE_RETRIEVAL = "knowledge_retrieval"
STAGE_COMPRESSION = "compression"
STAGE_ASSEMBLY = "assembly"
STAGE_GENERATION = "generation"


@dataclass
class AugmentedContext:
    patient_evidence: list[Evidence]
    medical_evidence: list[Evidence]
    query: str
    rendered: str

    def cited_entry_ids(self) -> list[str]:
        ids = [e.entry_id for e in self.patient_evidence if not e.dropped]
        ids += [e.entry_id for e in self.medical_evidence if not e.dropped]
        return ids


@dataclass
class PatientCentricResponse:
    answer: str
    citations: list[str]
    patient_id: str
    query: str
    model_name: str
    latency_s: float
    trace_id: str
    patient_evidence: list[Evidence] = field(default_factory=list)
    medical_evidence: list[Evidence] = field(default_factory=list)
    rendered_context: str = ""


def assemble_context(
    patient_evidence: list[Evidence],
    medical_evidence: list[Evidence],
    query: str,
    templates: TemplateStore,
) -> AugmentedContext:
    """Render the generation prompt: patient block, medical block, query last.

    Dropped evidence is excluded. Empty evidence lists render explicit markers
    so the generator sees the gap instead of silence.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    patient_parts = [e.text for e in patient_evidence if not e.dropped]
    medical_parts = [e.text for e in medical_evidence if not e.dropped]
    patient_block = "\n\n".join(patient_parts) if patient_parts else NO_PATIENT_EVIDENCE_MARKER
    if medical_parts:
        medical_block = "\n\n".join(
            f"Document {i}: {text}" for i, text in enumerate(medical_parts, start=1)
        )
    else:
        medical_block = NO_MEDICAL_EVIDENCE_MARKER
    rendered = templates.render(
        "response",
        patient_context=patient_block,
        medical_knowledge=medical_block,
        question=query,
    )
    return AugmentedContext(
        patient_evidence=list(patient_evidence),
        medical_evidence=list(medical_evidence),
        query=query,
        rendered=rendered,
    )


def generate_response(
    context: AugmentedContext,
    chat: ChatProvider,
    *,
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> str:
    """Single provider call on the assembled context; empty replies are errors."""
    answer = chat.complete(
        [{"role": "user", "content": context.rendered}],
        temperature=temperature,
        max_tokens=max_tokens,
    )
    if not answer or not answer.strip():
        raise GenerationError("generation provider returned an empty reply")
    return answer


class AnswerPipeline:
    """End-to-end question answering over the two stores.

    Steps: retrieve patient context, retrieve knowledge with the augmented
    probe, compress, assemble, generate. Every step is traced under one trace
    id and failures carry their stage name.
    """

    def __init__(
        self,
        *,
        patient_store: VectorStore,
        knowledge_store: VectorStore,
        embedder: EmbeddingProvider,
        chat: ChatProvider,
        retrieval_config: RetrievalConfig,
        templates: TemplateStore,
        tracer: TraceWriter,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ):
        self.patient_store = patient_store
        self.knowledge_store = knowledge_store
        self.embedder = embedder
        self.chat = chat
        self.retrieval_config = retrieval_config
        self.templates = templates
        self.tracer = tracer
        self.temperature = temperature
        self.max_tokens = max_tokens

    def answer_question(self, patient_id: str, query: str) -> PatientCentricResponse:
        if not query.strip():
            raise ValueError("query must be non-empty")
        trace_id = derive_trace_id(patient_id, query)
        started = time.perf_counter()
        config = self.retrieval_config
        with self.tracer.begin(trace_id) as trace:
            trace.record("request", patient_id=patient_id, query=query,
                         model=self.chat.model_name)

            patient_evidence = self._stage(
                STAGE_PATIENT_RETRIEVAL, trace_id,
                lambda: retrieve_patient_context(
                    query, patient_id,
                    store=self.patient_store, embedder=self.embedder, config=config,
                ),
            )
            trace.record(STAGE_PATIENT_RETRIEVAL, query=query,
                         hits=_hit_summaries(patient_evidence))

            if config.compression_enabled and config.compress_patient_side:
                patient_evidence = self._stage(
                    STAGE_COMPRESSION, trace_id,
                    lambda: compress_evidence(patient_evidence, query, self.chat, self.templates),
                )
                trace.record(STAGE_COMPRESSION, side="patient",
                             decisions=_compression_summaries(patient_evidence))

            probe = build_probe(query, patient_evidence)
            medical_evidence = self._stage(
                STAGE_KNOWLEDGE_RETRIEVAL, trace_id,
                lambda: retrieve_medical_knowledge(
                    query, patient_evidence,
                    store=self.knowledge_store, embedder=self.embedder, config=config,
                ),
            )
            trace.record(STAGE_KNOWLEDGE_RETRIEVAL, probe=probe,
                         hits=_hit_summaries(medical_evidence))

            if config.compression_enabled:
                medical_evidence = self._stage(
                    STAGE_COMPRESSION, trace_id,
                    lambda: compress_evidence(medical_evidence, query, self.chat, self.templates),
                )
                trace.record(STAGE_COMPRESSION, side="knowledge",
                             decisions=_compression_summaries(medical_evidence))

            context = self._stage(
                STAGE_ASSEMBLY, trace_id,
                lambda: assemble_context(patient_evidence, medical_evidence, query,
                                         self.templates),
            )
            no_evidence = not context.cited_entry_ids()
            trace.record(STAGE_ASSEMBLY, rendered_chars=len(context.rendered),
                         citations=context.cited_entry_ids(), no_evidence=no_evidence)

            answer = self._stage(
                STAGE_GENERATION, trace_id,
                lambda: generate_response(context, self.chat,
                                          temperature=self.temperature,
                                          max_tokens=self.max_tokens),
            )
            trace.record(STAGE_GENERATION, model=self.chat.model_name, answer=answer)

        return PatientCentricResponse(
            answer=answer,
            citations=context.cited_entry_ids(),
            patient_id=patient_id,
            query=query,
            model_name=self.chat.model_name,
            latency_s=time.perf_counter() - started,
            trace_id=trace_id,
            patient_evidence=patient_evidence,
            medical_evidence=medical_evidence,
            rendered_context=context.rendered,
        )

    @staticmethod
    def _stage(stage: str, trace_id: str, step):
        try:
            return step()
        except PipelineStageError:
            raise
        except PatientRagError as exc:
            raise PipelineStageError(stage, exc, trace_id=trace_id) from exc


def _hit_summaries(evidence: list[Evidence]) -> list[dict]:
    return [{"entry_id": e.entry_id, "score": e.score} for e in evidence]


def _compression_summaries(evidence: list[Evidence]) -> list[dict]:
    return [
        {"entry_id": e.entry_id, "compressed": e.compressed, "dropped": e.dropped,
         "fallback": e.fallback, "chars": len(e.text)}
        for e in evidence
    ]
