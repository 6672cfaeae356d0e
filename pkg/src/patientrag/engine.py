"""Wires stores, providers, templates and tracing into one operator-facing API.

The CLI and the HTTP service are both thin clients of this class, so identical
inputs through either surface produce identical persisted artifacts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .annotator import (
    DEFAULT_HEADING_ALIASES,
    AnnotatedPatientContext,
    annotate_transcript,
    context_filename,
    load_context_file,
)
from .config import EngineConfig, api_key_for
from .corpus import (
    SOURCE_MEDICAL_TEXTBOOK,
    SOURCE_PATIENT_TRANSCRIPT,
    Document,
    chunk_document,
    load_document,
)
from .embedding import (
    EmbeddingProvider,
    HTTPEmbeddingProvider,
    MockEmbeddingProvider,
    ReplayEmbeddingProvider,
    embed_batch,
)
from .errors import ConfigError, PatientRagError, PipelineStageError
from .evaluation import EvalReport, EvalRow, generate_questions, run_eval
from .generation import AnswerPipeline, PatientCentricResponse
from .llm import ChatProvider, HTTPChatProvider, MockChatProvider, ReplayChatProvider
from .templates import TemplateStore
from .tracing import FROZEN_TIMESTAMP, TraceWriter
from .vectorstore import VectorStore, store_filename

STAGE_ANNOTATION = "annotation"
STAGE_EMBEDDING = "embedding"


@dataclass
class IngestResult:
    document_id: str
    title: str
    chunks: int
    status: str
    error: str | None = None


def build_embedding_provider(config: EngineConfig) -> EmbeddingProvider:
    settings = config.embedding
    if settings.mode == "mock":
        return MockEmbeddingProvider(seed=settings.seed, dimension=settings.dimension)
    if settings.mode == "replay":
        if not settings.fixture:
            raise ConfigError("embedding.fixture is required in replay mode")
        return ReplayEmbeddingProvider(settings.fixture)
    return HTTPEmbeddingProvider(settings.provider, api_key=api_key_for(settings.api_key_env))


def build_chat_provider(config: EngineConfig) -> ChatProvider:
    settings = config.generation
    if settings.mode == "mock":
        return MockChatProvider(model_name=settings.provider.model_name
                                if settings.provider.model_name else "mock-chat")
    if settings.mode == "replay":
        if not settings.fixture:
            raise ConfigError("generation.fixture is required in replay mode")
        return ReplayChatProvider(settings.fixture)
    return HTTPChatProvider(settings.provider, api_key=api_key_for(settings.api_key_env))


def derive_patient_id(transcript: str) -> str:
    normalized = " ".join(transcript.split())
    return "p" + hashlib.sha256(normalized.encode("utf-8")).hexdigest()[:10]


class Engine:
    def __init__(self, config: EngineConfig, *,
                 embedder: EmbeddingProvider | None = None,
                 chat: ChatProvider | None = None):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.templates = TemplateStore(config.prompts_dir)
        self.embedder = embedder if embedder is not None else build_embedding_provider(config)
        self.chat = chat if chat is not None else build_chat_provider(config)
        self.tracer = TraceWriter(self.data_dir / "traces",
                                  deterministic=config.deterministic_traces)
        self.heading_aliases = _merge_aliases(config.heading_aliases_extra)
        self.patient_store = self._load_store("patient")
        self.knowledge_store = self._load_store("knowledge")

    # ------------------------------------------------------------------
    # store management

    def _store_path(self, kind: str) -> Path:
        return self.data_dir / store_filename(kind)

    def _load_store(self, kind: str) -> VectorStore:
        path = self._store_path(kind)
        if path.exists():
            return VectorStore.load(path)
        return VectorStore()

    def _persist_store(self, kind: str, store: VectorStore) -> None:
        store.persist(self._store_path(kind))

    # ------------------------------------------------------------------
    # patient onboarding

    def add_patient(self, transcript: str, *, patient_id: str | None = None,
                    metadata: dict[str, str] | None = None) -> tuple[str, AnnotatedPatientContext]:
        """Annotate a transcript, persist the structured context, and index it.

        Returns the patient id and the parsed context. Stage failures surface
        as PipelineStageError so callers can report where onboarding broke.
        """
        if patient_id is None:
            patient_id = derive_patient_id(transcript)
        meta = dict(metadata or {})
        meta["patient_id"] = patient_id
        doc = load_document(
            transcript.encode("utf-8"),
            source=SOURCE_PATIENT_TRANSCRIPT,
            metadata=meta,
            doc_id=f"{patient_id}.transcript",
            title=meta.get("title", patient_id),
        )
        try:
            context = annotate_transcript(
                doc, self.chat, self.templates,
                aliases=self.heading_aliases,
                created_at=self._now(),
            )
        except PatientRagError as exc:
            raise PipelineStageError(STAGE_ANNOTATION, exc) from exc

        context_text = context.serialize()
        (self.data_dir / context_filename(patient_id)).write_text(context_text, encoding="utf-8")

        context_doc = Document(
            id=f"{patient_id}.context",
            source=SOURCE_PATIENT_TRANSCRIPT,
            title=f"structured context for {patient_id}",
            body=context_text,
            metadata=meta,
        )
        chunks = chunk_document(context_doc, self.config.patient_chunking)
        try:
            vectors = embed_batch([c.text for c in chunks], self.embedder)
        except PatientRagError as exc:
            raise PipelineStageError(STAGE_EMBEDDING, exc) from exc
        entry_meta = {"patient_id": patient_id}
        if "specialty" in meta:
            entry_meta["specialty"] = meta["specialty"]
        self.patient_store.upsert([(c, v, entry_meta) for c, v in zip(chunks, vectors)])
        self._persist_store("patient", self.patient_store)
        return patient_id, context

    def get_context(self, patient_id: str) -> AnnotatedPatientContext:
        path = self.data_dir / context_filename(patient_id)
        if not path.exists():
            from .errors import PatientNotFoundError
            raise PatientNotFoundError(patient_id)
        return load_context_file(path, patient_id)

    def list_patients(self) -> list[str]:
        return self.patient_store.distinct_metadata_values("patient_id")

    # ------------------------------------------------------------------
    # knowledge ingestion

    def ingest_knowledge(self, documents: list[dict]) -> list[IngestResult]:
        """Chunk, embed and index knowledge documents.

        Each input dict carries ``text`` plus optional ``title``, ``source``
        and ``metadata``. Failures are per-document; good documents still land.
        """
        results: list[IngestResult] = []
        for item in documents:
            title = item.get("title", "")
            try:
                doc = load_document(
                    item["text"].encode("utf-8"),
                    format=item.get("format", "plain_text"),
                    source=item.get("source", SOURCE_MEDICAL_TEXTBOOK),
                    metadata=item.get("metadata") or {},
                    doc_id=item.get("doc_id"),
                    title=title,
                )
                chunks = chunk_document(doc, self.config.knowledge_chunking)
                vectors = embed_batch([c.text for c in chunks], self.embedder)
                entry_meta = {"title": doc.title, "source": doc.source, **doc.metadata}
                self.knowledge_store.upsert(
                    [(c, v, entry_meta) for c, v in zip(chunks, vectors)]
                )
                results.append(IngestResult(
                    document_id=doc.id, title=title, chunks=len(chunks), status="ok",
                ))
            except (PatientRagError, KeyError, ValueError) as exc:
                results.append(IngestResult(
                    document_id=item.get("doc_id") or "", title=title, chunks=0,
                    status="error", error=str(exc),
                ))
        if any(r.status == "ok" for r in results):
            self._persist_store("knowledge", self.knowledge_store)
        return results

    # ------------------------------------------------------------------
    # question answering

    def pipeline(self, chat: ChatProvider | None = None) -> AnswerPipeline:
        return AnswerPipeline(
            patient_store=self.patient_store,
            knowledge_store=self.knowledge_store,
            embedder=self.embedder,
            chat=chat if chat is not None else self.chat,
            retrieval_config=self.config.retrieval,
            templates=self.templates,
            tracer=self.tracer,
            temperature=self.config.generation.provider.temperature,
            max_tokens=self.config.generation.provider.max_output_tokens,
        )

    def ask(self, patient_id: str, question: str) -> PatientCentricResponse:
        return self.pipeline().answer_question(patient_id, question)

    # ------------------------------------------------------------------
    # evaluation

    def generate_questions(self, patient_id: str, n: int):
        context = self.get_context(patient_id)
        return generate_questions(context, n, self.chat, self.templates)

    def run_eval(self, dataset: list[EvalRow],
                 models: list[tuple[str, ChatProvider]]) -> EvalReport:
        def answer_fn(chat: ChatProvider, row: EvalRow) -> str:
            return self.pipeline(chat).answer_question(row.patient_id, row.question).answer

        return run_eval(
            dataset,
            models,
            answer_fn=answer_fn,
            embedder=self.embedder,
            templates=self.templates,
            weight=self.config.correctness_weight,
            parallelism=self.config.eval_parallelism,
        )

    def _now(self) -> str:
        if self.config.deterministic_traces:
            return FROZEN_TIMESTAMP
        return datetime.now(timezone.utc).isoformat()


def _merge_aliases(extra: dict[str, list[str]]):
    if not extra:
        return DEFAULT_HEADING_ALIASES
    merged = {}
    for category, names in DEFAULT_HEADING_ALIASES.items():
        extras = tuple(alias.lower() for alias in extra.get(category, []))
        merged[category] = names + tuple(a for a in extras if a not in names)
    unknown = set(extra) - set(DEFAULT_HEADING_ALIASES)
    if unknown:
        raise ConfigError(f"unknown annotation categories in heading_aliases_extra: {sorted(unknown)}")
    return merged
