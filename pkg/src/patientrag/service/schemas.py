"""Pydantic request/response models for the HTTP facade."""

from __future__ import annotations

from pydantic import BaseModel, Field


class AnnotatedContextModel(BaseModel):
    history_and_symptoms: str
    executed_diagnostics: str
    medications_and_instructions: str


class PatientCreateResponse(BaseModel):
    patient_id: str
    status: str
    context: AnnotatedContextModel


class PatientListResponse(BaseModel):
    patients: list[str]


class AskRequest(BaseModel):
    question: str


class EvidenceModel(BaseModel):
    origin: str
    entry_id: str
    text: str
    original_text: str
    score: float
    compressed: bool
    dropped: bool
    fallback: bool
    metadata: dict[str, str] = Field(default_factory=dict)


class AskResponse(BaseModel):
    patient_id: str
    query: str
    answer: str
    model_name: str
    citations: list[str]
    patient_evidence: list[EvidenceModel]
    medical_evidence: list[EvidenceModel]
    trace_id: str
    disclaimer: str


class KnowledgeDocument(BaseModel):
    text: str
    title: str = ""
    doc_id: str | None = None
    source: str = "medical_textbook"
    format: str = "plain_text"
    metadata: dict[str, str] = Field(default_factory=dict)


class IngestRequest(BaseModel):
    documents: list[KnowledgeDocument]


class IngestDocumentResult(BaseModel):
    document_id: str
    title: str
    chunks: int
    status: str
    error: str | None = None


class IngestResponse(BaseModel):
    documents: int
    chunks: int
    results: list[IngestDocumentResult]


class EvalModelSpec(BaseModel):
    name: str
    mode: str = "mock"
    endpoint: str = ""
    model_name: str = ""
    fixture: str = ""


class EvalRunRequest(BaseModel):
    dataset: str
    models: list[EvalModelSpec]


class EvalRunResponse(BaseModel):
    job_id: str


class EvalJobStatus(BaseModel):
    job_id: str
    status: str
    report_ref: str | None = None
    error: str | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
    providers: dict[str, str]


class ErrorBody(BaseModel):
    stage: str
    message: str
    trace_id: str | None = None
    raw_reply: str | None = None  # model reply audit, set on annotation parse failures
