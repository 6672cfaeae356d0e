"""HTTP facade over the engine: onboarding, Q&A, ingestion, eval jobs, health.

Error bodies always carry {stage, message, trace_id} so clients can tell which
pipeline phase failed. Pipeline execution is capped by a semaphore sized from
config; excess requests queue instead of executing.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .. import __version__
from ..config import EngineConfig, api_key_for
from ..engine import Engine
from ..errors import (
    ConfigError,
    PatientNotFoundError,
    PatientRagError,
    PipelineStageError,
)
from ..evaluation import load_eval_dataset, render_score_table
from ..llm import GenerationProviderConfig, HTTPChatProvider, MockChatProvider, ReplayChatProvider
from . import schemas

DISCLAIMER = (
    "This answer is generated by a research system from retrieved documents and is "
    "not medical advice. Consult a qualified clinician before acting on it."
)


def _error_response(status: int, stage: str, message: str, trace_id: str | None = None,
                    raw_reply: str | None = None):
    body = schemas.ErrorBody(stage=stage, message=message, trace_id=trace_id,
                             raw_reply=raw_reply)
    return JSONResponse(status_code=status, content=body.model_dump())


def create_app(engine: Engine | None = None, config: EngineConfig | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    if engine is None:
        engine = Engine(config or EngineConfig())
    app = FastAPI(title="patientrag", version=__version__)
    app.state.engine = engine
    app.state.pipeline_slots = threading.Semaphore(
        engine.config.service.max_concurrent_pipelines
    )
    app.state.eval_jobs = {}
    app.state.eval_jobs_lock = threading.Lock()

    if engine.config.service.cors_allow_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=engine.config.service.cors_allow_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(PipelineStageError)
    async def _stage_error(request: Request, exc: PipelineStageError):
        if isinstance(exc.cause, PatientNotFoundError):
            return _error_response(404, exc.stage, str(exc.cause), exc.trace_id)
        raw_reply = getattr(exc.cause, "raw_reply", None)
        return _error_response(502, exc.stage, str(exc.cause), exc.trace_id,
                               raw_reply=raw_reply)

    @app.exception_handler(PatientNotFoundError)
    async def _not_found(request: Request, exc: PatientNotFoundError):
        return _error_response(404, "patient_lookup", str(exc))

    @app.exception_handler(PatientRagError)
    async def _engine_error(request: Request, exc: PatientRagError):
        return _error_response(500, "engine", str(exc))

    # ------------------------------------------------------------------

    @app.post("/patients", status_code=201, response_model=schemas.PatientCreateResponse)
    async def create_patient(request: Request):
        raw = await request.body()
        if len(raw) > engine.config.service.max_transcript_bytes:
            return _error_response(413, "ingestion", "transcript exceeds the configured size limit")
        try:
            payload = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return _error_response(400, "ingestion", "request body is not valid JSON")
        if not isinstance(payload, dict):
            return _error_response(400, "ingestion", "request body must be a JSON object")
        transcript = payload.get("transcript", "")
        if not isinstance(transcript, str) or not transcript.strip():
            return _error_response(400, "ingestion", "transcript must be a non-empty string")
        metadata = payload.get("metadata") or {}
        if not isinstance(metadata, dict):
            return _error_response(400, "ingestion", "metadata must be an object")
        patient_id = payload.get("patient_id")

        def onboard():
            with app.state.pipeline_slots:
                return engine.add_patient(
                    transcript, patient_id=patient_id,
                    metadata={str(k): str(v) for k, v in metadata.items()},
                )

        pid, context = await run_in_threadpool(onboard)
        return schemas.PatientCreateResponse(
            patient_id=pid,
            status="annotated",
            context=schemas.AnnotatedContextModel(
                history_and_symptoms=context.history_and_symptoms,
                executed_diagnostics=context.executed_diagnostics,
                medications_and_instructions=context.medications_and_instructions,
            ),
        )

    @app.get("/patients", response_model=schemas.PatientListResponse)
    def list_patients():
        return schemas.PatientListResponse(patients=engine.list_patients())

    @app.get("/patients/{patient_id}/context", response_model=schemas.AnnotatedContextModel)
    def get_context(patient_id: str):
        context = engine.get_context(patient_id)
        return schemas.AnnotatedContextModel(
            history_and_symptoms=context.history_and_symptoms,
            executed_diagnostics=context.executed_diagnostics,
            medications_and_instructions=context.medications_and_instructions,
        )

    @app.post("/patients/{patient_id}/ask", response_model=schemas.AskResponse)
    def ask(patient_id: str, body: schemas.AskRequest):
        if not body.question.strip():
            raise HTTPException(status_code=422, detail="question must be non-empty")
        with app.state.pipeline_slots:
            response = engine.ask(patient_id, body.question)
        return schemas.AskResponse(
            patient_id=response.patient_id,
            query=response.query,
            answer=response.answer,
            model_name=response.model_name,
            citations=response.citations,
            patient_evidence=[_evidence_model(e) for e in response.patient_evidence],
            medical_evidence=[_evidence_model(e) for e in response.medical_evidence],
            trace_id=response.trace_id,
            disclaimer=DISCLAIMER,
        )

    @app.post("/knowledge/ingest")
    def ingest(body: schemas.IngestRequest):
        results = engine.ingest_knowledge([doc.model_dump() for doc in body.documents])
        response = schemas.IngestResponse(
            documents=sum(1 for r in results if r.status == "ok"),
            chunks=sum(r.chunks for r in results),
            results=[schemas.IngestDocumentResult(**r.__dict__) for r in results],
        )
        status = 207 if any(r.status == "error" for r in results) else 200
        return JSONResponse(status_code=status, content=response.model_dump())

    # ------------------------------------------------------------------
    # evaluation jobs

    @app.post("/eval/run", response_model=schemas.EvalRunResponse, status_code=202)
    def eval_run(body: schemas.EvalRunRequest):
        if not body.models:
            raise HTTPException(status_code=422, detail="at least one model is required")
        dataset_path = _resolve_dataset(engine, body.dataset)
        if dataset_path is None:
            raise HTTPException(status_code=400, detail=f"dataset not found: {body.dataset}")
        job_id = uuid.uuid4().hex[:12]
        with app.state.eval_jobs_lock:
            app.state.eval_jobs[job_id] = {"status": "queued", "report": None, "error": None}

        def run_job():
            with app.state.eval_jobs_lock:
                app.state.eval_jobs[job_id]["status"] = "running"
            try:
                dataset = load_eval_dataset(dataset_path)
                models = [(spec.name, _chat_for_spec(spec)) for spec in body.models]
                report = engine.run_eval(dataset, models)
                reports_dir = engine.data_dir / "reports"
                reports_dir.mkdir(parents=True, exist_ok=True)
                (reports_dir / f"{job_id}.json").write_text(report.to_json(), encoding="utf-8")
                (reports_dir / f"{job_id}.txt").write_text(render_score_table(report),
                                                           encoding="utf-8")
                with app.state.eval_jobs_lock:
                    app.state.eval_jobs[job_id].update(status="done", report=job_id)
            except (PatientRagError, ValueError) as exc:
                with app.state.eval_jobs_lock:
                    app.state.eval_jobs[job_id].update(status="failed", error=str(exc))

        threading.Thread(target=run_job, daemon=True).start()
        return schemas.EvalRunResponse(job_id=job_id)

    @app.get("/eval/jobs/{job_id}", response_model=schemas.EvalJobStatus)
    def eval_status(job_id: str):
        with app.state.eval_jobs_lock:
            job = app.state.eval_jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown eval job {job_id!r}")
        report_ref = f"/eval/jobs/{job_id}/report" if job["status"] == "done" else None
        return schemas.EvalJobStatus(job_id=job_id, status=job["status"],
                                     report_ref=report_ref, error=job["error"])

    @app.get("/eval/jobs/{job_id}/report")
    def eval_report(job_id: str):
        path = engine.data_dir / "reports" / f"{job_id}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no report for job {job_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    # ------------------------------------------------------------------

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        providers = {
            "embedding": _provider_health(engine.config.embedding.mode,
                                           engine.config.embedding.api_key_env),
            "generation": _provider_health(engine.config.generation.mode,
                                           engine.config.generation.api_key_env),
        }
        degraded = any(state == "unconfigured" for state in providers.values())
        return schemas.HealthResponse(
            status="degraded" if degraded else "ok",
            version=__version__,
            providers=providers,
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _evidence_model(evidence) -> schemas.EvidenceModel:
    return schemas.EvidenceModel(
        origin=evidence.origin,
        entry_id=evidence.entry_id,
        text=evidence.text,
        original_text=evidence.original_text,
        score=evidence.score,
        compressed=evidence.compressed,
        dropped=evidence.dropped,
        fallback=evidence.fallback,
        metadata=evidence.metadata,
    )


def _provider_health(mode: str, api_key_env: str) -> str:
    if mode in ("mock", "replay"):
        return "ok"
    return "configured" if api_key_for(api_key_env) else "unconfigured"


def _resolve_dataset(engine: Engine, ref: str) -> Path | None:
    candidates = [Path(ref), engine.data_dir / ref]
    for path in candidates:
        if path.is_file():
            return path
    return None


def _chat_for_spec(spec: schemas.EvalModelSpec):
    if spec.mode == "mock":
        return MockChatProvider(model_name=spec.model_name or spec.name)
    if spec.mode == "replay":
        if not spec.fixture:
            raise ConfigError(f"model {spec.name!r}: replay mode requires a fixture path")
        return ReplayChatProvider(spec.fixture)
    if spec.mode == "live":
        if not spec.endpoint:
            raise ConfigError(f"model {spec.name!r}: live mode requires an endpoint")
        config = GenerationProviderConfig(endpoint=spec.endpoint,
                                          model_name=spec.model_name or spec.name)
        return HTTPChatProvider(config)
    raise ConfigError(f"model {spec.name!r}: unknown mode {spec.mode!r}")
