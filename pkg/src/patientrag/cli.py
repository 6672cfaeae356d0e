"""Operator CLI: a thin client of the engine library.

Exit codes: 0 success, 1 unexpected failure, 2 usage error (click), 3 config
error, 4 not found, 5 provider failure, 6 validation/parse failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import yaml

from . import __version__
from .config import load_config
from .engine import Engine
from .errors import (
    AnnotationError,
    AnnotationParseError,
    ConfigError,
    IngestionError,
    MetricError,
    PatientNotFoundError,
    PipelineStageError,
    ProviderError,
    QuestionGenerationError,
    StoreParseError,
    StoreVersionError,
)
from .evaluation import (
    fleiss_kappa,
    load_eval_dataset,
    load_rating_sheet,
    render_agreement_table,
    render_score_table,
)
from .llm import MockChatProvider

EXIT_UNEXPECTED = 1
EXIT_CONFIG = 3
EXIT_NOT_FOUND = 4
EXIT_PROVIDER = 5
EXIT_VALIDATION = 6


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, PipelineStageError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, PatientNotFoundError):
        return EXIT_NOT_FOUND
    if isinstance(exc, ProviderError):
        return EXIT_PROVIDER
    if isinstance(exc, (AnnotationError, AnnotationParseError, IngestionError, MetricError,
                        QuestionGenerationError, StoreParseError, StoreVersionError,
                        ValueError)):
        return EXIT_VALIDATION
    return EXIT_UNEXPECTED


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(_exit_code_for(exc))


def _build_engine(ctx: click.Context) -> Engine:
    params = ctx.obj
    overrides: dict = {}
    if params["mode"]:
        overrides["embedding"] = {"mode": params["mode"]}
        overrides["generation"] = {"mode": params["mode"]}
    if params["data_dir"]:
        overrides["data_dir"] = params["data_dir"]
    config = load_config(params["config"], overrides)
    return Engine(config)


def _emit(structured: bool, payload: dict, text: str) -> None:
    if structured:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(text)


format_option = click.option(
    "--format", "output_format", type=click.Choice(["text", "structured"]),
    default="text", show_default=True, help="Human-readable text or machine-readable JSON.",
)


@click.group()
@click.version_option(version=__version__, prog_name="patientrag")
@click.option("--config", type=click.Path(), default=None, help="Path to a YAML config file.")
@click.option("--mode", type=click.Choice(["live", "mock", "replay"]), default=None,
              help="Override both provider modes for this invocation.")
@click.option("--data-dir", type=click.Path(), default=None, help="Override the data directory.")
@click.pass_context
def main(ctx, config, mode, data_dir):
    """Patient-centric retrieval-augmented Q&A over transcripts and medical texts."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, mode=mode, data_dir=data_dir)


@main.command("ingest-knowledge")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@format_option
@click.pass_context
def ingest_knowledge(ctx, directory, output_format):
    """Ingest every .txt/.md file in DIRECTORY into the knowledge store.

    A sidecar file named <file>.meta.yaml supplies per-document metadata.
    """
    try:
        engine = _build_engine(ctx)
        docs = []
        for path in sorted(Path(directory).iterdir()):
            if path.suffix not in (".txt", ".md") or path.name.endswith(".meta.yaml"):
                continue
            metadata = {}
            sidecar = path.with_name(path.name + ".meta.yaml")
            if sidecar.exists():
                loaded = yaml.safe_load(sidecar.read_text(encoding="utf-8")) or {}
                metadata = {str(k): str(v) for k, v in loaded.items()}
            docs.append({
                "text": path.read_text(encoding="utf-8"),
                "title": metadata.pop("title", path.stem),
                "source": metadata.pop("source", "medical_textbook"),
                "format": "markdown" if path.suffix == ".md" else "plain_text",
                "metadata": metadata,
                "doc_id": path.stem,
            })
        if not docs:
            raise IngestionError(f"no .txt or .md files found in {directory}")
        results = engine.ingest_knowledge(docs)
        ok = [r for r in results if r.status == "ok"]
        failed = [r for r in results if r.status != "ok"]
        payload = {"documents": len(ok), "chunks": sum(r.chunks for r in ok),
                   "results": [asdict(r) for r in results]}
        lines = [f"ingested {len(ok)} documents ({payload['chunks']} chunks)"]
        lines += [f"  FAILED {r.title or r.document_id}: {r.error}" for r in failed]
        _emit(output_format == "structured", payload, "\n".join(lines))
        if failed:
            sys.exit(EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001 - single exit-code funnel
        _fail(exc)


@main.command("add-patient")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--patient-id", default=None, help="Explicit id; defaults to a content hash.")
@click.option("--meta", "meta_pairs", multiple=True, help="Metadata as key=value (repeatable).")
@format_option
@click.pass_context
def add_patient(ctx, file, patient_id, meta_pairs, output_format):
    """Annotate and index the transcript in FILE."""
    try:
        engine = _build_engine(ctx)
        metadata = {}
        for pair in meta_pairs:
            if "=" not in pair:
                raise ValueError(f"--meta expects key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            metadata[key] = value
        sidecar = Path(file).with_name(Path(file).name + ".meta.yaml")
        if sidecar.exists():
            loaded = yaml.safe_load(sidecar.read_text(encoding="utf-8")) or {}
            for key, value in loaded.items():
                metadata.setdefault(str(key), str(value))
        transcript = Path(file).read_text(encoding="utf-8")
        pid, context = engine.add_patient(transcript, patient_id=patient_id, metadata=metadata)
        payload = {"patient_id": pid, "context": {
            "history_and_symptoms": context.history_and_symptoms,
            "executed_diagnostics": context.executed_diagnostics,
            "medications_and_instructions": context.medications_and_instructions,
        }}
        _emit(output_format == "structured", payload,
              f"patient {pid} annotated and indexed\n\n{context.serialize()}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("ask")
@click.argument("patient_id")
@click.argument("question")
@format_option
@click.pass_context
def ask(ctx, patient_id, question, output_format):
    """Answer QUESTION for PATIENT_ID and print the evidence."""
    try:
        if not question.strip():
            raise ValueError("question must be non-empty")
        engine = _build_engine(ctx)
        response = engine.ask(patient_id, question)
        payload = {
            "patient_id": response.patient_id,
            "query": response.query,
            "answer": response.answer,
            "model_name": response.model_name,
            "citations": response.citations,
            "trace_id": response.trace_id,
            "patient_evidence": [asdict(e) for e in response.patient_evidence],
            "medical_evidence": [asdict(e) for e in response.medical_evidence],
        }
        lines = [response.answer, "", "Evidence:"]
        for e in response.patient_evidence + response.medical_evidence:
            flags = []
            if e.compressed:
                flags.append("compressed")
            if e.dropped:
                flags.append("dropped")
            if e.fallback:
                flags.append("fallback")
            suffix = f" [{', '.join(flags)}]" if flags else ""
            lines.append(f"  {e.origin:17s} {e.entry_id:24s} score={e.score:.4f}{suffix}")
        _emit(output_format == "structured", payload, "\n".join(lines))
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("gen-questions")
@click.argument("patient_id")
@click.option("-n", "count", default=2, show_default=True, help="How many questions.")
@format_option
@click.pass_context
def gen_questions(ctx, patient_id, count, output_format):
    """Generate synthetic patient questions from the stored context."""
    try:
        engine = _build_engine(ctx)
        questions = engine.generate_questions(patient_id, count)
        payload = {"patient_id": patient_id,
                   "questions": [asdict(q) for q in questions]}
        lines = []
        for i, q in enumerate(questions, start=1):
            mark = "" if q.context_overlap else "  (no context overlap)"
            lines.append(f"{i}. {q.text}{mark}")
        _emit(output_format == "structured", payload, "\n".join(lines))
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("eval")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--models", "model_names", required=True,
              help="Comma-separated generation model names (mock providers unless live mode).")
@format_option
@click.pass_context
def eval_command(ctx, dataset, model_names, output_format):
    """Run the metric suite over DATASET for each model and print the report."""
    try:
        engine = _build_engine(ctx)
        names = [n.strip() for n in model_names.split(",") if n.strip()]
        if not names:
            raise ValueError("at least one model name is required")
        if engine.config.generation.mode == "mock":
            models = [(name, MockChatProvider(model_name=name)) for name in names]
        else:
            models = [(name, engine.chat) for name in names]
        rows = load_eval_dataset(dataset)
        report = engine.run_eval(rows, models)
        _emit(output_format == "structured", report.to_dict(), render_score_table(report))
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("kappa")
@click.argument("ratings_file", type=click.Path(exists=True, dir_okay=False))
@format_option
@click.pass_context
def kappa_command(ctx, ratings_file, output_format):
    """Compute inter-rater agreement from a (item, rater, category) sheet."""
    try:
        matrix, items, categories = load_rating_sheet(ratings_file)
        kappa, stderr = fleiss_kappa(matrix)
        payload = {"kappa": kappa, "standard_error": stderr,
                   "items": len(items), "raters": int(matrix[0].sum()),
                   "categories": categories}
        _emit(output_format == "structured", payload,
              render_agreement_table(kappa, stderr, len(items), int(matrix[0].sum())))
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("serve")
@click.option("--host", default=None, help="Bind address (defaults to config).")
@click.option("--port", default=None, type=int, help="Bind port (defaults to config).")
@click.option("--ui-dir", default=None, type=click.Path(), help="Serve a built UI from this directory at /ui.")
@click.pass_context
def serve(ctx, host, port, ui_dir):
    """Run the HTTP service."""
    try:
        import uvicorn

        from .service import create_app

        engine = _build_engine(ctx)
        app = create_app(engine, ui_dir=ui_dir)
        uvicorn.run(
            app,
            host=host or engine.config.service.host,
            port=port or engine.config.service.port,
        )
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


if __name__ == "__main__":
    main()
