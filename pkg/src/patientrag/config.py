"""Engine configuration: one YAML file plus environment variables for secrets.

Every setting has a working offline default (mock providers, ./data), so the
CLI and service run without a config file; a file overrides any subset.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import KNOWLEDGE_CHUNKING, PATIENT_CHUNKING, ChunkingConfig
from .embedding import EmbeddingProviderConfig
from .errors import ConfigError
from .llm import GenerationProviderConfig
from .retrieval import RetrievalConfig

MODES = ("live", "mock", "replay")

DEFAULT_EMBEDDING_KEY_ENV = "PATIENTRAG_EMBEDDING_API_KEY"
DEFAULT_GENERATION_KEY_ENV = "PATIENTRAG_GENERATION_API_KEY"


@dataclass
class EmbeddingSettings:
    mode: str = "mock"
    provider: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    dimension: int = 256          # mock only
    seed: int = 0                 # mock only
    fixture: str | None = None    # replay only
    api_key_env: str = DEFAULT_EMBEDDING_KEY_ENV


@dataclass
class GenerationSettings:
    mode: str = "mock"
    provider: GenerationProviderConfig = field(default_factory=GenerationProviderConfig)
    fixture: str | None = None
    api_key_env: str = DEFAULT_GENERATION_KEY_ENV


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8765
    cors_allow_origins: list[str] = field(default_factory=list)
    request_timeout_s: float = 120.0
    max_concurrent_pipelines: int = 4
    max_transcript_bytes: int = 1_000_000

    def __post_init__(self):
        if self.max_concurrent_pipelines < 1:
            raise ConfigError("max_concurrent_pipelines must be >= 1")


@dataclass
class EngineConfig:
    data_dir: Path = Path("data")
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    patient_chunking: ChunkingConfig = field(default_factory=lambda: ChunkingConfig(
        PATIENT_CHUNKING.chunk_size, PATIENT_CHUNKING.overlap))
    knowledge_chunking: ChunkingConfig = field(default_factory=lambda: ChunkingConfig(
        KNOWLEDGE_CHUNKING.chunk_size, KNOWLEDGE_CHUNKING.overlap))
    prompts_dir: Path | None = None
    heading_aliases_extra: dict[str, list[str]] = field(default_factory=dict)
    correctness_weight: float = 0.75
    eval_parallelism: int = 1
    deterministic_traces: bool = False
    service: ServiceSettings = field(default_factory=ServiceSettings)


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return dict(value)


def _take(section: dict, key: str, default):
    return section.pop(key, default)


def _reject_unknown(section: dict, name: str):
    if section:
        raise ConfigError(f"unknown keys in config section {name!r}: {sorted(section)}")


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> EngineConfig:
    """Build an EngineConfig from an optional YAML file.

    ``overrides`` (e.g. from CLI flags) wins over the file; unknown keys are
    rejected so typos fail loudly. API keys are never read from the file, only
    from the environment variables the config names.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping at top level")
        data = loaded
    if overrides:
        data = _deep_merge(data, overrides)

    known_top = {"data_dir", "embedding", "generation", "retrieval", "chunking",
                 "prompts_dir", "annotator", "evaluation", "tracing", "service"}
    unknown_top = set(data) - known_top
    if unknown_top:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown_top)}")

    emb = _section(data, "embedding")
    emb_mode = _take(emb, "mode", "mock")
    if emb_mode not in MODES:
        raise ConfigError(f"embedding.mode must be one of {MODES}, got {emb_mode!r}")
    try:
        embedding = EmbeddingSettings(
            mode=emb_mode,
            provider=EmbeddingProviderConfig(
                endpoint=_take(emb, "endpoint", ""),
                model_name=_take(emb, "model_name", "text-embedding-ada-002"),
                batch_size=int(_take(emb, "batch_size", 100)),
                timeout=float(_take(emb, "timeout", 30.0)),
                max_attempts=int(_take(emb, "max_attempts", 3)),
                backoff_initial=float(_take(emb, "backoff_initial", 0.5)),
            ),
            dimension=int(_take(emb, "dimension", 256)),
            seed=int(_take(emb, "seed", 0)),
            fixture=_take(emb, "fixture", None),
            api_key_env=_take(emb, "api_key_env", DEFAULT_EMBEDDING_KEY_ENV),
        )
    except ValueError as exc:
        raise ConfigError(f"embedding config: {exc}") from exc
    _reject_unknown(emb, "embedding")

    gen = _section(data, "generation")
    gen_mode = _take(gen, "mode", "mock")
    if gen_mode not in MODES:
        raise ConfigError(f"generation.mode must be one of {MODES}, got {gen_mode!r}")
    try:
        generation = GenerationSettings(
            mode=gen_mode,
            provider=GenerationProviderConfig(
                endpoint=_take(gen, "endpoint", ""),
                model_name=_take(gen, "model_name", "gpt-3.5-turbo"),
                temperature=float(_take(gen, "temperature", 0.0)),
                max_output_tokens=int(_take(gen, "max_output_tokens", 1024)),
                timeout=float(_take(gen, "timeout", 60.0)),
                max_attempts=int(_take(gen, "max_attempts", 3)),
                backoff_initial=float(_take(gen, "backoff_initial", 0.5)),
            ),
            fixture=_take(gen, "fixture", None),
            api_key_env=_take(gen, "api_key_env", DEFAULT_GENERATION_KEY_ENV),
        )
    except ValueError as exc:
        raise ConfigError(f"generation config: {exc}") from exc
    _reject_unknown(gen, "generation")

    ret = _section(data, "retrieval")
    try:
        retrieval = RetrievalConfig(
            k_patient=int(_take(ret, "k_patient", 3)),
            k_knowledge=int(_take(ret, "k_knowledge", 3)),
            compression_enabled=bool(_take(ret, "compression_enabled", True)),
            compress_patient_side=bool(_take(ret, "compress_patient_side", False)),
            min_score=_take(ret, "min_score", None),
        )
    except ValueError as exc:
        raise ConfigError(f"retrieval config: {exc}") from exc
    _reject_unknown(ret, "retrieval")

    chunking = _section(data, "chunking")
    patient_chunking = _chunking_from(
        _section(chunking, "patient"), PATIENT_CHUNKING, "chunking.patient")
    knowledge_chunking = _chunking_from(
        _section(chunking, "knowledge"), KNOWLEDGE_CHUNKING, "chunking.knowledge")
    chunking.pop("patient", None)
    chunking.pop("knowledge", None)
    _reject_unknown(chunking, "chunking")

    annotator = _section(data, "annotator")
    aliases_extra = _take(annotator, "heading_aliases_extra", {}) or {}
    _reject_unknown(annotator, "annotator")

    evaluation = _section(data, "evaluation")
    weight = float(_take(evaluation, "correctness_weight", 0.75))
    parallelism = int(_take(evaluation, "parallelism", 1))
    _reject_unknown(evaluation, "evaluation")

    tracing = _section(data, "tracing")
    deterministic = bool(_take(tracing, "deterministic", False))
    _reject_unknown(tracing, "tracing")

    svc = _section(data, "service")
    service = ServiceSettings(
        host=_take(svc, "host", "127.0.0.1"),
        port=int(_take(svc, "port", 8765)),
        cors_allow_origins=list(_take(svc, "cors_allow_origins", []) or []),
        request_timeout_s=float(_take(svc, "request_timeout_s", 120.0)),
        max_concurrent_pipelines=int(_take(svc, "max_concurrent_pipelines", 4)),
        max_transcript_bytes=int(_take(svc, "max_transcript_bytes", 1_000_000)),
    )
    _reject_unknown(svc, "service")

    prompts_dir = data.get("prompts_dir")
    return EngineConfig(
        data_dir=Path(data.get("data_dir", "data")),
        embedding=embedding,
        generation=generation,
        retrieval=retrieval,
        patient_chunking=patient_chunking,
        knowledge_chunking=knowledge_chunking,
        prompts_dir=Path(prompts_dir) if prompts_dir else None,
        heading_aliases_extra={k: list(v) for k, v in dict(aliases_extra).items()},
        correctness_weight=weight,
        eval_parallelism=parallelism,
        deterministic_traces=deterministic,
        service=service,
    )


def _chunking_from(section: dict, default: ChunkingConfig, name: str) -> ChunkingConfig:
    try:
        cfg = ChunkingConfig(
            chunk_size=int(_take(section, "chunk_size", default.chunk_size)),
            overlap=int(_take(section, "overlap", default.overlap)),
        )
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    _reject_unknown(section, name)
    return cfg


def _deep_merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def api_key_for(env_name: str) -> str | None:
    return os.environ.get(env_name) or None
