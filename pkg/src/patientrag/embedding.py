"""Embedding provider port, vector validation, and cosine similarity.

All retrieval and the similarity metric sit on top of this module. Providers
come in four flavors: a live HTTP client speaking the common ``/embeddings``
request shape, a deterministic offline mock, a replay provider serving
previously recorded vectors, and a recording wrapper that produces replay
fixtures.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .errors import DimensionMismatchError, ProtocolError, ProviderError, ZeroVectorError


def validate_vector(values) -> np.ndarray:
    """Coerce provider output to a finite float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding vector contains non-finite values")
    return vec


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Vectors are stored un-normalized, so normalization happens here. Zero-norm
    inputs and dimension mismatches are domain errors rather than NaNs.
    """
    va = validate_vector(a)
    vb = validate_vector(b)
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatchError(
            f"cannot compare vectors of dimension {va.shape[0]} and {vb.shape[0]}"
        )
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero-norm vectors")
    value = float(np.dot(va, vb) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def mock_embedding(text: str, seed: int = 0, dimension: int = 256) -> np.ndarray:
    """Deterministic offline embedding via signed feature hashing.

    Each lowercase token is hashed (sha256 over ``seed:token``) to a bucket and
    a sign, contributing weight max(1, len(token) - 2) so short filler words
    carry less mass than content words; the accumulated vector is
    L2-normalized. Equal texts map to equal vectors, token overlap drives
    similarity, and the construction depends only on hashlib, so it is stable
    across platforms and releases. A text with no tokens (or a pathological
    accumulation that cancels to zero) falls back to a one-hot vector derived
    from the whole text.
    """
    if dimension < 2:
        raise ValueError(f"mock embedding dimension must be >= 2, got {dimension}")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        tokens = [text]
    vec = np.zeros(dimension, dtype=np.float64)
    for token in tokens:
        digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dimension
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign * max(1, len(token) - 2)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        digest = hashlib.sha256(f"{seed}|{text}".encode("utf-8")).digest()
        vec[int.from_bytes(digest[:4], "big") % dimension] = 1.0
        norm = 1.0
    return vec / norm


@dataclass
class EmbeddingProviderConfig:
    endpoint: str = ""
    model_name: str = "text-embedding-ada-002"
    batch_size: int = 100
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_initial: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class EmbeddingProvider(ABC):
    """Port for text-to-vector providers.

    Implementations must be safe to call from concurrent requests. ``embed``
    receives at most ``batch_size`` texts; callers go through ``embed_batch``
    which handles partitioning.
    """

    model_name: str = "unknown"
    batch_size: int = 100

    @abstractmethod
    def embed(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class MockEmbeddingProvider(EmbeddingProvider):
    """Stateless deterministic provider backed by :func:`mock_embedding`."""

    def __init__(self, seed: int = 0, dimension: int = 256, batch_size: int = 64,
                 model_name: str = "mock-embedding"):
        self.seed = seed
        self.dimension = dimension
        self.batch_size = batch_size
        self.model_name = model_name

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        return [mock_embedding(t, self.seed, self.dimension) for t in texts]


class HTTPEmbeddingProvider(EmbeddingProvider):
    """Client for an OpenAI-compatible embeddings endpoint.

    Retries transport failures and 5xx replies with exponential backoff
    (default 3 attempts starting at 500 ms).
    """

    def __init__(self, config: EmbeddingProviderConfig, api_key: str | None = None):
        if not config.endpoint:
            raise ValueError("HTTP embedding provider requires an endpoint")
        self.config = config
        self.model_name = config.model_name
        self.batch_size = config.batch_size
        self._api_key = api_key
        self._client = httpx.Client(timeout=config.timeout)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {"model": self.config.model_name, "input": texts}
        url = self.config.endpoint.rstrip("/") + "/embeddings"
        body = _post_with_retries(
            self._client, url, payload, headers,
            max_attempts=self.config.max_attempts,
            backoff_initial=self.config.backoff_initial,
        )
        try:
            items = sorted(body["data"], key=lambda item: item["index"])
            vectors = [validate_vector(item["embedding"]) for item in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProtocolError(
                f"provider returned {len(vectors)} vectors for {len(texts)} inputs"
            )
        return vectors


def _post_with_retries(client, url, payload, headers, *, max_attempts, backoff_initial):
    delay = backoff_initial
    last_error = None
    for attempt in range(1, max_attempts + 1):
        try:
            response = client.post(url, json=payload, headers=headers)
            if response.status_code >= 500:
                last_error = ProviderError(f"{url} returned {response.status_code}")
            elif response.status_code >= 400:
                raise ProviderError(f"{url} returned {response.status_code}: {response.text[:200]}")
            else:
                return response.json()
        except httpx.HTTPError as exc:
            last_error = ProviderError(f"transport failure calling {url}: {exc}")
        if attempt < max_attempts:
            time.sleep(delay)
            delay *= 2
    raise last_error


def _replay_key(model_name: str, text: str) -> str:
    return hashlib.sha256(f"{model_name}\x1f{text}".encode("utf-8")).hexdigest()


class ReplayEmbeddingProvider(EmbeddingProvider):
    """Serves vectors recorded earlier, keyed by (model, text) hash.

    Unknown requests are an error on purpose: replay mode exists to guarantee
    that a run is fully covered by its fixture.
    """

    def __init__(self, fixture_path, model_name: str | None = None, batch_size: int = 100):
        self._vectors: dict[str, np.ndarray] = {}
        models = set()
        path = Path(fixture_path)
        if not path.exists():
            raise ProviderError(f"embedding replay fixture not found: {path}")
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._vectors[record["key"]] = validate_vector(record["vector"])
                models.add(record["model"])
        if model_name is None:
            if len(models) == 1:
                model_name = models.pop()
            else:
                raise ProviderError(
                    f"fixture {path} contains {len(models)} models; pass model_name explicitly"
                )
        self.model_name = model_name
        self.batch_size = batch_size
        self._path = path

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            key = _replay_key(self.model_name, text)
            if key not in self._vectors:
                raise ProviderError(
                    f"no recorded embedding for request {key} (model {self.model_name!r}, "
                    f"text starts {text[:60]!r}) in {self._path}"
                )
            out.append(self._vectors[key])
        return out


class RecordingEmbeddingProvider(EmbeddingProvider):
    """Wraps a provider and appends every (request, vector) pair to a fixture file."""

    def __init__(self, inner: EmbeddingProvider, fixture_path):
        self.inner = inner
        self.model_name = inner.model_name
        self.batch_size = inner.batch_size
        self._path = Path(fixture_path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._seen: set[str] = set()

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = self.inner.embed(texts)
        with self._path.open("a", encoding="utf-8") as fh:
            for text, vec in zip(texts, vectors):
                key = _replay_key(self.model_name, text)
                if key in self._seen:
                    continue
                self._seen.add(key)
                fh.write(json.dumps(
                    {"key": key, "model": self.model_name, "text": text, "vector": vec.tolist()},
                    sort_keys=True,
                ) + "\n")
        return vectors


def embed_batch(texts: list[str], provider: EmbeddingProvider) -> list[np.ndarray]:
    """Embed texts in provider-sized batches, preserving order.

    Larger lists are partitioned internally; all output vectors must share one
    dimension (a provider drifting across batches is a protocol error).
    """
    for i, text in enumerate(texts):
        if not text:
            raise ValueError(f"text at position {i} is empty; embeddings require non-empty input")
    vectors: list[np.ndarray] = []
    size = max(1, provider.batch_size)
    for offset in range(0, len(texts), size):
        batch = texts[offset:offset + size]
        result = provider.embed(batch)
        if len(result) != len(batch):
            raise ProtocolError(
                f"provider returned {len(result)} vectors for a batch of {len(batch)}"
            )
        vectors.extend(validate_vector(v) for v in result)
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise ProtocolError(f"provider returned mixed dimensions across batches: {sorted(dims)}")
    return vectors
