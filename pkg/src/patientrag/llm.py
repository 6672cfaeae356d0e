"""Chat-completion provider port: live HTTP, mock, scripted, and replay.

The mock understands the engine's own prompt shapes well enough to run the
whole pipeline offline and deterministically; it is not a language model, just
rules. Precise test scenarios use the scripted/queued providers instead.
"""

from __future__ import annotations

import hashlib
import json
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import httpx

from .embedding import _post_with_retries
from .errors import ProtocolError, ProviderError


@dataclass
class GenerationProviderConfig:
    endpoint: str = ""
    model_name: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout: float = 60.0
    max_attempts: int = 3
    backoff_initial: float = 0.5

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class ChatProvider(ABC):
    """Port for chat-completion providers. Implementations must be thread-safe."""

    model_name: str = "unknown"

    @abstractmethod
    def complete(self, messages: list[dict[str, str]], *, temperature: float = 0.0,
                 max_tokens: int = 1024) -> str:
        raise NotImplementedError


def request_key(model_name: str, messages: list[dict[str, str]], temperature: float,
                max_tokens: int) -> str:
    canonical = json.dumps(
        {"model": model_name, "messages": messages, "temperature": temperature,
         "max_tokens": max_tokens},
        sort_keys=True, ensure_ascii=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HTTPChatProvider(ChatProvider):
    """Client for an OpenAI-compatible chat-completions endpoint with retries."""

    def __init__(self, config: GenerationProviderConfig, api_key: str | None = None):
        if not config.endpoint:
            raise ValueError("HTTP chat provider requires an endpoint")
        self.config = config
        self.model_name = config.model_name
        self._api_key = api_key
        self._client = httpx.Client(timeout=config.timeout)

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        body = _post_with_retries(
            self._client, url, payload, headers,
            max_attempts=self.config.max_attempts,
            backoff_initial=self.config.backoff_initial,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError("chat response content is not text")
        return content


class ScriptedChatProvider(ChatProvider):
    """Returns a canned reply for the first rule whose marker appears in the prompt.

    ``rules`` is a list of (marker_substring, reply). ``fallback`` may be a
    string, another provider, or None (unmatched prompts then error).
    """

    def __init__(self, rules: list[tuple[str, str]], fallback=None,
                 model_name: str = "scripted-chat"):
        self.rules = list(rules)
        self.fallback = fallback
        self.model_name = model_name

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        prompt = "\n".join(m.get("content", "") for m in messages)
        for marker, reply in self.rules:
            if marker in prompt:
                return reply
        if isinstance(self.fallback, ChatProvider):
            return self.fallback.complete(messages, temperature=temperature,
                                          max_tokens=max_tokens)
        if isinstance(self.fallback, str):
            return self.fallback
        raise ProviderError(f"scripted chat has no rule for prompt starting {prompt[:80]!r}")


class QueueChatProvider(ChatProvider):
    """Pops replies in order; useful for exercising re-prompt paths."""

    def __init__(self, replies: list[str], model_name: str = "queued-chat"):
        self._replies = list(replies)
        self.model_name = model_name
        self.requests: list[list[dict[str, str]]] = []

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        self.requests.append(messages)
        if not self._replies:
            raise ProviderError("queued chat provider ran out of replies")
        return self._replies.pop(0)


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")
_WORD_RE = re.compile(r"[a-z0-9]+")


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_RE.split(text.strip()) if s.strip()]


def _content_words(text: str, min_len: int = 4) -> list[str]:
    seen = []
    for w in _WORD_RE.findall(text.lower()):
        if len(w) >= min_len and w not in seen:
            seen.append(w)
    return seen


def _after(prompt: str, marker: str) -> str:
    idx = prompt.find(marker)
    return prompt[idx + len(marker):].strip() if idx >= 0 else ""


def _between(prompt: str, start: str, end: str) -> str:
    text = _after(prompt, start)
    idx = text.find(end)
    return text[:idx].strip() if idx >= 0 else text


class MockChatProvider(ChatProvider):
    """Deterministic rule-based stand-in that recognizes the engine's prompts.

    Annotation prompts get a three-heading summary sliced from the transcript,
    compression prompts get verbatim sentences that share a content word with
    the question, claim prompts get sentence-level claims and overlap-based
    verdicts, and answer prompts get a templated reply quoting the retrieved
    context. Anything unrecognized gets a stable digest string.
    """

    def __init__(self, model_name: str = "mock-chat"):
        self.model_name = model_name

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        prompt = "\n".join(m.get("content", "") for m in messages)
        if "create a detailed summary by categories" in prompt:
            return self._annotate(_after(prompt, "Medical Transcript:"))
        if "NO_RELEVANT_CONTENT" in prompt:
            return self._compress(_between(prompt, "Question:", "Document:"),
                                  _after(prompt, "Document:"))
        if "atomic factual claims" in prompt:
            return self._decompose(_after(prompt, "Text:"))
        if "one verdict per line" in prompt:
            return self._classify(_between(prompt, "Statements:", "Reference:"),
                                  _after(prompt, "Reference:"))
        if "numbered list, one question per line" in prompt:
            return self._questions(prompt)
        if "Patient Unique Context:" in prompt:
            return self._answer(prompt)
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        return f"[mock-reply {digest}]"

    def _annotate(self, transcript: str) -> str:
        sentences = _sentences(transcript)
        if not sentences:
            sentences = [transcript.strip() or "No content provided."]
        third = max(1, len(sentences) // 3)
        history = " ".join(sentences[:third])
        diagnostics = " ".join(sentences[third:2 * third]) or "Not stated in transcript."
        meds = " ".join(sentences[2 * third:]) or "Not stated in transcript."
        return (
            "Patient history and symptoms:\n- " + history + "\n\n"
            "Executed diagnostics:\n- " + diagnostics + "\n\n"
            "Prescribed medications and further instructions:\n- " + meds + "\n"
        )

    def _compress(self, query: str, document: str) -> str:
        words = set(_content_words(query))
        kept = [s for s in _sentences(document) if words & set(_content_words(s))]
        if not kept:
            return "NO_RELEVANT_CONTENT"
        return " ".join(kept)

    def _decompose(self, text: str) -> str:
        sentences = _sentences(text)
        if not sentences:
            return "NO_CLAIMS"
        return "\n".join(sentences)

    def _classify(self, statements_block: str, reference: str) -> str:
        ref_words = set(_content_words(reference))
        verdicts = []
        for line in statements_block.splitlines():
            line = line.strip()
            if not line:
                continue
            words = _content_words(line)
            hits = sum(1 for w in words if w in ref_words)
            supported = bool(words) and hits * 2 >= len(words)
            verdicts.append("SUPPORTED" if supported else "UNSUPPORTED")
        return "\n".join(verdicts)

    def _questions(self, prompt: str) -> str:
        match = re.search(r"Write (\d+) questions", prompt)
        n = int(match.group(1)) if match else 2
        context = _after(prompt, "Patient context:")
        words = _content_words(context) or ["condition"]
        lines = []
        for i in range(n):
            word = words[i % len(words)]
            lines.append(f"{i + 1}. What should the patient know about {word}?")
        return "\n".join(lines)

    def _answer(self, prompt: str) -> str:
        question = _after(prompt, "Question:")
        knowledge = _between(prompt, "Medical Knowledge Retrieval:", "Question:")
        first_line = next((ln.strip() for ln in knowledge.splitlines() if ln.strip()), "")
        return (
            f"Regarding your question \"{question}\": based on the retrieved context, "
            f"{first_line or 'no supporting evidence was retrieved.'}"
        )


class ReplayChatProvider(ChatProvider):
    """Serves previously recorded completions keyed by a request hash."""

    def __init__(self, fixture_path, model_name: str | None = None):
        self._replies: dict[str, str] = {}
        models = set()
        path = Path(fixture_path)
        if not path.exists():
            raise ProviderError(f"chat replay fixture not found: {path}")
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._replies[record["key"]] = record["response"]
                models.add(record["model"])
        if model_name is None:
            if len(models) == 1:
                model_name = models.pop()
            else:
                raise ProviderError(
                    f"fixture {path} contains {len(models)} models; pass model_name explicitly"
                )
        self.model_name = model_name
        self._path = path

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        key = request_key(self.model_name, messages, temperature, max_tokens)
        if key not in self._replies:
            preview = messages[-1].get("content", "")[:80] if messages else ""
            raise ProviderError(
                f"no recorded completion for request {key} (prompt starts {preview!r}) "
                f"in {self._path}; regenerate the fixture if prompts changed"
            )
        return self._replies[key]


class RecordingChatProvider(ChatProvider):
    """Wraps a provider and appends request/response transcripts to a fixture file."""

    def __init__(self, inner: ChatProvider, fixture_path):
        self.inner = inner
        self.model_name = inner.model_name
        self._path = Path(fixture_path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._seen: set[str] = set()

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        response = self.inner.complete(messages, temperature=temperature, max_tokens=max_tokens)
        key = request_key(self.model_name, messages, temperature, max_tokens)
        if key not in self._seen:
            self._seen.add(key)
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "key": key,
                    "model": self.model_name,
                    "messages": messages,
                    "temperature": temperature,
                    "max_tokens": max_tokens,
                    "response": response,
                }, sort_keys=True) + "\n")
        return response


class FailingChatProvider(ChatProvider):
    """Always raises; used to exercise staged failure paths."""

    def __init__(self, message: str = "provider forced down", model_name: str = "failing-chat"):
        self.model_name = model_name
        self._message = message

    def complete(self, messages, *, temperature=0.0, max_tokens=1024) -> str:
        raise ProviderError(self._message)
