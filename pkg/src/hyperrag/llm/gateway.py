"""Model gateway: completions, embeddings, retries and request limiting."""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

import httpx
import numpy as np

from ..corpus import tokenize
from ..errors import ConfigurationError, IntegrityError, TransportError
from .prompts import TemplateId, render_prompt

logger = logging.getLogger(__name__)

API_KEY_ENV = "HYPERRAG_API_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model: str = "mock"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    # Carried for offline backends and call capture; never sent over the wire.
    template_id: str | None = None
    bindings: Mapping[str, object] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: Usage
    latency: float


class TransientError(Exception):
    """Retryable backend failure (network error, 429, 5xx)."""


class CompletionBackend(Protocol):
    def complete(self, req: CompletionRequest) -> tuple[str, Usage]: ...


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class OpenAICompatibleBackend:
    """Chat-completion and embedding client for an OpenAI-style JSON API."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        embedding_model: str = "text-embedding-3-small",
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise ConfigurationError(f"no API key: set {API_KEY_ENV}")
        self.base_url = base_url.rstrip("/")
        self.embedding_model = embedding_model
        self.client = client or httpx.Client(timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self.client.post(
                f"{self.base_url}{path}",
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
        except httpx.TransportError as exc:
            raise TransientError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise ConfigurationError(f"authentication rejected by {self.base_url} ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def complete(self, req: CompletionRequest) -> tuple[str, Usage]:
        data = self._post(
            "/chat/completions",
            {
                "model": req.model,
                "messages": [{"role": "user", "content": req.prompt}],
                "temperature": req.temperature,
                "max_tokens": req.max_output_tokens,
            },
        )
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return text, Usage(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))

    def embed_raw(self, text: str) -> list[float]:
        data = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        try:
            return data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed embedding payload: {exc}") from exc


class RemoteEmbedder:
    def __init__(self, backend: OpenAICompatibleBackend, dim: int):
        self.backend = backend
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.asarray(self.backend.embed_raw(text), dtype=np.float64)
        if vec.shape != (self.dim,):
            raise IntegrityError(f"embedding provider returned dimension {vec.shape}, expected {self.dim}")
        return vec


class HashEmbedder:
    """Deterministic bag-of-tokens embedding.

    Every lower-cased token maps to a Gaussian vector seeded by a hash of
    (seed, token); the text vector is their sum scaled to unit length. Texts
    that share vocabulary land close together, which keeps offline retrieval
    meaningful.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}\x1f{token}".encode(), digest_size=16).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            with self._lock:
                self._cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = [t.lower() for t in tokenize(text)]
        if not tokens:
            raise ValueError("cannot embed text without tokens")
        total = np.zeros(self.dim)
        for token in tokens:
            total += self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            total[0], norm = 1.0, 1.0
        return total / norm


class LLMGateway:
    """Single entry point for every model call in the pipeline.

    Retries transient failures with exponential backoff, caps concurrent
    requests with a semaphore, and never retries configuration errors.
    """

    def __init__(
        self,
        backend: CompletionBackend,
        embedder: Embedder,
        *,
        model: str = "mock",
        max_attempts: int = 4,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.backend = backend
        self.embedder = embedder
        self.model = model
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep
        self._limiter = threading.BoundedSemaphore(max_in_flight)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def complete(self, req: CompletionRequest) -> CompletionResult:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                with self._limiter:
                    text, usage = self.backend.complete(req)
            except TransientError as exc:
                logger.warning("model call failed (attempt %d/%d): %s", attempt + 1, self.max_attempts, exc)
                last = exc
                continue
            if not text:
                last = TransientError("empty completion")
                continue
            return CompletionResult(text=text, usage=usage, latency=time.perf_counter() - start)
        raise TransportError(f"model call failed after {self.max_attempts} attempts: {last}")

    def ask(
        self,
        template_id: TemplateId | str,
        bindings: Mapping[str, object],
        *,
        temperature: float = 0.0,
        suffix: str = "",
    ) -> CompletionResult:
        """Render a catalog prompt and complete it."""
        template_id = TemplateId(template_id)
        prompt = render_prompt(template_id, bindings) + suffix
        return self.complete(
            CompletionRequest(
                prompt=prompt,
                model=self.model,
                temperature=temperature,
                template_id=template_id.value,
                bindings=dict(bindings),
            )
        )

    def embed(self, text: str) -> np.ndarray:
        vec = self.embedder.embed(text)
        if vec.shape != (self.embedder.dim,):
            raise IntegrityError(f"embedding has shape {vec.shape}, expected ({self.embedder.dim},)")
        return vec
