"""Scoring and generation backends behind one client interface.

Cosine backends expose embeddings and the caller composes the clamped
cosine; probability backends expose pair_score directly; the VLM backend
exposes generate. HttpProvider speaks the JSON wire contract of the model
server, MockProvider is a deterministic in-process double for tests and
offline runs, and ScoreCache short-circuits repeat (backend, crop,
phrase) lookups.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
import threading
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import httpx
import numpy as np

from relscore.errors import InputError, ProviderError, UnsupportedBackendError
from relscore.metrics import ProviderScore, ScoreMethod, cosine_clamped

EMBEDDING_BACKENDS = frozenset({"negclip", "clip", "siglip"})
PAIR_SCORE_METHODS = {
    "siglip": ScoreMethod.SIGMOID_PROB,
    "blip2_itm": ScoreMethod.ITM_PROB,
}
GENERATION_BACKENDS = frozenset({"vlm"})
BACKEND_NAMES = EMBEDDING_BACKENDS | set(PAIR_SCORE_METHODS) | GENERATION_BACKENDS

_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ProviderEndpoint:
    """Connection settings for one backend server."""

    base_url: str
    backend_name: str
    timeout: float = 30.0
    max_in_flight: int = 4
    retry_budget: int = 2
    token: str | None = None

    def __post_init__(self):
        if self.backend_name not in BACKEND_NAMES:
            raise UnsupportedBackendError(
                f"unknown backend {self.backend_name!r}, expected one of {sorted(BACKEND_NAMES)}"
            )
        if self.max_in_flight < 1:
            raise InputError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.timeout <= 0:
            raise InputError(f"timeout must be > 0, got {self.timeout}")
        if self.retry_budget < 0:
            raise InputError(f"retry_budget must be >= 0, got {self.retry_budget}")


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length embedding; L2 norm 1 when flagged normalized."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise InputError("embedding must be non-empty")
        if self.normalized:
            norm = float(np.linalg.norm(values))
            if abs(norm - 1.0) > _NORM_TOLERANCE:
                raise InputError(f"normalized embedding has L2 norm {norm}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class GenerationRequest:
    """One VLM call: marked crop, prompt, decode parameters."""

    image_payload: bytes
    prompt_text: str
    max_tokens: int = 16
    temperature: float = 0.0

    def __post_init__(self):
        if not self.image_payload:
            raise InputError("image_payload must be non-empty")
        if not self.prompt_text.strip():
            raise InputError("prompt_text must be non-empty")
        if self.max_tokens < 1:
            raise InputError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0:
            raise InputError(f"temperature must be >= 0, got {self.temperature}")


def backend_score_method(backend_name: str) -> ScoreMethod:
    """The method tag a backend's region scores carry."""
    if backend_name in PAIR_SCORE_METHODS:
        return PAIR_SCORE_METHODS[backend_name]
    return ScoreMethod.COSINE_CLAMPED


class ConcurrencyProbe:
    """Tracks concurrent and total calls through a provider."""

    def __init__(self):
        self._lock = threading.Lock()
        self._current = 0
        self.max_concurrent = 0
        self.calls = 0

    @contextmanager
    def track(self) -> Iterator[None]:
        with self._lock:
            self._current += 1
            self.calls += 1
            self.max_concurrent = max(self.max_concurrent, self._current)
        try:
            yield
        finally:
            with self._lock:
                self._current -= 1

    def reset(self) -> None:
        with self._lock:
            self._current = 0
            self.max_concurrent = 0
            self.calls = 0


def _validate_phrase(text: str) -> str:
    if not text.strip():
        raise InputError("phrase must be non-empty")
    return text


class HttpProvider:
    """Client for the model-server wire contract.

    Bounds in-flight requests with a semaphore and retries transport
    failures and 5xx responses with exponential backoff plus jitter;
    4xx responses and non-idempotent requests (generation at nonzero
    temperature) are never retried.
    """

    def __init__(self, endpoint: ProviderEndpoint, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.name = endpoint.backend_name
        self.score_method = backend_score_method(endpoint.backend_name)
        headers = {}
        if endpoint.token:
            headers["Authorization"] = f"Bearer {endpoint.token}"
        self._client = httpx.Client(
            base_url=endpoint.base_url,
            timeout=endpoint.timeout,
            headers=headers,
            transport=transport,
        )
        self._slots = threading.BoundedSemaphore(endpoint.max_in_flight)
        self._rng = random.Random()

    def supports_embeddings(self) -> bool:
        return self.endpoint.backend_name in EMBEDDING_BACKENDS

    def supports_pair_score(self) -> bool:
        return self.endpoint.backend_name in PAIR_SCORE_METHODS

    def supports_generation(self) -> bool:
        return self.endpoint.backend_name in GENERATION_BACKENDS

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpProvider":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def health(self) -> dict:
        return self._request("GET", "/v1/health", None, retryable=True, context="health")

    def embed_image(self, payload: bytes) -> EmbeddingVector:
        if not self.supports_embeddings():
            raise UnsupportedBackendError(
                f"backend {self.name!r} does not expose embeddings"
            )
        if not payload:
            raise InputError("image payload must be non-empty")
        body = {"image_b64": base64.b64encode(payload).decode("ascii")}
        data = self._request("POST", "/v1/embed_image", body, retryable=True, context="embed_image")
        return self._vector_from(data, context="embed_image")

    def embed_text(self, text: str) -> EmbeddingVector:
        if not self.supports_embeddings():
            raise UnsupportedBackendError(
                f"backend {self.name!r} does not expose embeddings"
            )
        body = {"text": _validate_phrase(text)}
        data = self._request("POST", "/v1/embed_text", body, retryable=True, context="embed_text")
        return self._vector_from(data, context="embed_text")

    def pair_score(self, payload: bytes, text: str) -> ProviderScore:
        if not self.supports_pair_score():
            raise UnsupportedBackendError(
                f"backend {self.name!r} has no direct pair scoring; "
                "compose embed_image/embed_text instead"
            )
        if not payload:
            raise InputError("image payload must be non-empty")
        body = {
            "image_b64": base64.b64encode(payload).decode("ascii"),
            "text": _validate_phrase(text),
        }
        data = self._request("POST", "/v1/pair_score", body, retryable=True, context="pair_score")
        try:
            return ProviderScore(float(data["score"]), ScoreMethod(data["method"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ProviderError(f"malformed pair_score response: {data!r}") from exc

    def generate(self, request: GenerationRequest) -> str:
        if not self.supports_generation():
            raise UnsupportedBackendError(f"backend {self.name!r} does not generate text")
        body = {
            "image_b64": base64.b64encode(request.image_payload).decode("ascii"),
            "prompt": request.prompt_text,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        data = self._request(
            "POST",
            "/v1/generate",
            body,
            retryable=request.temperature == 0.0,
            context="generate",
        )
        try:
            return str(data["text"])
        except KeyError as exc:
            raise ProviderError(f"malformed generate response: {data!r}") from exc

    def _vector_from(self, data: dict, context: str) -> EmbeddingVector:
        try:
            vector = np.asarray(data["vector"], dtype=np.float64)
            dim = int(data["dim"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ProviderError(f"malformed {context} response: {data!r}") from exc
        if vector.size != dim:
            raise ProviderError(
                f"{context} returned dim {dim} but {vector.size} components"
            )
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise ProviderError(f"{context} returned a zero vector")
        # Servers promise unit vectors; renormalize to absorb wire rounding.
        return EmbeddingVector(vector / norm, normalized=True)

    def _request(self, method: str, path: str, body: dict | None, retryable: bool, context: str) -> dict:
        attempts = self.endpoint.retry_budget + 1 if retryable else 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = min(0.25 * (2 ** (attempt - 1)), 4.0)
                time.sleep(delay * (1.0 + self._rng.random()))
            try:
                with self._slots:
                    response = self._client.request(method, path, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise ProviderError(
                        f"{context}: server returned non-JSON body"
                    ) from exc
            last_error = ProviderError(
                f"{context}: {self._error_detail(response)} (HTTP {response.status_code})"
            )
            if response.status_code < 500:
                break
        assert last_error is not None
        if isinstance(last_error, ProviderError):
            raise last_error
        raise ProviderError(f"{context}: transport failure after {attempts} attempt(s): {last_error}")

    @staticmethod
    def _error_detail(response: httpx.Response) -> str:
        try:
            error = response.json().get("error", {})
            return f"{error.get('code', 'unknown')}: {error.get('message', 'no message')}"
        except ValueError:
            return "unstructured error body"


DEFAULT_CANNED_PREDICATES = (
    "holding",
    "sitting on",
    "wearing",
    "looking at",
    "jumping over",
    "standing next to",
    "is reaching for",
    "Object 1 is leaning against Object 2",
    "has a small light blue handbag attached to",
    "no relation",
)


class MockProvider:
    """Deterministic in-process backend double.

    Embeddings are unit vectors seeded by a hash of the input; a crop
    registered against a phrase embeds identically to that phrase, so its
    cosine is exactly 1. Pair scores are hash-uniform in [0, 1) unless
    registered. Generation picks from a canned predicate list by payload
    hash. All calls run through a concurrency probe.
    """

    def __init__(
        self,
        backend_name: str = "mock",
        method: ScoreMethod = ScoreMethod.COSINE_CLAMPED,
        dim: int = 64,
        max_in_flight: int = 8,
        latency: float = 0.0,
        canned_predicates: tuple[str, ...] = DEFAULT_CANNED_PREDICATES,
    ):
        if dim < 2:
            raise InputError(f"embedding dim must be >= 2, got {dim}")
        self.name = backend_name
        self.score_method = ScoreMethod(method)
        self.dim = dim
        self.latency = latency
        self.canned_predicates = canned_predicates
        self.probe = ConcurrencyProbe()
        self.fail_digests: set[str] = set()
        self._registered: dict[str, str] = {}
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def supports_embeddings(self) -> bool:
        return True

    def supports_pair_score(self) -> bool:
        return self.score_method is not ScoreMethod.COSINE_CLAMPED

    def supports_generation(self) -> bool:
        return True

    def close(self) -> None:
        pass

    def register_crop(self, payload: bytes | str, phrase: str) -> None:
        """Pin a crop (payload bytes or digest) to a phrase: the crop then
        embeds as that phrase and pair-scores 1.0 against it."""
        digest = payload if isinstance(payload, str) else hashlib.sha256(payload).hexdigest()
        self._registered[digest] = phrase

    @contextmanager
    def _call(self) -> Iterator[None]:
        with self._slots, self.probe.track():
            if self.latency:
                time.sleep(self.latency)
            yield

    def _seeded_unit(self, seed_text: str) -> EmbeddingVector:
        seed = int.from_bytes(hashlib.sha256(seed_text.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        vector = rng.standard_normal(self.dim)
        return EmbeddingVector(vector / np.linalg.norm(vector), normalized=True)

    @staticmethod
    def _uniform(seed_text: str) -> float:
        raw = int.from_bytes(hashlib.sha256(seed_text.encode("utf-8")).digest()[:8], "big")
        return raw / 2.0**64

    def embed_image(self, payload: bytes) -> EmbeddingVector:
        if not payload:
            raise InputError("image payload must be non-empty")
        with self._call():
            digest = hashlib.sha256(payload).hexdigest()
            self._maybe_fail(digest)
            phrase = self._registered.get(digest)
            if phrase is not None:
                return self._embed_text_unlocked(phrase)
            return self._seeded_unit(f"image:{self.name}:{digest}")

    def embed_text(self, text: str) -> EmbeddingVector:
        _validate_phrase(text)
        with self._call():
            return self._embed_text_unlocked(text)

    def _embed_text_unlocked(self, text: str) -> EmbeddingVector:
        return self._seeded_unit(f"text:{self.name}:{text}")

    def pair_score(self, payload: bytes, text: str) -> ProviderScore:
        if not self.supports_pair_score():
            raise UnsupportedBackendError(
                f"backend {self.name!r} has no direct pair scoring; "
                "compose embed_image/embed_text instead"
            )
        if not payload:
            raise InputError("image payload must be non-empty")
        _validate_phrase(text)
        with self._call():
            digest = hashlib.sha256(payload).hexdigest()
            self._maybe_fail(digest)
            if self._registered.get(digest) == text:
                return ProviderScore(1.0, self.score_method)
            return ProviderScore(
                self._uniform(f"pair:{self.name}:{digest}:{text}"), self.score_method
            )

    def generate(self, request: GenerationRequest) -> str:
        with self._call():
            digest = hashlib.sha256(request.image_payload).hexdigest()
            self._maybe_fail(digest)
            index = int.from_bytes(
                hashlib.sha256(
                    f"gen:{self.name}:{digest}:{request.prompt_text}".encode("utf-8")
                ).digest()[:8],
                "big",
            ) % len(self.canned_predicates)
            return self.canned_predicates[index]

    def _maybe_fail(self, digest: str) -> None:
        if digest in self.fail_digests:
            raise ProviderError(f"injected failure for payload {digest[:12]}")


def cache_key(backend: str, payload_digest: str, phrase: str) -> str:
    """Content-addressed key over (backend, crop digest, phrase)."""
    material = b"\x00".join(
        part.encode("utf-8") for part in (backend, payload_digest, phrase)
    )
    return hashlib.sha256(material).hexdigest()


class ScoreCache:
    """Persistent map from (backend, crop digest, phrase) to a score.

    On disk: one JSON record per line plus a checksum trailer line over
    everything before it. A corrupt or truncated file loads as empty with
    a warning rather than failing the run.
    """

    def __init__(self, entries: dict[str, tuple[float, str]] | None = None):
        self._entries: dict[str, tuple[float, str]] = dict(entries or {})
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, backend: str, payload_digest: str, phrase: str) -> ProviderScore | None:
        entry = self._entries.get(cache_key(backend, payload_digest, phrase))
        if entry is None:
            self.misses += 1
            return None
        self.hits += 1
        value, method = entry
        return ProviderScore(value, ScoreMethod(method))

    def put(self, backend: str, payload_digest: str, phrase: str, score: ProviderScore) -> None:
        self._entries[cache_key(backend, payload_digest, phrase)] = (
            score.value,
            score.method.value,
        )

    def entries(self) -> dict[str, tuple[float, str]]:
        return dict(self._entries)


def store_score_cache(cache: ScoreCache, path: str | Path) -> None:
    """Write the cache with records sorted by key and a checksum trailer."""
    lines = []
    for key, (value, method) in sorted(cache.entries().items()):
        lines.append(
            json.dumps({"key": key, "value": value, "method": method}, separators=(",", ":"))
        )
    body = "".join(line + "\n" for line in lines)
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    trailer = json.dumps({"checksum": checksum}, separators=(",", ":"))
    Path(path).write_text(body + trailer + "\n", encoding="utf-8")


def load_score_cache(path: str | Path) -> ScoreCache:
    """Load a cache file; a missing file is an empty cache, a corrupt one
    warns and rebuilds from empty."""
    path = Path(path)
    if not path.exists():
        return ScoreCache()
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        warnings.warn(f"score cache {path} is empty without a trailer; rebuilding", stacklevel=2)
        return ScoreCache()
    try:
        trailer = json.loads(lines[-1])
        stored_checksum = trailer["checksum"]
    except (ValueError, TypeError, KeyError):
        warnings.warn(f"score cache {path} has a corrupt trailer; rebuilding", stacklevel=2)
        return ScoreCache()
    body = "".join(line + "\n" for line in lines[:-1])
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != stored_checksum:
        warnings.warn(f"score cache {path} failed its checksum; rebuilding", stacklevel=2)
        return ScoreCache()
    entries: dict[str, tuple[float, str]] = {}
    for line in lines[:-1]:
        try:
            record = json.loads(line)
            entries[record["key"]] = (float(record["value"]), str(record["method"]))
        except (ValueError, TypeError, KeyError):
            warnings.warn(f"score cache {path} has a corrupt record; rebuilding", stacklevel=2)
            return ScoreCache()
    return ScoreCache(entries)
