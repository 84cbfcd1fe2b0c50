"""Text and node embedding providers.

Two text providers share one contract: a unit-norm float64 vector of the
configured width for any nonempty text, deterministic for equal inputs.

``test-hash`` is the offline provider used by the test suite and the demo
pipeline. It hashes token counts into a fixed random basis, so texts sharing
vocabulary land near each other without any network dependency. ``http``
posts to an embedding service.

Node embeddings are keyed by canonical label: the same label always receives
the same initial row for a given width and seed, no matter which case or
corpus it appears in. The rows are initial values for trainable parameters,
ownership sits with the scoring model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from .errors import EmptyTextError, ProviderUnavailableError
from .metrics import tokenize
from .util import derive_seed


class EmbeddingProvider(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...


class TokenHashProvider:
    """Deterministic offline embeddings from hashed token counts."""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError("embedding dim must be positive")
        self.dim = int(dim)
        self.seed = int(seed)
        self._basis_cache: dict[str, np.ndarray] = {}

    def _basis(self, token: str) -> np.ndarray:
        vec = self._basis_cache.get(token)
        if vec is None:
            rng = np.random.default_rng(derive_seed(self.seed, "token-basis", token))
            vec = rng.standard_normal(self.dim)
            self._basis_cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyTextError("cannot embed empty text")
        acc = np.zeros(self.dim)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, count in sorted(counts.items()):
            acc += count * self._basis(tok)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            raise EmptyTextError("text hashed to a zero vector")
        return acc / norm


class HttpEmbeddingProvider:
    """Requests vectors from an embedding service over HTTP.

    POST {"text": ...} to the configured url, expects {"vector": [...]}.
    Connection problems and malformed replies raise ProviderUnavailableError;
    there is no silent fallback to another provider.
    """

    def __init__(self, url: str, dim: int, timeout: float = 10.0, retries: int = 2):
        self.url = url
        self.dim = int(dim)
        self.timeout = float(timeout)
        self.retries = int(retries)

    def embed_text(self, text: str) -> np.ndarray:
        import httpx

        if not text.strip():
            raise EmptyTextError("cannot embed empty text")
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(self.url, json={"text": text}, timeout=self.timeout)
                resp.raise_for_status()
                vector = np.asarray(resp.json()["vector"], dtype=float)
            except Exception as exc:  # noqa: BLE001 - folded into one error type
                last_error = exc
                continue
            if vector.shape != (self.dim,):
                raise ProviderUnavailableError(
                    f"service returned shape {vector.shape}, expected ({self.dim},)"
                )
            norm = np.linalg.norm(vector)
            if norm == 0.0:
                raise ProviderUnavailableError("service returned a zero vector")
            return vector / norm
        raise ProviderUnavailableError(f"embedding service failed: {last_error}")


def make_provider(settings: dict) -> EmbeddingProvider:
    """Build a provider from the ``embedding`` config section."""
    kind = settings.get("provider", "test-hash")
    dim = int(settings.get("dim", 64))
    if kind == "test-hash":
        return TokenHashProvider(dim, seed=int(settings.get("seed", 0)))
    if kind == "http":
        return HttpEmbeddingProvider(
            url=settings["url"],
            dim=dim,
            timeout=float(settings.get("timeout", 10.0)),
            retries=int(settings.get("retries", 2)),
        )
    raise ValueError(f"unknown embedding provider {kind!r}")


@dataclass
class EmbeddingMatrix:
    """Dense rows for an ordered set of canonical labels."""

    labels: tuple[str, ...]
    matrix: np.ndarray  # shape (len(labels), dim)

    def __post_init__(self):
        self.index = {label: i for i, label in enumerate(self.labels)}
        if self.matrix.shape[0] != len(self.labels):
            raise ValueError("row count does not match label count")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def row(self, label: str) -> np.ndarray:
        return self.matrix[self.index[label]]

    def __contains__(self, label: str) -> bool:
        return label in self.index


def node_embedding_row(label: str, dim: int, seed: int) -> np.ndarray:
    """Initial embedding row for one label, uniform on [-1/sqrt(d), 1/sqrt(d)].

    Keyed by (label, dim, seed) only, so a label shared across cases starts
    from the same point everywhere.
    """
    bound = 1.0 / np.sqrt(dim)
    rng = np.random.default_rng(derive_seed(seed, "node-embedding", label))
    return rng.uniform(-bound, bound, size=dim)


def init_node_embeddings(
    labels: Iterable[str], dim: int, seed: int
) -> EmbeddingMatrix:
    ordered = tuple(sorted(set(labels)))
    if dim < 1:
        raise ValueError("embedding dim must be positive")
    if not ordered:
        return EmbeddingMatrix(ordered, np.zeros((0, dim)))
    matrix = np.vstack([node_embedding_row(label, dim, seed) for label in ordered])
    return EmbeddingMatrix(ordered, matrix)
