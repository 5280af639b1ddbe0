"""Sentence embeddings behind a small provider interface.

Every provider returns L2-normalised float64 vectors so that the dot product
is the cosine similarity.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendError

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


class EmbeddingProvider(Protocol):
    kind: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise BackendError("embedding provider returned a zero vector")
    return mat / norms


class HashedLocalEmbedder:
    """Bag-of-tokens hashed into ``dimension`` buckets, then L2-normalised.

    Token buckets come from blake2b so vectors are identical across
    processes and platforms. Text without tokens maps to the first basis
    vector.
    """

    kind = "hashed-local"

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for tok in tokenize(text):
            vec[self.bucket(tok)] += 1.0
        norm = np.linalg.norm(vec)
        if norm == 0:
            vec[0] = 1.0
            return vec
        return vec / norm

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return np.stack([self.embed_one(t) for t in texts])


class RemoteEmbedder:
    """Client for an embeddings HTTP endpoint.

    Request body ``{"model": ..., "input": [...]}``; the response is expected
    to carry ``data: [{"embedding": [...]}, ...]`` in input order. Results are
    memoised per instance so repeated texts are fetched once.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str | None = None,
        batch_size: int = 64,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.dimension = 0
        self._memo: dict[str, np.ndarray] = {}

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, batch: list[str]) -> list[list[float]]:
        body = {"model": self.model, "input": batch}
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                vectors = [row["embedding"] for row in sorted(data, key=lambda r: r.get("index", 0))]
                if len(vectors) != len(batch):
                    raise BackendError(f"expected {len(batch)} embeddings, got {len(vectors)}")
                return vectors
            except (requests.RequestException, KeyError, TypeError, ValueError, BackendError) as exc:
                last = exc
                log.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise BackendError(f"embedding endpoint failed after {self.retries} attempts: {last}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in dict.fromkeys(texts) if t not in self._memo]
        for start in range(0, len(missing), self.batch_size):
            batch = missing[start : start + self.batch_size]
            mat = _normalize_rows(np.asarray(self._post(batch), dtype=float))
            self.dimension = mat.shape[1]
            for text, vec in zip(batch, mat):
                self._memo[text] = vec
        if not texts:
            return np.zeros((0, self.dimension))
        return np.stack([self._memo[t] for t in texts])


def embed_batch(texts: Sequence[str], provider: EmbeddingProvider) -> np.ndarray:
    """Embed ``texts`` in order; returns an ``(n, dim)`` array of unit rows."""
    for t in texts:
        if not isinstance(t, str) or not t.strip():
            raise ValueError("texts to embed must be non-empty strings")
    return provider.embed(list(texts))


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.clip(np.dot(u, v), -1.0, 1.0))


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise ``1 - cos`` for unit rows, clipped to [0, 2] with a zero diagonal."""
    sims = np.clip(vectors @ vectors.T, -1.0, 1.0)
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    return np.clip(dist, 0.0, 2.0)
