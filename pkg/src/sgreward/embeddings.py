"""Unit-norm semantic embeddings served from a file-backed table or a remote provider.

Vectors are L2-normalized once at ingestion; every lookup goes through a
bounded LRU cache whose eviction never changes returned values. Table mode is
the reproducible default; remote mode calls an HTTP embedding service.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    IngestionError,
    MissingEmbeddingError,
    ProviderUnavailableError,
)

DEFAULT_DIM = 384
NORM_ATOL = 1e-6


def normalize(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise IngestionError(f"embedding must be a flat vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise IngestionError("embedding contains non-finite components")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise IngestionError("cannot normalize a zero vector")
    return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, clipped into [-1, 1] against fp drift."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a is b:  # cached lookups return the same object; keep self-similarity exact
        return 1.0
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def reward_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine clamped to [0, 1]; negative similarity carries no reward."""
    return max(0.0, cosine(a, b))


class EmbeddingSource:
    """Base lookup with a bounded, thread-safe LRU cache.

    Subclasses implement ``_fetch``; ``embed`` adds caching and the non-empty
    key contract. Cache hits/misses are observable via ``cache_hits`` and
    ``cache_misses``.
    """

    def __init__(self, cache_capacity: int = 100_000):
        if cache_capacity < 0:
            raise ValueError("cache_capacity must be >= 0")
        self.cache_capacity = cache_capacity
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.cache_hits = 0
        self.cache_misses = 0

    def _fetch(self, key: str) -> np.ndarray:
        raise NotImplementedError

    def embed(self, key: str) -> np.ndarray:
        if not key:
            raise ValueError("embedding key must be non-empty")
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                self.cache_hits += 1
                return cached
            self.cache_misses += 1
        vec = self._fetch(key)
        vec.setflags(write=False)
        if self.cache_capacity:
            with self._lock:
                self._cache[key] = vec
                self._cache.move_to_end(key)
                while len(self._cache) > self.cache_capacity:
                    self._cache.popitem(last=False)
        return vec

    def embed_many(self, keys) -> list[np.ndarray]:
        return [self.embed(k) for k in keys]

    def describe(self) -> dict:
        raise NotImplementedError


class EmbeddingTable(EmbeddingSource):
    """In-memory table keyed by canonical strings; the default source.

    Load from a line-delimited JSON file (``{"key": ..., "vector": [...]}``
    per line) or construct directly from a mapping. Duplicate keys and
    malformed vectors are ingestion errors; every vector is normalized.
    """

    def __init__(self, vectors: dict[str, np.ndarray], cache_capacity: int = 100_000,
                 origin: str = "<memory>"):
        super().__init__(cache_capacity)
        self._vectors: dict[str, np.ndarray] = {}
        self.origin = origin
        dim = None
        for key, values in vectors.items():
            vec = normalize(values)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise IngestionError(
                    f"vector for {key!r} has dimension {vec.shape[0]}, expected {dim}")
            vec.setflags(write=False)
            self._vectors[key] = vec
        self.dim = dim

    @classmethod
    def load(cls, path, cache_capacity: int = 100_000) -> "EmbeddingTable":
        path = Path(path)
        vectors: dict[str, np.ndarray] = {}
        with path.open() as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    key, vec = record["key"], record["vector"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise IngestionError(f"{path}:{lineno}: bad embedding record ({exc})")
                if key in vectors:
                    raise IngestionError(f"{path}:{lineno}: duplicate key {key!r}")
                vectors[key] = vec
        return cls(vectors, cache_capacity, origin=str(path))

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            for key in sorted(self._vectors):
                fh.write(json.dumps({"key": key, "vector": self._vectors[key].tolist()}) + "\n")

    def _fetch(self, key: str) -> np.ndarray:
        vec = self._vectors.get(key)
        if vec is None:
            raise MissingEmbeddingError(f"no embedding for key {key!r}", key=key)
        return vec.copy()

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def describe(self) -> dict:
        return {"mode": "table", "origin": self.origin, "entries": len(self._vectors),
                "dim": self.dim}


class RemoteEmbeddingProvider(EmbeddingSource):
    """HTTP provider speaking ``POST /embed {"keys": [...]} -> {"vectors": [[...]]}``."""

    def __init__(self, endpoint_url: str, timeout: float = 10.0, max_attempts: int = 3,
                 cache_capacity: int = 100_000):
        super().__init__(cache_capacity)
        self.endpoint_url = endpoint_url.rstrip("/")
        self.timeout = timeout
        self.max_attempts = max_attempts

    def _fetch(self, key: str) -> np.ndarray:
        import requests

        last_error = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = requests.post(f"{self.endpoint_url}/embed", json={"keys": [key]},
                                     timeout=self.timeout)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                return normalize(vectors[0])
            except Exception as exc:  # noqa: BLE001 - folded into the typed error below
                last_error = exc
        raise ProviderUnavailableError(
            f"embedding provider unreachable after {self.max_attempts} attempts: {last_error}",
            attempts=self.max_attempts, endpoint=self.endpoint_url)

    def describe(self) -> dict:
        return {"mode": "remote", "endpoint": self.endpoint_url}


def synthetic_vector(key: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic pseudo-random unit vector derived from the key alone."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal(dim))


def build_synthetic_table(keys, dim: int = DEFAULT_DIM,
                          cache_capacity: int = 100_000) -> EmbeddingTable:
    """Reproducible table for tests and demos: one hash-seeded vector per key."""
    return EmbeddingTable({k: synthetic_vector(k, dim) for k in keys},
                          cache_capacity, origin="<synthetic>")
