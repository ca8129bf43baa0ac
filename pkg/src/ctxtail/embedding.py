"""Phrase vectorization through pluggable providers, plus PCA compression.

Two providers ship with the toolkit: a deterministic built-in one (feature
hashing of token n-grams followed by a fixed seeded random projection) good
for tests and desk-scale runs, and a remote client that fetches real
language-model vectors from a web service exposing a single embed endpoint:

    POST <url>  body: {"phrases": ["...", ...]}
    response:   {"vectors": [[f, f, ...], ...]}   (order-preserving)

Vectors can be cached on disk keyed by (provider id, phrase text).
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .phrasing import tokenize


class EmbeddingError(RuntimeError):
    pass


def _stable_hash64(data: str) -> int:
    return int.from_bytes(hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest(), "little")


class HashingProvider:
    """Deterministic embedding: hash token n-grams, project with seeded Gaussian rows.

    A pure function of (phrase text, seed, dim): each hashed n-gram selects a
    Gaussian row generated from (seed, bucket); the phrase vector is the
    signed sum of its rows, normalized to unit length.
    """

    def __init__(self, dim: int = 768, seed: int = 13, buckets: int = 1 << 20, max_ngram: int = 3):
        self.dim = dim
        self.seed = seed
        self.buckets = buckets
        self.max_ngram = max_ngram
        self._row_cache: dict[int, np.ndarray] = {}

    @property
    def provider_id(self) -> str:
        return f"hashing-d{self.dim}-s{self.seed}-b{self.buckets}"

    def _row(self, bucket: int) -> np.ndarray:
        row = self._row_cache.get(bucket)
        if row is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, bucket]))
            row = rng.standard_normal(self.dim)
            if len(self._row_cache) < 65536:
                self._row_cache[bucket] = row
        return row

    def embed(self, phrases: list[str]) -> np.ndarray:
        out = np.zeros((len(phrases), self.dim), dtype=np.float64)
        for i, phrase in enumerate(phrases):
            toks = tokenize(phrase)
            if not toks:
                toks = ["<empty>"]
            vec = out[i]
            for n in range(1, min(self.max_ngram, len(toks)) + 1):
                for j in range(len(toks) - n + 1):
                    h = _stable_hash64("\x1f".join(toks[j : j + n]))
                    sign = 1.0 if h & 1 else -1.0
                    vec += sign * self._row((h >> 1) % self.buckets)
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
        return out.astype(np.float32)


class RemoteProvider:
    """Client for a remote embed endpoint, with retry and exponential backoff."""

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 3, backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    @property
    def provider_id(self) -> str:
        return "remote-" + hashlib.sha1(self.url.encode("utf-8")).hexdigest()[:12]

    def embed(self, phrases: list[str]) -> np.ndarray:
        import requests

        last_err: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.url, json={"phrases": phrases}, timeout=self.timeout)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                if len(vectors) != len(phrases):
                    raise EmbeddingError(
                        f"provider returned {len(vectors)} vectors for {len(phrases)} phrases"
                    )
                arr = np.asarray(vectors, dtype=np.float32)
                if arr.ndim != 2:
                    raise EmbeddingError("provider returned ragged vectors (dimension mismatch)")
                return arr
            except EmbeddingError:
                raise
            except Exception as exc:  # connection errors, HTTP errors, bad payloads
                last_err = exc
                if attempt < self.retries - 1:
                    time.sleep(self.backoff * (2**attempt))
        raise EmbeddingError(
            f"embed endpoint {self.url} failed after {self.retries} attempts "
            f"({last_err}); missing phrases: {phrases}"
        )


class VectorCache:
    """Disk cache: one little-endian float32 file per (provider id, phrase hash)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, provider_id: str, phrase: str) -> Path:
        h = hashlib.sha256(phrase.encode("utf-8")).hexdigest()[:32]
        return self.root / provider_id / f"{h}.vec"

    def get(self, provider_id: str, phrase: str) -> np.ndarray | None:
        p = self._path(provider_id, phrase)
        if not p.is_file():
            return None
        return np.frombuffer(p.read_bytes(), dtype="<f4").copy()

    def put(self, provider_id: str, phrase: str, vector: np.ndarray) -> None:
        p = self._path(provider_id, phrase)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_suffix(".tmp")
        tmp.write_bytes(np.asarray(vector, dtype="<f4").tobytes())
        tmp.replace(p)  # atomic per key


def embed_phrases(phrases: list[str], provider, cache: VectorCache | None = None) -> np.ndarray:
    """One vector per phrase, order-preserving; cache-aware when a cache is given."""
    if not phrases:
        raise EmbeddingError("no phrases to embed")
    if cache is None:
        vectors = provider.embed(phrases)
    else:
        pid = provider.provider_id
        cached = [cache.get(pid, ph) for ph in phrases]
        missing = [i for i, v in enumerate(cached) if v is None]
        if missing:
            fetched = provider.embed([phrases[i] for i in missing])
            for row, i in enumerate(missing):
                cache.put(pid, phrases[i], fetched[row])
                cached[i] = fetched[row]
        dims = {len(v) for v in cached}
        if len(dims) != 1:
            raise EmbeddingError(f"dimension mismatch across batch: {sorted(dims)}")
        vectors = np.vstack(cached).astype(np.float32)
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingError("non-finite entries in embedded vectors")
    return vectors


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(vectors: np.ndarray, k: int = 50) -> PcaModel:
    """Top-k principal components of mean-centered data via covariance eigendecomposition."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise EmbeddingError("pca_fit expects a 2-D matrix")
    n, d = X.shape
    if not np.all(np.isfinite(X)):
        raise EmbeddingError("non-finite entries in PCA input")
    if k > min(n, d):
        raise EmbeddingError(f"k={k} exceeds min(n, d)={min(n, d)}")
    if n < k:
        raise EmbeddingError(f"need at least k={k} samples, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    comps = eigvecs[:, order].T
    variances = np.clip(eigvals[order], 0.0, None)
    # Sign convention: largest-magnitude entry of each component is positive.
    for row in comps:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=comps, explained_variance=variances)


def pca_transform(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.mean.shape[0]:
        raise EmbeddingError(
            f"dimension mismatch: vectors have {X.shape[1]} dims, model expects {model.mean.shape[0]}"
        )
    return (X - model.mean) @ model.components.T


def write_vectors(path: str | Path, phrases: list[str], vectors: np.ndarray) -> None:
    """Phrase vectors as a single binary file: count, dim, then per-phrase records."""
    vectors = np.asarray(vectors, dtype="<f4")
    with Path(path).open("wb") as fh:
        fh.write(b"PVEC")
        fh.write(struct.pack("<II", len(phrases), vectors.shape[1]))
        for phrase, vec in zip(phrases, vectors):
            raw = phrase.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def read_vectors(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open("rb") as fh:
        magic = fh.read(4)
        if magic != b"PVEC":
            raise EmbeddingError(f"not a phrase-vector file: {path}")
        count, dim = struct.unpack("<II", fh.read(8))
        phrases: list[str] = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            (ln,) = struct.unpack("<H", fh.read(2))
            phrases.append(fh.read(ln).decode("utf-8"))
            vectors[i] = np.frombuffer(fh.read(4 * dim), dtype="<f4")
    return phrases, vectors
