"""Per-token layered contextual embeddings: storage, layer mixing, derived vectors.

Embeddings are produced externally (or by the deterministic test provider),
keyed by post id, and persisted in a binary store so they are computed once
per dataset. The store layout, all little-endian:

    magic   4 bytes  b"CLRE"
    version u16      1
    D       u32      embedding dimension
    layers  u32      layer count (internal layers + input layer)
    count   u64      number of posts
    then per post:
        id_len u16, id bytes (UTF-8), T u16,
        layers * T * D float32 values, layer-major then token-major

The layer-mixing weights are fixed rather than trained: gamma 1, uniform
layer weights. Training them invites overfitting on a dataset this small and
would forbid precomputation.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .preprocess import EMPTY_TOKEN, TokenSequence, normalize_and_tokenize, tokens_or_placeholder
from .thread_model import Dataset

STORE_MAGIC = b"CLRE"
STORE_VERSION = 1
_HEADER = struct.Struct("<4sHIIQ")
_U16 = struct.Struct("<H")


class StoreFormatError(ValueError):
    """The file is not a valid embedding store."""


class ShapeError(ValueError):
    """Array extents do not match the declared dimensions."""


@dataclass(frozen=True)
class LayeredTokenEmbeddings:
    """All layer representations for one post: array of shape (layers, T, D)."""

    post_id: str
    layers: np.ndarray

    def __post_init__(self):
        if self.layers.ndim != 3:
            raise ShapeError(f"post {self.post_id}: expected a 3D layer tensor, got shape {self.layers.shape}")
        if self.layers.shape[1] < 1:
            raise ShapeError(f"post {self.post_id}: token count must be >= 1")
        if not np.all(np.isfinite(self.layers)):
            raise ValueError(f"post {self.post_id}: non-finite embedding values")

    @property
    def num_layers(self) -> int:
        return self.layers.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.layers.shape[1]

    @property
    def dimension(self) -> int:
        return self.layers.shape[2]


@dataclass(frozen=True)
class EmbeddingMix:
    """Scalars combining the layer representations into one vector per token."""

    gamma: float
    layer_weights: tuple[float, ...]

    def __post_init__(self):
        values = (self.gamma, *self.layer_weights)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("non-finite mixing scalars")


def default_mix(num_layers: int) -> EmbeddingMix:
    return EmbeddingMix(gamma=1.0, layer_weights=(1.0 / num_layers,) * num_layers)


@dataclass
class EmbeddingStore:
    dimension: int
    num_layers: int
    entries: dict[str, LayeredTokenEmbeddings] = field(default_factory=dict)

    def add(self, e: LayeredTokenEmbeddings) -> None:
        if e.dimension != self.dimension or e.num_layers != self.num_layers:
            raise ShapeError(
                f"post {e.post_id}: shape {e.layers.shape} does not match store "
                f"(layers={self.num_layers}, D={self.dimension})"
            )
        self.entries[e.post_id] = e

    def __getitem__(self, post_id: str) -> LayeredTokenEmbeddings:
        return self.entries[post_id]

    def __contains__(self, post_id: str) -> bool:
        return post_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def mix_layers(e: LayeredTokenEmbeddings, mix: EmbeddingMix) -> np.ndarray:
    """Combine layer representations: gamma * sum_j w_j * layers[j] -> (T, D)."""
    if len(mix.layer_weights) != e.num_layers:
        raise ShapeError(
            f"{len(mix.layer_weights)} layer weights for {e.num_layers} layers (post {e.post_id})"
        )
    weights = np.asarray(mix.layer_weights, dtype=e.layers.dtype)
    gamma = e.layers.dtype.type(mix.gamma)
    return gamma * np.tensordot(weights, e.layers, axes=1)


def average_embedding(m: np.ndarray) -> np.ndarray:
    """Mean over the token axis of a (T, D) matrix."""
    if m.ndim != 2 or m.shape[0] < 1:
        raise ShapeError(f"expected a non-empty (T, D) matrix, got shape {m.shape}")
    return m.mean(axis=0)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0.0 when either norm is zero."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(STORE_MAGIC, STORE_VERSION, store.dimension, store.num_layers, len(store.entries)))
        for e in store.entries.values():
            id_bytes = e.post_id.encode("utf-8")
            fh.write(_U16.pack(len(id_bytes)))
            fh.write(id_bytes)
            fh.write(_U16.pack(e.num_tokens))
            fh.write(np.ascontiguousarray(e.layers, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise OSError(f"truncated embedding store: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def load_store(path: str | Path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        magic, version, dim, num_layers, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
        if magic != STORE_MAGIC:
            raise StoreFormatError(f"bad magic {magic!r}, expected {STORE_MAGIC!r}")
        if version != STORE_VERSION:
            raise StoreFormatError(f"unsupported store version {version}")
        store = EmbeddingStore(dimension=dim, num_layers=num_layers)
        for _ in range(count):
            (id_len,) = _U16.unpack(_read_exact(fh, 2, "id length"))
            post_id = _read_exact(fh, id_len, "post id").decode("utf-8")
            (num_tokens,) = _U16.unpack(_read_exact(fh, 2, "token count"))
            n_bytes = num_layers * num_tokens * dim * 4
            raw = _read_exact(fh, n_bytes, f"tensor of post {post_id}")
            layers = np.frombuffer(raw, dtype="<f4").reshape(num_layers, num_tokens, dim).copy()
            store.add(LayeredTokenEmbeddings(post_id=post_id, layers=layers.astype(np.float32, copy=False)))
        if fh.read(1):
            raise StoreFormatError("trailing bytes after the last declared post")
    return store


def _token_rng(token: str, position: int, layer: int, seed: int) -> np.random.Generator:
    key = f"{seed}|{layer}|{position}|{token}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def test_provider(
    post: TokenSequence | Iterable[str],
    seed: int,
    *,
    dim: int = 16,
    num_layers: int = 3,
    post_id: str = "",
) -> LayeredTokenEmbeddings:
    """Deterministic pseudo-embeddings standing in for a pretrained embedder.

    Every value is derived by hashing (token, position, layer, seed); the
    reserved empty-post placeholder maps to the zero vector.
    """
    tokens = post.tokens if isinstance(post, TokenSequence) else tuple(post)
    if not tokens:
        tokens = (EMPTY_TOKEN,)
    layers = np.zeros((num_layers, len(tokens), dim), dtype=np.float32)
    for j in range(num_layers):
        for k, token in enumerate(tokens):
            if token == EMPTY_TOKEN:
                continue
            layers[j, k] = _token_rng(token, k, j, seed).standard_normal(dim, dtype=np.float32)
    return LayeredTokenEmbeddings(post_id=post_id, layers=layers)


def build_fake_store(dataset: Dataset, seed: int, *, dim: int = 16, num_layers: int = 3) -> EmbeddingStore:
    """Embedding store over a whole dataset, produced by the test provider."""
    store = EmbeddingStore(dimension=dim, num_layers=num_layers)
    for post in dataset.posts:
        tokens = tokens_or_placeholder(normalize_and_tokenize(post.raw_text))
        store.add(test_provider(tokens, seed, dim=dim, num_layers=num_layers, post_id=post.id))
    return store


def mixed_matrices(store: EmbeddingStore, mix: EmbeddingMix, post_ids: Iterable[str]) -> dict[str, np.ndarray]:
    """Mixed (T, D) matrix per post id; raises KeyError for ids absent from the store."""
    out = {}
    for pid in post_ids:
        if pid not in store:
            raise KeyError(f"no embedding for post {pid}")
        out[pid] = mix_layers(store[pid], mix)
    return out


def averaged_vectors(matrices: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {pid: average_embedding(m) for pid, m in matrices.items()}
