"""Linker model parameters, deterministic initialization, and the versioned
binary container (magic ``SGUL``).

Embeddings are hash-bucketed: token lemmas and schema labels map to buckets
via md5, so no vocabulary file is needed and lookups are stable across runs
and platforms. All parameters are float64 in memory and 32-bit little-endian
floats on disk.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError

# Every relation an enclosing subgraph can carry. Query pairs without an
# explicit edge take none_syntax; schema and bridge edges are mirrored in
# both directions under the same relation; every node gets a self loop.
RELATIONS = (
    "forward_syntax",
    "backward_syntax",
    "none_syntax",
    "has",
    "primary_key",
    "foreign_key",
    "candidate_link",
    "self_loop",
)

REL_INDEX = {name: i for i, name in enumerate(RELATIONS)}

MAGIC = b"SGUL"
FORMAT_VERSION = 1

LEAKY_SLOPE = 0.01

# Embedding tables use the small init; transform/attention/gate weights use a
# larger one. At 0.1 the interaction terms that drive contrastive learning
# are third-order-small and descent stalls on the uniform-score saddle.
EMB_INIT_SCALE = 0.1
WEIGHT_INIT_SCALE = 0.25


def bucket_of(text: str, buckets: int) -> int:
    digest = hashlib.md5(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % buckets


@dataclass
class LayerParams:
    W: np.ndarray  # (R, d, d) per-relation transforms
    a: np.ndarray  # (2d,) attention vector
    b: np.ndarray  # (d,) bias


@dataclass
class LinkerModel:
    embedding_dim: int
    buckets: int
    tok_emb: np.ndarray  # (B, d)
    lab_emb: np.ndarray  # (B, d)
    rel_emb: np.ndarray  # (R, d)
    layers: list[LayerParams]
    W_g: np.ndarray  # (d, d)
    W_q: np.ndarray
    W_k: np.ndarray
    rng_seed: int

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in the canonical serialization order."""
        items = [
            ("tok_emb", self.tok_emb),
            ("lab_emb", self.lab_emb),
            ("rel_emb", self.rel_emb),
        ]
        for l, layer in enumerate(self.layers):
            items.append((f"layer{l}.W", layer.W))
            items.append((f"layer{l}.a", layer.a))
            items.append((f"layer{l}.b", layer.b))
        items.extend([("W_g", self.W_g), ("W_q", self.W_q), ("W_k", self.W_k)])
        return items

    def param(self, name: str) -> np.ndarray:
        for key, arr in self.param_items():
            if key == name:
                return arr
        raise KeyError(name)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.param_items()}

    def copy(self) -> "LinkerModel":
        return LinkerModel(
            embedding_dim=self.embedding_dim,
            buckets=self.buckets,
            tok_emb=self.tok_emb.copy(),
            lab_emb=self.lab_emb.copy(),
            rel_emb=self.rel_emb.copy(),
            layers=[
                LayerParams(W=l.W.copy(), a=l.a.copy(), b=l.b.copy()) for l in self.layers
            ],
            W_g=self.W_g.copy(),
            W_q=self.W_q.copy(),
            W_k=self.W_k.copy(),
            rng_seed=self.rng_seed,
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.param_items()])

    def load_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for _, arr in self.param_items():
            size = arr.size
            arr[...] = flat[offset : offset + size].reshape(arr.shape)
            offset += size
        if offset != flat.size:
            raise ValueError("flat parameter vector size mismatch")

    def apply_gradients(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, arr in self.param_items():
            arr -= lr * grads[name]


def init_model(
    embedding_dim: int = 32,
    buckets: int = 4096,
    n_layers: int = 2,
    rng_seed: int = 42,
) -> LinkerModel:
    """Deterministic uniform initialization in a fixed draw order."""
    if embedding_dim < 2:
        raise ValueError("embedding_dim must be >= 2")
    if n_layers < 1:
        raise ValueError("need at least one layer")
    rng = np.random.default_rng(rng_seed)
    e = lambda *shape: rng.uniform(-EMB_INIT_SCALE, EMB_INIT_SCALE, size=shape)
    w = lambda *shape: rng.uniform(-WEIGHT_INIT_SCALE, WEIGHT_INIT_SCALE, size=shape)
    R = len(RELATIONS)
    d = embedding_dim
    tok_emb = e(buckets, d)
    lab_emb = e(buckets, d)
    rel_emb = e(R, d)
    layers = [
        LayerParams(W=w(R, d, d), a=w(2 * d), b=w(d)) for _ in range(n_layers)
    ]
    return LinkerModel(
        embedding_dim=d,
        buckets=buckets,
        tok_emb=tok_emb,
        lab_emb=lab_emb,
        rel_emb=rel_emb,
        layers=layers,
        W_g=w(d, d),
        W_q=w(d, d),
        W_k=w(d, d),
        rng_seed=rng_seed,
    )


def save_model(model: LinkerModel, path: str | Path) -> None:
    path = Path(path)
    header = MAGIC + struct.pack(
        "<HIIIIQ",
        FORMAT_VERSION,
        model.embedding_dim,
        model.buckets,
        len(RELATIONS),
        model.n_layers,
        model.rng_seed & 0xFFFFFFFFFFFFFFFF,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in model.param_items():
            fh.write(arr.astype("<f4").tobytes())


def load_model(path: str | Path) -> LinkerModel:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 4 + struct.calcsize("<HIIIIQ"):
        raise ModelFormatError(f"model file {path} is truncated")
    if data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic in {path}: {data[:4]!r}")
    version, dim, buckets, n_rel, n_layers, seed = struct.unpack_from("<HIIIIQ", data, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if n_rel != len(RELATIONS):
        raise ModelFormatError(
            f"model built for {n_rel} relations, this build has {len(RELATIONS)}"
        )
    model = init_model(embedding_dim=dim, buckets=buckets, n_layers=n_layers, rng_seed=seed)
    offset = 4 + struct.calcsize("<HIIIIQ")
    for _, arr in model.param_items():
        count = arr.size
        raw = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        if raw.size != count:
            raise ModelFormatError(f"model file {path} is truncated")
        arr[...] = raw.reshape(arr.shape).astype(np.float64)
        offset += count * 4
    if offset != len(data):
        raise ModelFormatError(f"trailing bytes in model file {path}")
    return model
