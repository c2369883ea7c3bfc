"""Candidate -> key mapping, candidate -> embedding, and preimage indexing."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import Key, PreimageGroup, PreimageIndex


@runtime_checkable
class Mapper(Protocol):
    deterministic: bool

    def map(self, z: np.ndarray) -> Key: ...


@runtime_checkable
class Embedder(Protocol):
    width: int

    def embed(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SyntheticMapperConfig:
    """Lattice quantizer over a seeded linear latent projection.

    ``warp`` > 1 radially stretches the latent (``u * |u|**(warp - 1)``)
    before quantization, which compresses the dense core into a few large
    cells and yields the heavy-tailed preimage sizes seen with real LLM
    mappers. ``warp=1`` is the plain linear quantizer.
    """

    latent_dim: int = 4
    resolution: float | tuple[float, ...] = 1.0
    latent_projection_seed: int = 0
    warp: float = 1.0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        res = np.atleast_1d(np.asarray(self.resolution, dtype=float))
        if res.size not in (1, self.latent_dim) or not (res > 0).all():
            raise ValueError("resolution must be > 0, scalar or one per latent axis")
        if self.warp <= 0:
            raise ValueError("warp must be > 0")
        if isinstance(self.resolution, list):
            object.__setattr__(self, "resolution", tuple(self.resolution))

    @property
    def steps(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.resolution, dtype=float),
                               (self.latent_dim,))


def latent_projection(cfg: SyntheticMapperConfig, prompt_length: int) -> np.ndarray:
    rng = np.random.default_rng(cfg.latent_projection_seed)
    return rng.standard_normal((cfg.latent_dim, prompt_length)) / np.sqrt(prompt_length)


class SyntheticMapper:
    """Desk-scale stand-in for the instruction-generating model."""

    deterministic = True

    def __init__(self, cfg: SyntheticMapperConfig, prompt_length: int):
        self.cfg = cfg
        self.q = latent_projection(cfg, prompt_length)
        self.steps = cfg.steps

    def latent(self, z: np.ndarray) -> np.ndarray:
        u = np.asarray(z, dtype=float) @ self.q.T
        if self.cfg.warp != 1.0:
            r = np.linalg.norm(u, axis=-1, keepdims=True)
            u = u * r ** (self.cfg.warp - 1.0)
        return u

    def map_many(self, pool: np.ndarray) -> list[Key]:
        cells = np.floor(self.latent(pool) / self.steps).astype(np.int64)
        return [tuple(int(c) for c in row) for row in cells]

    def map(self, z: np.ndarray) -> Key:
        return self.map_many(np.asarray(z, dtype=float)[None, :])[0]

    def cell_center(self, key: Key) -> np.ndarray:
        """Latent point (before warping) at the center of a key's lattice cell."""
        w = (np.asarray(key, dtype=float) + 0.5) * self.steps
        if self.cfg.warp == 1.0:
            return w
        r = np.linalg.norm(w)
        return w * r ** (1.0 / self.cfg.warp - 1.0) if r > 0 else w


def synthetic_map(z: np.ndarray, cfg: SyntheticMapperConfig) -> Key:
    return SyntheticMapper(cfg, np.asarray(z).shape[-1]).map(z)


class SyntheticEmbedder:
    """Fixed random two-layer tanh feature map standing in for an LLM encoder."""

    def __init__(self, seed: int, width: int = 32, prompt_length: int | None = None,
                 hidden: int = 64):
        if width < 1:
            raise ValueError("embedding width must be >= 1")
        self.seed = seed
        self.width = width
        self.hidden = hidden
        self._weights: dict[int, tuple] = {}
        if prompt_length is not None:
            self._layers(prompt_length)

    def _layers(self, d: int):
        if d not in self._weights:
            rng = np.random.default_rng(self.seed)
            a = rng.standard_normal((self.hidden, d)) / np.sqrt(d)
            ab = rng.normal(0.0, 0.1, self.hidden)
            b = rng.standard_normal((self.width, self.hidden)) * (2.0 / np.sqrt(self.hidden))
            bb = rng.normal(0.0, 0.1, self.width)
            self._weights[d] = (a, ab, b, bb)
        return self._weights[d]

    def embed_many(self, pool: np.ndarray) -> np.ndarray:
        pool = np.asarray(pool, dtype=float)
        a, ab, b, bb = self._layers(pool.shape[-1])
        return np.tanh(np.tanh(pool @ a.T + ab) @ b.T + bb)

    def embed(self, z: np.ndarray) -> np.ndarray:
        return self.embed_many(np.asarray(z, dtype=float)[None, :])[0]


def synthetic_embed(z: np.ndarray, seed: int, d_e: int = 32) -> np.ndarray:
    return SyntheticEmbedder(seed, d_e).embed(z)


def map_pool(mapper, pool: np.ndarray) -> list[Key]:
    if hasattr(mapper, "map_many"):
        return mapper.map_many(pool)
    return [mapper.map(z) for z in pool]


def embed_pool(embedder, pool: np.ndarray) -> np.ndarray:
    if hasattr(embedder, "embed_many"):
        out = embedder.embed_many(pool)
    else:
        out = np.stack([np.asarray(embedder.embed(z), dtype=float) for z in pool])
    if out.shape[1] != embedder.width:
        raise ValueError(f"embedder returned width {out.shape[1]}, expected {embedder.width}")
    return out


def build_preimage_index(keys: Sequence[Key]) -> PreimageIndex:
    """Group candidate indices by key; groups ordered by first occurrence."""
    members: dict[Key, list[int]] = {}
    for i, k in enumerate(keys):
        members.setdefault(k, []).append(i)
    groups = [PreimageGroup(k, tuple(m)) for k, m in members.items()]
    c2g = np.empty(len(keys), dtype=np.int64)
    for gi, g in enumerate(groups):
        c2g[list(g.members)] = gi
    return PreimageIndex(groups, c2g)


_WS = re.compile(r"\s+")


def canonicalize_instruction(text: str) -> str:
    return _WS.sub(" ", text).strip()

