"""Candidate pool generation.

Quasi-random points are drawn in a low-dimensional intrinsic space from an
Owen-scrambled Sobol sequence and pushed through a fixed random projection
into the soft-prompt space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

_BITS = 32
MAX_SOBOL_DIM = qmc.Sobol.MAXDIM

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n: int = 10_000
    intrinsic_dim: int = 10
    tokens: int = 5
    width: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.intrinsic_dim < 1:
            raise ValueError("intrinsic_dim must be >= 1")
        if self.tokens < 1 or self.width < 1:
            raise ValueError("tokens and width must be >= 1")
        if self.intrinsic_dim > self.tokens * self.width:
            raise ValueError("intrinsic_dim cannot exceed tokens * width")

    @property
    def prompt_length(self) -> int:
        return self.tokens * self.width


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _owen_scramble(ints: np.ndarray, seed: int) -> np.ndarray:
    """Nested uniform (Owen) scramble of 32-bit Sobol integers.

    Every node of the binary digit tree, identified by its depth and the
    digits above it, owns an independent flip bit derived from a hash of
    (seed, dimension, node). Flipping digit k by the bit of the node reached
    through the original leading k digits is exactly Owen's construction.
    """
    n, dim = ints.shape
    seed_state = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    dims = np.arange(dim, dtype=np.uint64)
    base = _mix64(seed_state + (dims + np.uint64(1)) * _GOLDEN)[None, :]
    out = ints.copy()
    for k in range(_BITS):
        prefix = ints >> np.uint64(_BITS - k) if k else np.zeros_like(ints)
        node = prefix | np.uint64(1 << k)
        flip = _mix64(node ^ base) >> np.uint64(63)
        out ^= flip << np.uint64(_BITS - 1 - k)
    return out


def sobol_points(n: int, dim: int, seed: int | None = None) -> np.ndarray:
    """First ``n`` Sobol points in ``[0, 1)^dim``, skipping the origin.

    ``seed=None`` returns the canonical unscrambled sequence; any integer
    seed applies an Owen scramble keyed on that seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= dim <= MAX_SOBOL_DIM:
        raise UnsupportedDimensionError(
            f"dim={dim} outside supported range 1..{MAX_SOBOL_DIM}")
    engine = qmc.Sobol(dim, scramble=False, bits=_BITS)
    engine.fast_forward(1)
    # floats are k / 2**32 exactly, so the integer digits round-trip
    ints = np.rint(engine.random(n) * 2.0**_BITS).astype(np.uint64)
    if seed is not None:
        ints = _owen_scramble(ints, int(seed))
    return ints.astype(np.float64) / 2.0**_BITS


def projection_matrix(intrinsic_dim: int, out_dim: int, seed: int) -> np.ndarray:
    """``out_dim x intrinsic_dim`` matrix with i.i.d. U[-1, 1] entries."""
    if intrinsic_dim < 1 or out_dim < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(out_dim, intrinsic_dim))


def _sub_seeds(seed: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    sobol_seed, proj_seed = ss.generate_state(2, dtype=np.uint64)
    return int(sobol_seed), int(proj_seed)


def intrinsic_points(cfg: SamplerConfig) -> np.ndarray:
    """Scrambled Sobol points rescaled to ``[-1, 1)``."""
    sobol_seed, _ = _sub_seeds(cfg.seed)
    return 2.0 * sobol_points(cfg.n, cfg.intrinsic_dim, sobol_seed) - 1.0


def generate_pool(cfg: SamplerConfig) -> np.ndarray:
    """Return the pool as an ``n x (tokens * width)`` array, one row per candidate."""
    _, proj_seed = _sub_seeds(cfg.seed)
    proj = projection_matrix(cfg.intrinsic_dim, cfg.prompt_length, proj_seed)
    return intrinsic_points(cfg) @ proj.T
