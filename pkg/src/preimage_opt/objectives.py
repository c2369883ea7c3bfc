"""Synthetic black-box objectives defined on instruction keys.

Every objective is a pure function of the key, so all members of one
preimage share a score by construction. Landscapes live in the synthetic
mapper's latent space and are evaluated at the center of each key's cell.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Key
from .mapping import SyntheticMapper

SHAPES = ("smooth", "rugged", "cliffed")


@dataclass(frozen=True)
class ObjectiveConfig:
    shape: str = "smooth"
    seed: int = 0
    noise: float = 0.02
    width: float = 0.5  # peak width, in units of the latent standard deviation

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown objective shape {self.shape!r}; choose from {SHAPES}")
        if self.noise < 0 or self.width <= 0:
            raise ValueError("noise must be >= 0 and width > 0")

    @property
    def name(self) -> str:
        return f"{self.shape}-{self.seed}"


def key_noise(key: Key, seed: int) -> float:
    """Uniform [-1, 1) value fixed by (key, seed); stable across processes."""
    digest = hashlib.blake2b(repr((seed, key)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**63 - 1.0


class SyntheticObjective:
    """Score landscape over latent cell centers.

    ``smooth``: a single radial bump. ``rugged``: several bumps of random
    height plus a ripple. ``cliffed``: a bump mixture quantized into
    plateaus separated by jumps. Bump centers are cells of candidates drawn
    with the objective seed, so optima sit where candidates actually are.
    """

    def __init__(self, cfg: ObjectiveConfig, mapper: SyntheticMapper, keys: Sequence[Key]):
        self.cfg = cfg
        self.mapper = mapper
        self.name = cfg.name
        self._cache: dict = {}
        rng = np.random.default_rng(cfg.seed)
        unique = list(dict.fromkeys(keys))
        centers = np.array([mapper.cell_center(k) for k in unique])
        self.scale = float(np.sqrt(np.mean(centers.var(0)))) or 1.0
        n_bumps = {"smooth": 1, "rugged": 8, "cliffed": 4}[cfg.shape]
        drawn = rng.choice(len(keys), size=n_bumps, replace=False)
        self.centers = np.array([mapper.cell_center(keys[i]) for i in drawn])
        if cfg.shape == "smooth":
            self.heights = np.ones(1)
            self.widths = np.full(1, cfg.width * self.scale)
        else:
            self.heights = rng.uniform(0.4, 1.0, n_bumps)
            self.heights[0] = 1.0
            self.widths = rng.uniform(0.5, 1.0, n_bumps) * cfg.width * self.scale
        self.ripple_dir = rng.standard_normal((3, centers.shape[1]))
        self.ripple_phase = rng.uniform(0, 2 * np.pi, 3)
        self.description = f"{cfg.shape} landscape, {n_bumps} bump(s), seed {cfg.seed}"

    def _landscape(self, c: np.ndarray) -> float:
        d2 = ((c - self.centers) ** 2).sum(1)
        # broad hill carrying a narrow peak: gradient signal far away, a sharp optimum close in
        hills = self.heights * (0.6 * np.exp(-d2 / (2.0 * (2.5 * self.widths) ** 2))
                                + 0.4 * np.exp(-d2 / (2.0 * self.widths**2)))
        value = float(hills.max())
        if self.cfg.shape == "rugged":
            ripple = np.cos(self.ripple_dir @ c / (0.3 * self.scale) + self.ripple_phase)
            return value * (0.85 + 0.15 * float(ripple.mean() * 0.5 + 0.5))
        if self.cfg.shape == "cliffed":
            return float(np.floor(value * 6.0) / 6.0)
        return value

    def __call__(self, key: Key) -> float:
        if key not in self._cache:
            raw = self._landscape(self.mapper.cell_center(key))
            raw += self.cfg.noise * key_noise(key, self.cfg.seed)
            self._cache[key] = float(np.clip(raw, 0.0, 1.0))
        return self._cache[key]


def evaluate(objective, key: Key) -> float:
    return float(objective(key))


def exhaustive_oracle(keys: Sequence[Key], objective) -> tuple[Key, float]:
    """Best key by enumerating every unique key; first occurrence wins ties."""
    best_key, best = None, -np.inf
    for k in dict.fromkeys(keys):
        s = objective(k)
        if s > best:
            best_key, best = k, s
    return best_key, float(best)
