"""RBF kernels, MMD^2 and the greedy coverage-driven choice of initial groups."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import PreimageIndex

_CHUNK = 512
_EXACT_PDIST_LIMIT = 4000


class DegenerateSetError(ValueError):
    pass


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel settings.

    ``bandwidth`` is a positive float or ``"median"``. ``squared=False``
    switches to the ``exp(-|x - y| / 2 sigma^2)`` variant.
    """

    bandwidth: float | str = "median"
    squared: bool = True

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")


@dataclass
class InitSelection:
    selected_groups: list[int]
    n_init: int
    truncated: bool = False
    bandwidth: float = float("nan")
    mmd_per_step: list[float] = field(default_factory=list)
    cov_per_step: list[float] = field(default_factory=list)


def rbf_kernel(x, y, bandwidth: float, squared: bool = True) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("kernel inputs must have equal length")
    d2 = float(np.sum((x - y) ** 2))
    dist = d2 if squared else np.sqrt(d2)
    return float(np.exp(-dist / (2.0 * bandwidth**2)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, bandwidth: float,
                  squared: bool = True) -> np.ndarray:
    # cdist subtracts before squaring, so near-duplicate points keep full precision
    metric = "sqeuclidean" if squared else "euclidean"
    dist = cdist(np.atleast_2d(a), np.atleast_2d(b), metric)
    return np.exp(-dist / (2.0 * bandwidth**2))


def kernel_row_sums(a: np.ndarray, b: np.ndarray, bandwidth: float,
                    squared: bool = True) -> np.ndarray:
    """``sum_j k(a_i, b_j)`` for every row of ``a``, computed in chunks."""
    out = np.empty(len(a))
    for s in range(0, len(a), _CHUNK):
        out[s:s + _CHUNK] = kernel_matrix(a[s:s + _CHUNK], b, bandwidth, squared).sum(1)
    return out


def _median_of_sorted_positions(values: np.ndarray, lo: int, hi: int) -> float:
    part = np.partition(values, (lo, hi))
    return 0.5 * (part[lo] + part[hi])


def median_bandwidth(points) -> float:
    """Median pairwise distance over pairs of distinct points.

    Exact for any size; large sets use two passes (histogram, then a
    selection inside the bin holding the middle order statistics) so the
    full distance list never has to sit in memory.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        raise DegenerateSetError("need at least two points")
    if pts.shape[0] <= _EXACT_PDIST_LIMIT:
        d = pdist(pts)
        d = d[d > 0]
        if d.size == 0:
            raise DegenerateSetError("all points are identical")
        m = d.size
        return float(_median_of_sorted_positions(d, (m - 1) // 2, m // 2))
    return _median_two_pass(pts)


def _upper_dists(pts: np.ndarray):
    """Yield the nonzero distances of all pairs i < j, block by block."""
    n = len(pts)
    for s in range(0, n, _CHUNK):
        block = pts[s:s + _CHUNK]
        v = pdist(block)
        yield v[v > 0]
        if s + _CHUNK < n:
            v = cdist(block, pts[s + _CHUNK:]).ravel()
            yield v[v > 0]


def _median_two_pass(pts: np.ndarray, n_bins: int = 8192) -> float:
    center = pts.mean(0)
    upper = 2.0 * np.sqrt(((pts - center) ** 2).sum(1).max()) * (1 + 1e-9) + 1e-12
    scale = n_bins / upper

    def bin_of(v):
        return np.minimum((v * scale).astype(np.int64), n_bins - 1)

    counts = np.zeros(n_bins, dtype=np.int64)
    for v in _upper_dists(pts):
        counts += np.bincount(bin_of(v), minlength=n_bins)
    total = int(counts.sum())
    if total == 0:
        raise DegenerateSetError("all points are identical")
    lo, hi = (total - 1) // 2, total // 2
    cum = np.cumsum(counts)
    b_lo = int(np.searchsorted(cum, lo, side="right"))
    b_hi = int(np.searchsorted(cum, hi, side="right"))
    before = int(cum[b_lo - 1]) if b_lo > 0 else 0
    kept = []
    for v in _upper_dists(pts):
        b = bin_of(v)
        kept.append(v[(b >= b_lo) & (b <= b_hi)])
    window = np.sort(np.concatenate(kept))
    return float(0.5 * (window[lo - before] + window[hi - before]))


def _union_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.unique(np.vstack([x, y]), axis=0)


def resolve_bandwidth(kernel: KernelConfig, points: np.ndarray) -> float:
    if kernel.bandwidth == "median":
        return median_bandwidth(points)
    return float(kernel.bandwidth)


def mmd_squared(x, y, kernel: KernelConfig | float = KernelConfig()) -> float:
    """Biased (V-statistic) MMD^2 between two point sets, self-pairs included."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0 or y.shape[0] == 0 or x.size == 0 or y.size == 0:
        raise ValueError("MMD needs two non-empty sets")
    if not isinstance(kernel, KernelConfig):
        kernel = KernelConfig(float(kernel))
    bw = resolve_bandwidth(kernel, _union_rows(x, y))
    kxx = kernel_row_sums(x, x, bw, kernel.squared).sum() / len(x) ** 2
    kyy = kernel_row_sums(y, y, bw, kernel.squared).sum() / len(y) ** 2
    kxy = kernel_row_sums(x, y, bw, kernel.squared).sum() / (len(x) * len(y))
    return float(kxx + kyy - 2.0 * kxy)


# -- coverage scores (direct definitions; greedy_init uses a cached equivalent) --

def s_size(group_sizes: Sequence[int], i: int) -> float:
    sizes = np.asarray(group_sizes)
    return float(sizes[i] / sizes.max())


def _union(selected: np.ndarray | None, group: np.ndarray) -> np.ndarray:
    if selected is None or len(selected) == 0:
        return group
    return np.vstack([selected, group])


def s_rep(i: int, selected, groups: Sequence[np.ndarray], total: np.ndarray,
          kernel: KernelConfig | float, candidates: Sequence[int] | None = None) -> float:
    """``1 - MMD^2(G_i + S, T) / max_j MMD^2(G_j + S, T)`` over candidate groups.

    ``candidates`` defaults to every group; the caller excludes selected ones.
    A float ``kernel`` is used as the bandwidth directly.
    """
    if not isinstance(kernel, KernelConfig):
        kernel = KernelConfig(float(kernel))
    if candidates is None:
        candidates = range(len(groups))
    candidates = list(candidates)
    if i not in candidates:
        raise ValueError(f"group {i} is not a candidate")
    vals = {j: mmd_squared(_union(selected, groups[j]), total, kernel) for j in candidates}
    top = max(vals.values())
    if top <= 0:
        return 0.0
    return float(1.0 - vals[i] / top)


def s_cov(i: int, group_sizes: Sequence[int], selected, groups, total, kernel,
          candidates=None) -> float:
    return s_size(group_sizes, i) + s_rep(i, selected, groups, total, kernel, candidates)


class CoverageCache:
    """Kernel sums that let each greedy step score all groups without
    recomputing unions.

    With S the running selection, G_i a candidate group and T the pool::

        MMD^2(G_i + S, T) = (k(S,S) + 2 k(S,G_i) + k(G_i,G_i)) / (|S|+|G_i|)^2
                            + k(T,T) / |T|^2
                            - 2 (k(S,T) + k(G_i,T)) / ((|S|+|G_i|) |T|)

    where k(A,B) is the kernel sum over A x B.
    """

    def __init__(self, index: PreimageIndex, embeddings: np.ndarray, bandwidth: float,
                 squared: bool = True):
        self.index = index
        self.emb = np.asarray(embeddings, dtype=float)
        self.bw = bandwidth
        self.squared = squared
        n = len(self.emb)
        self.n_total = n
        self.row_t = kernel_row_sums(self.emb, self.emb, bandwidth, squared)
        self.k_tt = float(self.row_t.sum())
        c2g = index.candidate_to_group
        self.group_t = np.bincount(c2g, weights=self.row_t, minlength=index.n_groups)
        self.sizes = index.sizes().astype(float)
        self.self_sum = np.array([
            kernel_matrix(self.emb[list(g.members)], self.emb[list(g.members)],
                          bandwidth, squared).sum()
            for g in index.groups
        ])
        self.cross_s = np.zeros(index.n_groups)
        self.s_self = 0.0
        self.s_t = 0.0
        self.n_s = 0.0

    def union_mmd(self) -> np.ndarray:
        """MMD^2(G_i + S, T) for every group i."""
        m = self.n_s + self.sizes
        return ((self.s_self + 2.0 * self.cross_s + self.self_sum) / m**2
                + self.k_tt / self.n_total**2
                - 2.0 * (self.s_t + self.group_t) / (m * self.n_total))

    def selection_mmd(self) -> float:
        if self.n_s == 0:
            return float("nan")
        return float(self.s_self / self.n_s**2 + self.k_tt / self.n_total**2
                     - 2.0 * self.s_t / (self.n_s * self.n_total))

    def add(self, gi: int) -> None:
        members = list(self.index.groups[gi].members)
        k = kernel_matrix(self.emb[members], self.emb, self.bw, self.squared).sum(0)
        self.s_self += 2.0 * self.cross_s[gi] + self.self_sum[gi]
        self.s_t += self.group_t[gi]
        self.n_s += self.sizes[gi]
        self.cross_s += np.bincount(self.index.candidate_to_group, weights=k,
                                    minlength=self.index.n_groups)


def coverage_scores(cache: CoverageCache, candidates: np.ndarray) -> np.ndarray:
    """S_cov for each candidate group id, normalizing S_rep over ``candidates``."""
    mmd = cache.union_mmd()[candidates]
    top = mmd.max()
    rep = 1.0 - mmd / top if top > 0 else np.zeros_like(mmd)
    size = cache.sizes[candidates] / cache.sizes.max()
    return size + rep


def subset_mmd(cache: CoverageCache, members: np.ndarray) -> float:
    """MMD^2 between the candidates ``members`` and the whole pool, reusing
    the cached pool kernel sums."""
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("empty subset")
    sub = cache.emb[members]
    k_ss = kernel_matrix(sub, sub, cache.bw, cache.squared).sum()
    n, m = cache.n_total, len(members)
    return float(k_ss / m**2 + cache.k_tt / n**2 - 2.0 * cache.row_t[members].sum() / (m * n))


def greedy_select(cache: CoverageCache, n_init: int, min_group_size: int) -> InitSelection:
    index = cache.index
    sizes = index.sizes()
    available = np.ones(index.n_groups, dtype=bool)
    big = sizes >= min_group_size
    sel = InitSelection([], n_init, bandwidth=cache.bw)
    target = min(n_init, index.n_groups)
    sel.truncated = target < n_init
    while len(sel.selected_groups) < target:
        pool = available & big
        if not pool.any():
            pool = available
        candidates = np.flatnonzero(pool)
        scores = coverage_scores(cache, candidates)
        pick = int(candidates[int(np.argmax(scores))])
        sel.cov_per_step.append(float(scores.max()))
        cache.add(pick)
        available[pick] = False
        sel.selected_groups.append(pick)
        sel.mmd_per_step.append(cache.selection_mmd())
    return sel


def greedy_init(index: PreimageIndex, embeddings: np.ndarray, n_init: int = 40,
                min_group_size: int = 5, kernel: KernelConfig = KernelConfig(),
                bandwidth: float | None = None) -> InitSelection:
    """Select ``n_init`` preimage groups greedily by coverage score.

    Groups smaller than ``min_group_size`` are only considered once the
    eligible ones run out. Ties go to the lowest group index.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    emb = np.asarray(embeddings, dtype=float)
    bw = bandwidth if bandwidth is not None else resolve_bandwidth(kernel, emb)
    return greedy_select(CoverageCache(index, emb, bw, kernel.squared), n_init, min_group_size)
