"""One-hidden-layer ReLU score predictor with hand-written gradients.

Parameters flatten in the fixed order ``W1`` (row-major), ``b1``, ``W2``,
``b2``; every gradient vector in this package uses that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class PredictorParams:
    W1: np.ndarray  # hidden x d_e
    b1: np.ndarray  # hidden
    W2: np.ndarray  # 1 x hidden
    b2: float

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def d_e(self) -> int:
        return self.W1.shape[1]

    @property
    def n_params(self) -> int:
        return self.W1.size + self.b1.size + self.W2.size + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), [self.b2]])

    @classmethod
    def from_flat(cls, theta: np.ndarray, d_e: int, hidden: int) -> "PredictorParams":
        theta = np.asarray(theta, dtype=float)
        h, d = hidden, d_e
        expected = h * d + 2 * h + 1
        if theta.size != expected:
            raise ValueError(f"expected {expected} parameters, got {theta.size}")
        return cls(theta[:h * d].reshape(h, d).copy(), theta[h * d:h * d + h].copy(),
                   theta[h * d + h:h * d + 2 * h].reshape(1, h).copy(), float(theta[-1]))

    def copy(self) -> "PredictorParams":
        return PredictorParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), float(self.b2))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.001
    gamma_max: float = 0.1
    warmup_T: int = 500
    pair_cap: int = 64
    init_seed: int = 0
    hidden: int = 100
    warm_start: bool = False
    mse_weighting: str = "candidate"  # or "preimage"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.warmup_T < 1:
            raise ValueError("warmup_T must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.pair_cap < 1:
            raise ValueError("pair_cap must be >= 1")
        if self.gamma_max < 0:
            raise ValueError("gamma_max must be >= 0")
        if self.mse_weighting not in ("candidate", "preimage"):
            raise ValueError(f"unknown mse_weighting {self.mse_weighting!r}")


def init_params(d_e: int, hidden: int = 100, seed: int = 0) -> PredictorParams:
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / d_e)
    a2 = np.sqrt(6.0 / hidden)
    return PredictorParams(rng.uniform(-a1, a1, (hidden, d_e)), np.zeros(hidden),
                           rng.uniform(-a2, a2, (1, hidden)), 0.0)


def _check_shape(params: PredictorParams, e: np.ndarray) -> None:
    if e.shape[-1] != params.d_e:
        raise ValueError(f"embedding length {e.shape[-1]} != predictor input {params.d_e}")


def forward_many(params: PredictorParams, emb: np.ndarray) -> np.ndarray:
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    _check_shape(params, emb)
    act = np.maximum(emb @ params.W1.T + params.b1, 0.0)
    return act @ params.W2[0] + params.b2


def forward(params: PredictorParams, e) -> float:
    return float(forward_many(params, np.asarray(e, dtype=float)[None, :])[0])


def param_gradients(params: PredictorParams, emb: np.ndarray) -> np.ndarray:
    """Per-example gradients ``dm/dtheta`` as an ``n x p`` matrix."""
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    _check_shape(params, emb)
    pre = emb @ params.W1.T + params.b1
    act = np.maximum(pre, 0.0)
    gate = (pre > 0) * params.W2[0]  # dm/dpre, n x hidden
    n = len(emb)
    g_w1 = (gate[:, :, None] * emb[:, None, :]).reshape(n, -1)
    return np.hstack([g_w1, gate, act, np.ones((n, 1))])


def param_gradient(params: PredictorParams, e) -> np.ndarray:
    return param_gradients(params, np.asarray(e, dtype=float)[None, :])[0]


def _backprop(params: PredictorParams, emb: np.ndarray, pre: np.ndarray,
              act: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Flat gradient of ``sum_i coef_i * m(e_i)`` given cached activations."""
    d_pre = np.outer(coef, params.W2[0]) * (pre > 0)
    return np.concatenate([(d_pre.T @ emb).ravel(), d_pre.sum(0),
                           coef @ act, [coef.sum()]])


def _activations(params: PredictorParams, emb: np.ndarray):
    pre = emb @ params.W1.T + params.b1
    act = np.maximum(pre, 0.0)
    return pre, act, act @ params.W2[0] + params.b2


def mse_loss(params: PredictorParams, emb: np.ndarray, scores: np.ndarray,
             weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean squared error over scored candidates and its exact gradient.

    ``weights`` (summing to one) replaces the uniform ``1/n`` average.
    """
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    scores = np.asarray(scores, dtype=float)
    if len(emb) == 0:
        raise ValueError("mse_loss needs at least one scored candidate")
    _check_shape(params, emb)
    w = np.full(len(emb), 1.0 / len(emb)) if weights is None else np.asarray(weights)
    pre, act, out = _activations(params, emb)
    r = out - scores
    return float(w @ r**2), _backprop(params, emb, pre, act, 2.0 * w * r)


@dataclass
class PairSet:
    """Index pairs drawn from unscored groups with per-pair weights.

    Weights average pairs within a group, then groups with each other.
    """

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray

    @property
    def empty(self) -> bool:
        return self.a.size == 0


def build_pairs(groups: Sequence[Sequence[int]], pair_cap: int, pair_seed: int) -> PairSet:
    rng = np.random.default_rng(pair_seed)
    a_parts, b_parts, counts = [], [], []
    for members in groups:
        m = np.asarray(members, dtype=np.int64)
        k = len(m)
        if k < 2:
            continue
        n_pairs = k * (k - 1) // 2
        iu, ju = np.triu_indices(k, 1)
        if n_pairs > pair_cap:
            pick = np.sort(rng.choice(n_pairs, size=pair_cap, replace=False))
            iu, ju = iu[pick], ju[pick]
        a_parts.append(m[iu])
        b_parts.append(m[ju])
        counts.append(len(iu))
    if not counts:
        z = np.zeros(0, dtype=np.int64)
        return PairSet(z, z.copy(), np.zeros(0))
    w = np.concatenate([np.full(c, 1.0 / c) for c in counts]) / len(counts)
    return PairSet(np.concatenate(a_parts), np.concatenate(b_parts), w)


def _pair_terms(out: np.ndarray, pairs: PairSet, n: int) -> tuple[float, np.ndarray]:
    d = out[pairs.a] - out[pairs.b]
    loss = float(pairs.w @ d**2)
    g = 2.0 * pairs.w * d
    coef = np.bincount(pairs.a, weights=g, minlength=n) - np.bincount(pairs.b, weights=g, minlength=n)
    return loss, coef


def consistency_loss(params: PredictorParams, unscored_groups: Sequence[np.ndarray],
                     pair_cap: int = 64, pair_seed: int = 0) -> tuple[float, np.ndarray]:
    """Within-group squared prediction differences, averaged per group then
    across groups. Each entry of ``unscored_groups`` is an ``n_g x d_e`` array.
    """
    sets = [np.atleast_2d(np.asarray(g, dtype=float)) for g in unscored_groups
            if len(g) >= 2]
    if not sets:
        return 0.0, np.zeros(params.n_params)
    emb = np.vstack(sets)
    offsets = np.cumsum([0] + [len(s) for s in sets])
    pairs = build_pairs([range(offsets[i], offsets[i + 1]) for i in range(len(sets))],
                        pair_cap, pair_seed)
    pre, act, out = _activations(params, emb)
    loss, coef = _pair_terms(out, pairs, len(emb))
    return loss, _backprop(params, emb, pre, act, coef)


def gamma_schedule(t: int, gamma_max: float, T: int) -> float:
    return gamma_max * min(1.0, t / T)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, p: int) -> "AdamState":
        return cls(np.zeros(p), np.zeros(p), 0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float) -> tuple[np.ndarray, AdamState]:
    t = state.t + 1
    m = BETA1 * state.m + (1 - BETA1) * grad
    v = BETA2 * state.v + (1 - BETA2) * grad * grad
    m_hat = m / (1 - BETA1**t)
    v_hat = v / (1 - BETA2**t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), AdamState(m, v, t)


@dataclass
class TrainingData:
    """Training inputs expressed as indices into a shared embedding matrix."""

    embeddings: np.ndarray
    scored: np.ndarray
    scores: np.ndarray
    unscored_groups: list = field(default_factory=list)
    scored_groups: np.ndarray | None = None  # group id per scored candidate


def _mse_weights(data: TrainingData, mode: str) -> np.ndarray:
    n = len(data.scored)
    if mode == "candidate" or data.scored_groups is None:
        return np.full(n, 1.0 / n)
    gid = np.asarray(data.scored_groups)
    _, inv, counts = np.unique(gid, return_inverse=True, return_counts=True)
    return 1.0 / (counts[inv] * len(counts))


def combined_loss(params: PredictorParams, data: TrainingData, pairs: PairSet,
                  gamma: float, mse_weighting: str = "candidate"):
    """``L_mse + gamma * L_cons`` with its gradient, evaluated on the union of
    scored and paired points in a single forward/backward pass."""
    pts = np.unique(np.concatenate([data.scored, pairs.a, pairs.b]))
    local = np.searchsorted(pts, data.scored)
    pa, pb = np.searchsorted(pts, pairs.a), np.searchsorted(pts, pairs.b)
    return _combined(params, data.embeddings[pts], local, np.asarray(data.scores, float),
                     _mse_weights(data, mse_weighting), PairSet(pa, pb, pairs.w), gamma)


def _combined(params, emb, local, y, w, pairs, gamma):
    pre, act, out = _activations(params, emb)
    r = out[local] - y
    mse = float(w @ r**2)
    coef = np.bincount(local, weights=2.0 * w * r, minlength=len(emb))
    cons = 0.0
    if gamma > 0 and not pairs.empty:
        cons, c_coef = _pair_terms(out, pairs, len(emb))
        coef = coef + gamma * c_coef
    return mse + gamma * cons, mse, cons, _backprop(params, emb, pre, act, coef)


def train(data: TrainingData, cfg: TrainConfig, init: PredictorParams | int | None = None,
          pair_seed: int = 0) -> PredictorParams:
    """Full-batch Adam on ``L_mse + gamma(t) * L_cons``.

    ``init`` is either starting parameters (warm start) or a seed for a fresh
    initialization; ``None`` uses ``cfg.init_seed``.
    """
    if len(data.scored) == 0:
        raise ValueError("training needs at least one scored candidate")
    d_e = data.embeddings.shape[1]
    if isinstance(init, PredictorParams):
        params = init.copy()
    else:
        params = init_params(d_e, cfg.hidden, cfg.init_seed if init is None else init)
    pairs = PairSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    if cfg.gamma_max > 0 and data.unscored_groups:
        pairs = build_pairs(data.unscored_groups, cfg.pair_cap, pair_seed)
    pts = np.unique(np.concatenate([data.scored, pairs.a, pairs.b]))
    emb = data.embeddings[pts]
    local = np.searchsorted(pts, data.scored)
    local_pairs = PairSet(np.searchsorted(pts, pairs.a), np.searchsorted(pts, pairs.b), pairs.w)
    y = np.asarray(data.scores, dtype=float)
    w = _mse_weights(data, cfg.mse_weighting)

    theta = params.flat()
    state = AdamState.zeros(theta.size)
    h = params.hidden
    for t in range(cfg.epochs):
        gamma = gamma_schedule(t, cfg.gamma_max, cfg.warmup_T)
        total, mse, cons, grad = _combined(params, emb, local, y, w, local_pairs, gamma)
        if not (np.isfinite(total) and np.isfinite(grad).all()):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {t}: mse={mse!r} cons={cons!r} gamma={gamma}")
        theta, state = adam_step(theta, grad, state, cfg.learning_rate)
        params = PredictorParams.from_flat(theta, d_e, h)
    return params
