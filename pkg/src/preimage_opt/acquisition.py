"""NeuralUCB acquisition: gradient-feature confidence and masked UCB argmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictor import PredictorParams, forward_many, param_gradients

FULL_MODE_MAX_PARAMS = 2500


class PoolExhaustedError(RuntimeError):
    pass


@dataclass
class ConfidenceState:
    """Either the diagonal of ``V`` or the full inverse ``V^-1``.

    ``V = sum_tau g_tau g_tau^T + lambda I`` over the scored gradients.
    """

    mode: str
    lam: float = 0.1
    beta: float = 1.0
    diag: np.ndarray | None = None
    V_inv: np.ndarray | None = None


def sherman_morrison_update(a_inv: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse of ``A + u u^T`` from ``A^-1`` (A symmetric)."""
    au = a_inv @ u
    return a_inv - np.outer(au, au) / (1.0 + u @ au)


def _diag_blocks(params: PredictorParams, emb: np.ndarray, lam: float):
    """Diagonal of V split per parameter block, without forming gradients."""
    pre = emb @ params.W1.T + params.b1
    act = np.maximum(pre, 0.0)
    gate_sq = (pre > 0) * params.W2[0] ** 2  # (dm/dpre)^2
    d_w1 = lam + gate_sq.T @ (emb * emb)
    d_b1 = lam + gate_sq.sum(0)
    d_w2 = lam + (act * act).sum(0)
    d_b2 = lam + len(emb)
    return d_w1, d_b1, d_w2, d_b2


def rebuild_confidence(params: PredictorParams, scored_embeddings: np.ndarray,
                       lam: float = 0.1, mode: str = "diagonal",
                       beta: float = 1.0) -> ConfidenceState:
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    emb = np.asarray(scored_embeddings, dtype=float).reshape(-1, params.d_e)
    if mode == "diagonal":
        d_w1, d_b1, d_w2, d_b2 = _diag_blocks(params, emb, lam)
        diag = np.concatenate([d_w1.ravel(), d_b1, d_w2, [d_b2]])
        return ConfidenceState("diagonal", lam, beta, diag=diag)
    if mode == "full":
        p = params.n_params
        if p > FULL_MODE_MAX_PARAMS:
            raise ValueError(f"full mode limited to {FULL_MODE_MAX_PARAMS} parameters, got {p}")
        v_inv = np.eye(p) / lam
        for g in param_gradients(params, emb) if len(emb) else []:
            v_inv = sherman_morrison_update(v_inv, g)
        return ConfidenceState("full", lam, beta, V_inv=v_inv)
    raise ValueError(f"unknown confidence mode {mode!r}")


def sigma(state: ConfidenceState, grad: np.ndarray) -> float:
    g = np.asarray(grad, dtype=float)
    if state.mode == "diagonal":
        q = float(np.sum(g * g / state.diag))
    else:
        q = float(g @ state.V_inv @ g)
    return float(np.sqrt(max(q, 0.0)))


def sigma_many(params: PredictorParams, state: ConfidenceState, emb: np.ndarray) -> np.ndarray:
    """sigma for every row of ``emb``; diagonal mode never materializes gradients."""
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    if state.mode == "full":
        g = param_gradients(params, emb)
        q = np.einsum("ij,jk,ik->i", g, state.V_inv, g)
        return np.sqrt(np.maximum(q, 0.0))
    h, d = params.hidden, params.d_e
    diag = state.diag
    inv_w1 = 1.0 / diag[:h * d].reshape(h, d)
    inv_b1 = 1.0 / diag[h * d:h * d + h]
    inv_w2 = 1.0 / diag[h * d + h:h * d + 2 * h]
    inv_b2 = 1.0 / diag[-1]
    pre = emb @ params.W1.T + params.b1
    act = np.maximum(pre, 0.0)
    gate_sq = (pre > 0) * params.W2[0] ** 2
    q = (gate_sq * ((emb * emb) @ inv_w1.T)).sum(1)
    q += gate_sq @ inv_b1
    q += (act * act) @ inv_w2
    q += inv_b2
    return np.sqrt(np.maximum(q, 0.0))


def ucb_value(mu, sig, beta: float = 1.0):
    return mu + np.sqrt(beta) * sig


def ucb_scores(params: PredictorParams, state: ConfidenceState, emb: np.ndarray) -> np.ndarray:
    return ucb_value(forward_many(params, emb), sigma_many(params, state, emb), state.beta)


def select_next(params: PredictorParams, state: ConfidenceState, emb: np.ndarray,
                mask: np.ndarray) -> int:
    """Index of the highest-UCB candidate with ``mask`` False; lowest index on ties."""
    mask = np.asarray(mask, dtype=bool)
    open_idx = np.flatnonzero(~mask)
    if open_idx.size == 0:
        raise PoolExhaustedError("every candidate is already scored")
    vals = ucb_scores(params, state, np.asarray(emb)[open_idx])
    return int(open_idx[int(np.argmax(vals))])
