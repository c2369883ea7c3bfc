"""End-to-end optimization campaigns.

A campaign generates the pool, maps and embeds it, builds the preimage
index, spends ``n_init`` queries on initialization and then alternates
predictor training, UCB acquisition and black-box evaluation until the
budget is used.

Arms (ablation ladder):

* ``vanilla`` - random init, no sharing, no regularization
* ``ss`` - score sharing
* ``ss_reg`` - score sharing + consistency regularization
* ``ss_init`` - score sharing + coverage initialization
* ``full`` - all three
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import io
from .acquisition import ConfidenceState, PoolExhaustedError, rebuild_confidence, select_next
from .core import (Key, PreimageGroup, PreimageIndex, RunRecord, ScoreLedger, best_candidate,
                   key_to_json, record_query, scored_mask)
from .coverage import InitSelection, KernelConfig, greedy_init
from .mapping import (SyntheticEmbedder, SyntheticMapper, SyntheticMapperConfig,
                      build_preimage_index, embed_pool, map_pool)
from .objectives import ObjectiveConfig, SyntheticObjective, exhaustive_oracle
from .predictor import PredictorParams, TrainConfig, TrainingData, train
from .sampling import SamplerConfig, generate_pool

ARMS = ("vanilla", "ss", "ss_reg", "ss_init", "full")
_SHARING = {"ss", "ss_reg", "ss_init", "full"}
_REG = {"ss_reg", "full"}
_GREEDY = {"ss_init", "full"}


class BudgetExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbedderConfig:
    seed: int = 0
    width: int = 32
    hidden: int = 64


@dataclass(frozen=True)
class AcquisitionConfig:
    lam: float = 0.1
    beta: float = 1.0
    mode: str = "diagonal"
    # "candidate": every scored candidate adds a term to V; "key": only queried ones
    terms: str = "candidate"

    def __post_init__(self):
        if self.lam <= 0 or self.beta < 0:
            raise ValueError("lam must be > 0 and beta >= 0")
        if self.mode not in ("diagonal", "full"):
            raise ValueError(f"unknown confidence mode {self.mode!r}")
        if self.terms not in ("candidate", "key"):
            raise ValueError(f"unknown confidence terms {self.terms!r}")


@dataclass(frozen=True)
class CampaignConfig:
    sampler: SamplerConfig = SamplerConfig()
    mapper: SyntheticMapperConfig = SyntheticMapperConfig()
    embedder: EmbedderConfig = EmbedderConfig()
    objective: ObjectiveConfig = ObjectiveConfig()
    kernel: KernelConfig = KernelConfig()
    train: TrainConfig = TrainConfig()
    acquisition: AcquisitionConfig = AcquisitionConfig()
    budget: int = 165
    n_init: int = 40
    min_group_size: int = 5
    seed: int = 0
    arm: str = "full"
    # pool seed follows the campaign seed unless pinned
    pin_pool_seed: bool = False
    record_timing: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 1 <= self.n_init <= self.budget:
            raise ValueError("n_init must be in [1, budget]")
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}; choose from {ARMS}")

    @property
    def pool_config(self) -> SamplerConfig:
        if self.pin_pool_seed:
            return self.sampler
        return dataclasses.replace(self.sampler, seed=self.seed)


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def standardize(emb: np.ndarray) -> np.ndarray:
    """Pool-wide zero-mean, unit-variance features for the predictor."""
    sd = emb.std(0)
    sd[sd == 0] = 1.0
    return (emb - emb.mean(0)) / sd


@dataclass
class Components:
    """Precomputed pool artifacts; any subset may be supplied from files."""

    pool: np.ndarray
    keys: list
    embeddings: np.ndarray
    index: PreimageIndex
    mapper: object = None


def build_components(cfg: CampaignConfig, pool: np.ndarray | None = None,
                     keys: list | None = None,
                     embeddings: np.ndarray | None = None) -> Components:
    if pool is None:
        pool = io.as_stored(generate_pool(cfg.pool_config))
    mapper = SyntheticMapper(cfg.mapper, pool.shape[1])
    if keys is None:
        keys = map_pool(mapper, pool)
    if embeddings is None:
        embedder = SyntheticEmbedder(cfg.embedder.seed, cfg.embedder.width,
                                     hidden=cfg.embedder.hidden)
        embeddings = io.as_stored(embed_pool(embedder, pool))
    return Components(pool, keys, embeddings, build_preimage_index(keys), mapper)


class CachedEvaluator:
    """Calls the black box at most once per key and counts real evaluations."""

    def __init__(self, fn: Callable[[Key], float]):
        self.fn = fn
        self.cache: dict = {}
        self.calls = 0

    def __call__(self, key: Key) -> float:
        if key not in self.cache:
            self.calls += 1
            self.cache[key] = float(self.fn(key))
        return self.cache[key]


@dataclass
class CampaignState:
    cfg: CampaignConfig
    comp: Components
    features: np.ndarray
    ledger: ScoreLedger
    evaluator: CachedEvaluator
    key_codes: np.ndarray
    key_queried: np.ndarray  # per key code
    objective: Callable[[Key], float] | None = None
    log: list[RunRecord] = field(default_factory=list)
    params: PredictorParams | None = None
    init: InitSelection | None = None
    round: int = 0
    best: float = -np.inf
    exhausted: bool = False
    t0: float = field(default_factory=time.perf_counter)

    @property
    def sharing(self) -> bool:
        return self.cfg.arm in _SHARING

    @property
    def queries_left(self) -> int:
        return self.cfg.budget - self.ledger.query_count


def _key_codes(keys: list) -> tuple[np.ndarray, int]:
    codes: dict = {}
    out = np.fromiter((codes.setdefault(k, len(codes)) for k in keys), dtype=np.int64,
                      count=len(keys))
    return out, len(codes)


def _query(state: CampaignState, candidate: int) -> RunRecord:
    """Evaluate the key of ``candidate`` and record it per the arm's sharing rule."""
    comp = state.comp
    key = comp.keys[candidate]
    if state.sharing:
        group = comp.index.group_of(candidate)
    else:
        group = PreimageGroup(key, (candidate,))
    score = state.evaluator(key)
    it = state.ledger.query_count
    record_query(state.ledger, group, score, it)
    state.key_queried[state.key_codes[candidate]] = True
    state.best = max(state.best, score)
    elapsed = int((time.perf_counter() - state.t0) * 1000) if state.cfg.record_timing else 0
    rec = RunRecord(it, int(candidate), key, score, group.size,
                    int(scored_mask(state.ledger).sum()), state.best, elapsed)
    state.log.append(rec)
    return rec


def random_init_candidates(key_codes: np.ndarray, n: int, seed: int) -> list[int]:
    """Uniform candidate draws, redrawn on repeated keys, until ``n`` distinct keys."""
    rng = np.random.default_rng(_seed(seed, 1))
    n = min(n, int(key_codes.max()) + 1)
    seen: set[int] = set()
    picks = []
    while len(picks) < n:
        c = int(rng.integers(len(key_codes)))
        code = int(key_codes[c])
        if code not in seen:
            seen.add(code)
            picks.append(c)
    return picks


def initialize_campaign(cfg: CampaignConfig, components: Components | None = None,
                        objective: Callable[[Key], float] | None = None,
                        init_selection: InitSelection | None = None) -> CampaignState:
    comp = components or build_components(cfg)
    if objective is None:
        objective = SyntheticObjective(cfg.objective, comp.mapper, comp.keys)
    codes, n_keys = _key_codes(comp.keys)
    n = len(comp.keys)
    state = CampaignState(cfg, comp, standardize(comp.embeddings), ScoreLedger(n),
                          CachedEvaluator(objective), codes, np.zeros(n_keys, dtype=bool),
                          objective)
    if cfg.arm in _GREEDY:
        sel = init_selection or greedy_init(comp.index, comp.embeddings, cfg.n_init,
                                            cfg.min_group_size, cfg.kernel)
        state.init = sel
        starts = [comp.index.groups[g].members[0] for g in sel.selected_groups]
    else:
        starts = random_init_candidates(codes, cfg.n_init, cfg.seed)
    for c in starts:
        _query(state, c)
    state.exhausted = state.key_queried.all()
    return state


def _unscored_groups(state: CampaignState) -> list[np.ndarray]:
    groups = state.comp.index.groups
    return [np.asarray(g.members) for g in groups
            if g.size >= 2 and not state.ledger.has_key(g.key)]


def training_data(state: CampaignState) -> tuple[TrainingData, TrainConfig]:
    cfg = state.cfg
    mask = scored_mask(state.ledger)
    scored = np.flatnonzero(mask)
    tcfg = cfg.train
    unscored = []
    if cfg.arm in _REG:
        unscored = _unscored_groups(state)
    elif tcfg.gamma_max != 0:
        tcfg = dataclasses.replace(tcfg, gamma_max=0.0)
    scored_groups = None
    if state.sharing:
        scored_groups = state.comp.index.candidate_to_group[scored]
    data = TrainingData(state.features, scored, state.ledger.scores[scored], unscored,
                        scored_groups)
    return data, tcfg


def _selection_mask(state: CampaignState) -> np.ndarray:
    if state.sharing:
        return scored_mask(state.ledger)
    # vanilla only knows which keys it has already paid for
    return state.key_queried[state.key_codes]


def optimization_step(state: CampaignState) -> tuple[CampaignState, RunRecord]:
    cfg = state.cfg
    if state.queries_left <= 0:
        raise BudgetExhaustedError("query budget already consumed")
    if state.exhausted:
        raise PoolExhaustedError("every key in the pool has been queried")
    state.round += 1
    data, tcfg = training_data(state)
    if tcfg.warm_start and state.params is not None:
        init = state.params
    else:
        init = _seed(cfg.seed, 2, tcfg.init_seed, 0 if tcfg.warm_start else state.round)
    state.params = train(data, tcfg, init, pair_seed=_seed(cfg.seed, 3, state.round))
    acq = cfg.acquisition
    if acq.terms == "key":
        terms = np.array([r.queried_index for r in state.log])
    else:
        terms = data.scored
    conf: ConfidenceState = rebuild_confidence(state.params, state.features[terms],
                                               acq.lam, acq.mode, acq.beta)
    pick = select_next(state.params, conf, state.features, _selection_mask(state))
    rec = _query(state, pick)
    state.exhausted = bool(state.key_queried.all())
    return state, rec


@dataclass
class CampaignResult:
    best_index: int
    best_key: Key
    best_score: float
    log: list[RunRecord]
    state: CampaignState

    def summary(self) -> dict:
        st = self.state
        out = {
            "arm": st.cfg.arm,
            "seed": st.cfg.seed,
            "best_index": self.best_index,
            "best_key": key_to_json(self.best_key),
            "best_score": self.best_score,
            "scored_count": int(scored_mask(st.ledger).sum()),
            "queries": st.ledger.query_count,
            "evaluations": st.evaluator.calls,
            "exhausted": bool(st.exhausted),
        }
        return out


def run_campaign(cfg: CampaignConfig, components: Components | None = None,
                 objective=None, init_selection: InitSelection | None = None) -> CampaignResult:
    state = initialize_campaign(cfg, components, objective, init_selection)
    while state.queries_left > 0 and not state.exhausted:
        optimization_step(state)
    idx, score = best_candidate(state.ledger)
    return CampaignResult(idx, state.comp.keys[idx], score, state.log, state)


def fraction_of_optimum(result: CampaignResult) -> float:
    _, opt = exhaustive_oracle(result.state.comp.keys, result.state.objective)
    return float(result.best_score / opt) if opt > 0 else 1.0


def log_rows(log: list[RunRecord]) -> list[dict]:
    return [r.to_dict() for r in log]
