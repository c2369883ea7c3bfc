"""Ablation suite over synthetic objectives, with tables and summaries.

Per seed, the pool, its embeddings and the greedy initial selection are
shared by every objective and arm; only the objective instance and the
arm's behavior differ. This keeps paired comparisons exact and cheap.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import io
from .coverage import CoverageCache, greedy_init, greedy_select, resolve_bandwidth, subset_mmd
from .engine import (ARMS, _GREEDY, CampaignConfig, build_components, random_init_candidates,
                     run_campaign, standardize)
from .objectives import SHAPES, ObjectiveConfig, SyntheticObjective, exhaustive_oracle
from .predictor import TrainConfig, TrainingData, forward_many, train

CSV_FIELDS = ("objective", "arm", "seed", "best", "fraction_of_optimum", "scored_count")


@dataclass(frozen=True)
class SuiteConfig:
    """What to run: objective shapes x arms x seeds on top of a base campaign."""

    base: CampaignConfig = CampaignConfig()
    objectives: tuple[str, ...] = SHAPES
    arms: tuple[str, ...] = ARMS
    seeds: tuple[int, ...] = tuple(range(20))

    def __post_init__(self):
        for name in ("objectives", "arms", "seeds"):
            if isinstance(getattr(self, name), list):
                object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.objectives) < 1:
            raise ValueError("suite needs at least one objective")
        if len(self.arms) < 2:
            raise ValueError("suite needs at least two arms")
        for shape in self.objectives:
            if shape not in SHAPES:
                raise ValueError(f"unknown objective shape {shape!r}")
        for arm in self.arms:
            if arm not in ARMS:
                raise ValueError(f"unknown arm {arm!r}")


def _objective_config(base: CampaignConfig, shape: str, seed: int) -> ObjectiveConfig:
    # one landscape per (shape, seed), re-drawn with the pool
    return dataclasses.replace(base.objective, shape=shape, seed=seed)


def run_seed(suite: SuiteConfig, seed: int) -> list[dict]:
    """All (objective, arm) campaigns for one seed, in suite order."""
    base = dataclasses.replace(suite.base, seed=seed)
    comp = build_components(base)
    selection = None
    if any(a in _GREEDY for a in suite.arms):
        selection = greedy_init(comp.index, comp.embeddings, base.n_init,
                                base.min_group_size, base.kernel)
    rows = []
    for shape in suite.objectives:
        ocfg = _objective_config(base, shape, seed)
        objective = SyntheticObjective(ocfg, comp.mapper, comp.keys)
        _, optimum = exhaustive_oracle(comp.keys, objective)
        for arm in suite.arms:
            cfg = dataclasses.replace(base, arm=arm, objective=ocfg)
            res = run_campaign(cfg, comp, objective, selection if arm in _GREEDY else None)
            summary = res.summary()
            rows.append({
                "objective": shape,
                "arm": arm,
                "seed": seed,
                "best": res.best_score,
                "fraction_of_optimum": res.best_score / optimum if optimum > 0 else 1.0,
                "scored_count": summary["scored_count"],
            })
    return rows


def ablation_suite(suite: SuiteConfig, jobs: int = 1) -> list[dict]:
    """Run every campaign; rows ordered by seed, then objective, then arm."""
    if jobs <= 1:
        per_seed = [run_seed(suite, s) for s in suite.seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(run_seed, [suite] * len(suite.seeds), suite.seeds))
    return [row for rows in per_seed for row in rows]


@dataclass
class ArmStats:
    objective: str
    arm: str
    n: int
    mean: float
    se: float
    rank: int = 0
    values: list[float] = field(default_factory=list, repr=False)


def standard_error(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(len(v)))


def summarize(rows: list[dict]) -> dict:
    """Mean, standard error and rank per (objective, arm), plus suite averages."""
    objectives = list(dict.fromkeys(r["objective"] for r in rows))
    arms = list(dict.fromkeys(r["arm"] for r in rows))
    table: list[ArmStats] = []
    for obj in objectives:
        block = []
        for arm in arms:
            vals = [r["fraction_of_optimum"] for r in rows
                    if r["objective"] == obj and r["arm"] == arm]
            if vals:
                block.append(ArmStats(obj, arm, len(vals), float(np.mean(vals)),
                                      standard_error(vals), values=vals))
        ranks = stats.rankdata([-s.mean for s in block], method="min")
        for s, rk in zip(block, ranks):
            s.rank = int(rk)
        table.extend(block)
    suite_mean = {}
    for arm in arms:
        means = [s.mean for s in table if s.arm == arm]
        suite_mean[arm] = float(np.mean(means))
    suite_rank = {arm: float(np.mean([s.rank for s in table if s.arm == arm])) for arm in arms}
    return {
        "objectives": objectives,
        "arms": arms,
        "table": [{"objective": s.objective, "arm": s.arm, "n": s.n, "mean": s.mean,
                   "se": s.se, "rank": s.rank} for s in table],
        "suite_mean": suite_mean,
        "suite_rank": suite_rank,
    }


def paired_values(rows: list[dict], arm: str) -> np.ndarray:
    """Fraction-of-optimum for ``arm`` ordered by (objective, seed)."""
    sel = sorted((r for r in rows if r["arm"] == arm), key=lambda r: (r["objective"], r["seed"]))
    return np.array([r["fraction_of_optimum"] for r in sel])


def paired_bootstrap_ci(a: np.ndarray, b: np.ndarray, level: float = 0.95,
                        n_resamples: int = 10_000, seed: int = 0) -> tuple[float, float, float]:
    """Mean of ``a - b`` and its percentile bootstrap interval."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.size < 2:
        raise ValueError("bootstrap needs at least two pairs")
    res = stats.bootstrap((d,), np.mean, confidence_level=level, n_resamples=n_resamples,
                          method="percentile", random_state=np.random.default_rng(seed))
    ci = res.confidence_interval
    return float(d.mean()), float(ci.low), float(ci.high)


def rows_to_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(r[k])) if k in ("best", "fraction_of_optimum") else r[k])
                    for k in CSV_FIELDS})
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        out = []
        for r in csv.DictReader(f):
            out.append({"objective": r["objective"], "arm": r["arm"], "seed": int(r["seed"]),
                        "best": float(r["best"]),
                        "fraction_of_optimum": float(r["fraction_of_optimum"]),
                        "scored_count": int(r["scored_count"])})
        return out


def write_results(out_dir: str | Path, rows: list[dict]) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.csv").write_text(rows_to_csv(rows))
    summary = summarize(rows)
    io.write_json(out_dir / "summary.json", summary)
    return summary


def report(summary: dict) -> str:
    """Plain-text comparison table: mean +- SE (rank) per objective and arm."""
    arms = summary["arms"]
    cells = {(r["objective"], r["arm"]): r for r in summary["table"]}
    head = ["objective"] + arms
    lines = []
    for obj in summary["objectives"]:
        row = [obj]
        for arm in arms:
            r = cells.get((obj, arm))
            row.append("-" if r is None else f"{r['mean']:.3f} +- {r['se']:.3f} ({r['rank']})")
        lines.append(row)
    lines.append(["suite mean"] + [f"{summary['suite_mean'][a]:.3f}" for a in arms])
    widths = [max(len(str(x[i])) for x in [head] + lines) for i in range(len(head))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*head), fmt.format(*["-" * w for w in widths])]
    out += [fmt.format(*row) for row in lines]
    return "\n".join(out) + "\n"


# Desk-scale reproductions of the method's qualitative claims.

TOY_CENTERS = (-0.6, 0.1, 0.7)
TOY_SEEDS = (0, 1, 2, 3, 4)


def _toy_score(x1: np.ndarray) -> np.ndarray:
    return 0.5 + 0.35 * np.sin(2.0 * x1)


def consistency_toy(seed: int) -> TrainingData:
    """Two-dimensional toy: 24 scored points near the x1 axis and three
    unscored preimage groups of 10 points each, tight in x1 but spread far
    along x2, away from any scored point.
    """
    rng = np.random.default_rng(seed)
    scored = np.column_stack([rng.uniform(-1.0, 1.0, 24), rng.uniform(-0.15, 0.15, 24)])
    groups = [np.column_stack([c + rng.normal(0.0, 0.03, 10), rng.uniform(0.6, 1.6, 10)])
              for c in TOY_CENTERS]
    emb = np.vstack([scored, *groups])
    unscored = [np.arange(24 + 10 * k, 24 + 10 * (k + 1)) for k in range(len(groups))]
    return TrainingData(emb, np.arange(24), _toy_score(scored[:, 0]), unscored)


def toy_spread(seed: int, gamma_max: float, cfg: TrainConfig = TrainConfig()) -> float:
    """Largest within-group standard deviation of predictions after training."""
    data = consistency_toy(seed)
    params = train(data, dataclasses.replace(cfg, gamma_max=gamma_max), seed)
    return max(float(forward_many(params, data.embeddings[g]).std())
               for g in data.unscored_groups)


def heldout_rmse(cfg: CampaignConfig, seed: int, n_scored: int = 100, n_heldout: int = 100,
                 train_cfg: TrainConfig | None = None) -> tuple[float, float]:
    """Held-out RMSE of (vanilla, sharing + consistency) predictors.

    ``n_scored`` distinct keys are queried at random. The vanilla model sees
    one candidate per queried key; the other sees every member of the
    queried groups plus consistency pairs inside unscored groups. Held-out
    candidates come from keys never queried.
    """
    cfg = dataclasses.replace(cfg, seed=seed, objective=_objective_config(cfg, cfg.objective.shape, seed))
    comp = build_components(cfg)
    objective = SyntheticObjective(cfg.objective, comp.mapper, comp.keys)
    feats = standardize(comp.embeddings)
    tc = train_cfg or cfg.train
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(comp.keys))
    seen: set = set()
    queried = []
    for c in perm:
        if comp.keys[c] not in seen:
            seen.add(comp.keys[c])
            queried.append(int(c))
            if len(queried) == n_scored:
                break
    held = np.array([c for c in perm if comp.keys[c] not in seen][:n_heldout])

    def scores(idx):
        return np.array([objective(comp.keys[i]) for i in idx])

    queried = np.array(queried)
    vanilla = train(TrainingData(feats, queried, scores(queried)),
                    dataclasses.replace(tc, gamma_max=0.0), seed)
    shared = np.sort(np.concatenate([comp.index.group_of(c).members for c in queried]))
    unscored = [np.asarray(g.members) for g in comp.index.groups
                if g.size >= 2 and g.key not in seen]
    regular = train(TrainingData(feats, shared, scores(shared), unscored), tc, seed)
    truth = scores(held)

    def rmse(params):
        return float(np.sqrt(np.mean((forward_many(params, feats[held]) - truth) ** 2)))

    return rmse(vanilla), rmse(regular)


def init_coverage(cfg: CampaignConfig, seed: int) -> tuple[float, float]:
    """MMD^2 to the pool of (greedy, random) initial selections of equal
    query cost. Both count every member of the queried groups."""
    cfg = dataclasses.replace(cfg, seed=seed)
    comp = build_components(cfg)
    bw = resolve_bandwidth(cfg.kernel, comp.embeddings)
    cache = CoverageCache(comp.index, comp.embeddings, bw, cfg.kernel.squared)
    sel = greedy_select(cache, cfg.n_init, cfg.min_group_size)
    codes = comp.index.candidate_to_group
    picks = random_init_candidates(codes, len(sel.selected_groups), seed)
    members = np.concatenate([comp.index.groups[codes[c]].members for c in picks])
    return sel.mmd_per_step[-1], subset_mmd(cache, members)
