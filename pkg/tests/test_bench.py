import dataclasses
import json
import math
import statistics
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from preimage_opt import bench
from preimage_opt.config import from_dict
from preimage_opt.coverage import greedy_init
from preimage_opt.engine import CampaignConfig, build_components

SMALL = json.loads((Path(__file__).parent / "fixtures" / "small.json").read_text())


def _suite(**kw):
    data = {"base": SMALL, "objectives": ["smooth", "rugged"], "arms": ["vanilla", "full"],
            "seeds": [0, 1]}
    data.update(kw)
    return from_dict(bench.SuiteConfig, data)


def _row(obj, arm, seed, frac):
    return {"objective": obj, "arm": arm, "seed": seed, "best": frac,
            "fraction_of_optimum": frac, "scored_count": 1}


def test_suite_validation():
    with pytest.raises(ValueError):
        bench.SuiteConfig(arms=("full",))
    with pytest.raises(ValueError):
        bench.SuiteConfig(objectives=())
    with pytest.raises(ValueError):
        bench.SuiteConfig(objectives=("flat",))
    with pytest.raises(ValueError):
        bench.SuiteConfig(arms=("full", "best"))


def test_run_seed_rows_and_parallel_equivalence():
    suite = _suite()
    rows = bench.ablation_suite(suite, jobs=1)
    assert [(r["seed"], r["objective"], r["arm"]) for r in rows] == [
        (s, o, a) for s in (0, 1) for o in ("smooth", "rugged") for a in ("vanilla", "full")]
    assert all(0.0 < r["fraction_of_optimum"] <= 1.0 for r in rows)
    assert bench.ablation_suite(suite, jobs=2) == rows


def test_standard_error_matches_statistics():
    vals = [0.2, 0.5, 0.9, 0.4]
    assert bench.standard_error(vals) == pytest.approx(statistics.stdev(vals) / 2.0)
    assert bench.standard_error([0.3]) == 0.0


def test_summarize_ranks_and_suite_mean():
    rows = [_row("a", "x", 0, 0.5), _row("a", "y", 0, 0.7), _row("a", "z", 0, 0.5),
            _row("b", "x", 0, 0.9), _row("b", "y", 0, 0.1), _row("b", "z", 0, 0.3)]
    s = bench.summarize(rows)
    ranks = {(r["objective"], r["arm"]): r["rank"] for r in s["table"]}
    assert ranks == {("a", "y"): 1, ("a", "x"): 2, ("a", "z"): 2,
                     ("b", "x"): 1, ("b", "z"): 2, ("b", "y"): 3}
    assert s["suite_mean"] == pytest.approx({"x": 0.7, "y": 0.4, "z": 0.4})
    assert s["suite_rank"] == pytest.approx({"x": 1.5, "y": 2.0, "z": 2.0})
    text = bench.report(s)
    assert "0.500 +- 0.000 (2)" in text and text.splitlines()[-1].startswith("suite mean")


def test_paired_values_order():
    rows = [_row("b", "x", 1, 0.1), _row("a", "x", 1, 0.2), _row("a", "x", 0, 0.3),
            _row("a", "y", 0, 0.9)]
    np.testing.assert_array_equal(bench.paired_values(rows, "x"), [0.3, 0.2, 0.1])


def test_bootstrap_ci_excludes_zero_for_clear_shift():
    rng = np.random.default_rng(0)
    b = rng.uniform(0, 1, 40)
    mean, lo, hi = bench.paired_bootstrap_ci(b + 0.2 + rng.normal(0, 0.02, 40), b)
    assert lo <= mean <= hi and lo > 0.1 and hi < 0.3
    with pytest.raises(ValueError):
        bench.paired_bootstrap_ci([1.0], [0.0])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=30).filter(
    lambda v: max(v) - min(v) > 1e-6))
def test_bootstrap_ci_brackets_mean(d):
    d = np.array(d)
    mean, lo, hi = bench.paired_bootstrap_ci(d, np.zeros_like(d), n_resamples=500)
    assert lo - 1e-12 <= mean <= hi + 1e-12
    assert d.min() - 1e-12 <= lo and hi <= d.max() + 1e-12


@given(st.lists(st.tuples(st.sampled_from(["smooth", "rugged"]), st.integers(0, 99),
                          st.floats(0, 1), st.integers(1, 10**6)), max_size=12))
def test_csv_round_trip_exact(items):
    rows = [{"objective": o, "arm": "full", "seed": s, "best": f, "fraction_of_optimum": f,
             "scored_count": c} for o, s, f, c in items]
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "a.csv"
        path.write_text(bench.rows_to_csv(rows))
        assert bench.read_csv(path) == rows


def test_consistency_toy_layout():
    data = bench.consistency_toy(0)
    assert data.embeddings.shape == (54, 2)
    assert len(data.scored) == 24 and len(data.unscored_groups) == 3
    for g, c in zip(data.unscored_groups, bench.TOY_CENTERS):
        pts = data.embeddings[g]
        assert abs(pts[:, 0].mean() - c) < 0.05 and pts[:, 1].min() >= 0.6
    np.testing.assert_allclose(data.scores, 0.5 + 0.35 * np.sin(2 * data.embeddings[:24, 0]))


def test_init_coverage_matches_greedy_init():
    cfg = from_dict(CampaignConfig, SMALL)
    g, r = bench.init_coverage(cfg, 3)
    comp = build_components(dataclasses.replace(cfg, seed=3))
    sel = greedy_init(comp.index, comp.embeddings, cfg.n_init, cfg.min_group_size, cfg.kernel)
    assert g == pytest.approx(sel.mmd_per_step[-1], abs=1e-12)
    assert math.isfinite(r) and r >= 0


def test_heldout_rmse_runs():
    cfg = from_dict(CampaignConfig, SMALL)
    a, b = bench.heldout_rmse(cfg, 0, n_scored=20, n_heldout=20)
    assert a > 0 and b > 0
    assert (a, b) == bench.heldout_rmse(cfg, 0, n_scored=20, n_heldout=20)
