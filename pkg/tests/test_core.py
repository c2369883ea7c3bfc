import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from preimage_opt.core import (DuplicateQueryError, EmptyLedgerError, PreimageGroup,
                               RunRecord, ScoreLedger, best_candidate, record_query,
                               scored_mask)
from preimage_opt.mapping import build_preimage_index


def test_record_query_shares_score_with_group():
    ledger = ScoreLedger(12)
    record_query(ledger, PreimageGroup("a", (3, 7, 9)), 0.8, 0)
    assert ledger.query_count == 1
    for i in (3, 7, 9):
        assert ledger.score_of(i) == 0.8
    assert ledger.score_of(4) is None


def test_singleton_group_scores_only_itself():
    ledger = ScoreLedger(8)
    record_query(ledger, PreimageGroup("b", (5,)), 0.2, 0)
    assert np.flatnonzero(scored_mask(ledger)).tolist() == [5]


def test_duplicate_key_rejected():
    ledger = ScoreLedger(5)
    record_query(ledger, PreimageGroup("a", (0, 1)), 0.5, 0)
    with pytest.raises(DuplicateQueryError):
        record_query(ledger, PreimageGroup("a", (0, 1)), 0.5, 1)


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan"), float("inf")])
def test_score_range_enforced(bad):
    with pytest.raises(ValueError):
        record_query(ScoreLedger(3), PreimageGroup("a", (0,)), bad, 0)


def test_query_count_counts_keys_not_candidates():
    # 165 groups of 14 members -> 2310 scored from 165 queries
    n_groups, size = 165, 14
    ledger = ScoreLedger(n_groups * size)
    for g in range(n_groups):
        members = tuple(range(g * size, (g + 1) * size))
        record_query(ledger, PreimageGroup(g, members), 0.5, g)
    assert ledger.query_count == 165
    assert scored_mask(ledger).sum() == 2310


def test_scored_mask_empty_and_simple():
    ledger = ScoreLedger(10)
    assert not scored_mask(ledger, 10).any()
    record_query(ledger, PreimageGroup("k", (3, 7, 9)), 0.1, 0)
    assert np.flatnonzero(scored_mask(ledger, 10)).tolist() == [3, 7, 9]
    with pytest.raises(ValueError):
        scored_mask(ledger, 11)


def test_best_candidate_tie_break_lowest_index():
    ledger = ScoreLedger(20)
    record_query(ledger, PreimageGroup("x", (7,)), 0.8, 0)
    record_query(ledger, PreimageGroup("y", (3,)), 0.8, 1)
    record_query(ledger, PreimageGroup("z", (12,)), 0.5, 2)
    assert best_candidate(ledger) == (3, 0.8)


def test_best_candidate_single_query_lowest_member():
    ledger = ScoreLedger(20)
    record_query(ledger, PreimageGroup("x", (4, 11, 15)), 0.3, 0)
    assert best_candidate(ledger) == (4, 0.3)


def test_best_candidate_empty():
    with pytest.raises(EmptyLedgerError):
        best_candidate(ScoreLedger(4))


def test_best_candidate_matches_linear_scan():
    rng = np.random.default_rng(3)
    keys = rng.integers(0, 60, size=300).tolist()
    index = build_preimage_index(keys)
    ledger = ScoreLedger(300)
    for it, g in enumerate(rng.choice(index.n_groups, size=20, replace=False)):
        record_query(ledger, index.groups[g], float(np.round(rng.uniform(), 2)), it)
    best_i, best_s = None, -1.0
    for i in range(300):
        s = ledger.score_of(i)
        if s is not None and s > best_s:
            best_i, best_s = i, s
    assert best_candidate(ledger) == (best_i, best_s)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 15), min_size=1, max_size=200),
       st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_sharing_consistency_and_accounting(keys, scores):
    index = build_preimage_index(keys)
    index.validate()
    ledger = ScoreLedger(len(keys))
    for it, (g, s) in enumerate(zip(index.groups, scores)):
        record_query(ledger, g, s, it)
        mask = scored_mask(ledger)
        assert mask.sum() >= ledger.query_count
    for g in index.groups:
        vals = ledger.scores[list(g.members)]
        assert np.isnan(vals).all() or (vals == vals[0]).all()
        assert ledger.has_key(g.key) == (not np.isnan(vals[0]))


def test_group_invariants():
    with pytest.raises(ValueError):
        PreimageGroup("a", ())
    with pytest.raises(ValueError):
        PreimageGroup("a", (3, 3))
    with pytest.raises(ValueError):
        PreimageGroup("a", (4, 2))


def test_run_record_field_order():
    rec = RunRecord(0, 5, (1, -2), 0.5, 3, 3, 0.5, 0)
    d = rec.to_dict()
    assert list(d) == ["iteration", "queried_index", "key", "score", "group_size",
                       "cumulative_scored", "best_so_far", "elapsed_ms"]
    assert d["key"] == [1, -2]
