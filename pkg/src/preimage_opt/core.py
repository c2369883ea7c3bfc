"""Domain types shared across the package and the score-sharing ledger."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

# An instruction key is any hashable, equality-comparable value: canonical
# instruction text for LLM mappers, a tuple of lattice coordinates for the
# synthetic mapper.
Key = Hashable


class DuplicateQueryError(ValueError):
    """Raised when a key is recorded twice; indicates a masking bug upstream."""


class EmptyLedgerError(ValueError):
    pass


@dataclass(frozen=True)
class PreimageGroup:
    key: Key
    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if not members:
            raise ValueError("preimage group must be non-empty")
        if any(b <= a for a, b in zip(members, members[1:])):
            raise ValueError("group members must be strictly increasing")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class PreimageIndex:
    """Partition of the candidate pool into groups sharing a mapper output.

    ``candidate_to_group[i]`` is the position in ``groups`` of the group that
    holds candidate ``i``.
    """

    groups: list[PreimageGroup]
    candidate_to_group: np.ndarray

    def __post_init__(self):
        self.candidate_to_group = np.asarray(self.candidate_to_group, dtype=np.int64)
        self._by_key = {g.key: i for i, g in enumerate(self.groups)}

    @property
    def n_candidates(self) -> int:
        return int(self.candidate_to_group.shape[0])

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=np.int64)

    def group_of(self, candidate: int) -> PreimageGroup:
        return self.groups[int(self.candidate_to_group[candidate])]

    def group_id(self, key: Key) -> int:
        return self._by_key[key]

    def validate(self) -> None:
        """Check the partition property; raises AssertionError on violation."""
        n = self.n_candidates
        seen = np.zeros(n, dtype=bool)
        for gi, g in enumerate(self.groups):
            idx = np.asarray(g.members)
            assert not seen[idx].any(), f"group {gi} overlaps an earlier group"
            seen[idx] = True
            assert (self.candidate_to_group[idx] == gi).all()
        assert seen.all(), "groups do not cover the pool"


@dataclass(frozen=True)
class QueryEntry:
    key: Key
    score: float
    iteration: int


@dataclass
class ScoreLedger:
    """Per-candidate scores plus the ordered list of black-box queries.

    Scores are stored densely with NaN marking unscored candidates. The ledger
    is append-only: ``record_query`` never overwrites an existing score.
    """

    pool_size: int
    scores: np.ndarray = field(default=None)  # type: ignore[assignment]
    queried: list[QueryEntry] = field(default_factory=list)
    _keys: set = field(default_factory=set, repr=False)

    def __post_init__(self):
        if self.scores is None:
            self.scores = np.full(self.pool_size, np.nan)

    @property
    def query_count(self) -> int:
        return len(self.queried)

    @property
    def queried_keys(self) -> list[Key]:
        return [q.key for q in self.queried]

    def has_key(self, key: Key) -> bool:
        return key in self._keys

    def score_of(self, candidate: int) -> float | None:
        s = self.scores[candidate]
        return None if math.isnan(s) else float(s)


def record_query(ledger: ScoreLedger, group: PreimageGroup, score: float,
                 iteration: int) -> ScoreLedger:
    """Share ``score`` with every member of ``group`` and log one query.

    The query counter moves by exactly one regardless of the group size.
    """
    if ledger.has_key(group.key):
        raise DuplicateQueryError(f"key {group.key!r} was already queried")
    score = float(score)
    if not (math.isfinite(score) and 0.0 <= score <= 1.0):
        raise ValueError(f"score must be finite and in [0, 1], got {score}")
    idx = np.asarray(group.members)
    if not np.isnan(ledger.scores[idx]).all():
        raise DuplicateQueryError(f"group {group.key!r} has members already scored")
    ledger.scores[idx] = score
    ledger.queried.append(QueryEntry(group.key, score, int(iteration)))
    ledger._keys.add(group.key)
    return ledger


def scored_mask(ledger: ScoreLedger, pool_size: int | None = None) -> np.ndarray:
    if pool_size is not None and pool_size != ledger.pool_size:
        raise ValueError(f"pool_size {pool_size} != ledger size {ledger.pool_size}")
    return ~np.isnan(ledger.scores)


def best_candidate(ledger: ScoreLedger) -> tuple[int, float]:
    """Highest shared score; ties go to the lowest candidate index."""
    if ledger.query_count == 0:
        raise EmptyLedgerError("no queries recorded")
    filled = np.where(np.isnan(ledger.scores), -np.inf, ledger.scores)
    i = int(np.argmax(filled))
    return i, float(ledger.scores[i])


@dataclass
class RunRecord:
    iteration: int
    queried_index: int
    key: Key
    score: float
    group_size: int
    cumulative_scored: int
    best_so_far: float
    elapsed_ms: int

    def to_dict(self) -> dict:
        # field order is part of the run-log format
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["key"] = key_to_json(self.key)
        return d


def key_to_json(key: Key):
    if isinstance(key, tuple):
        return [key_to_json(k) for k in key]
    if isinstance(key, np.integer):
        return int(key)
    return key


def key_from_json(value) -> Key:
    if isinstance(value, list):
        return tuple(key_from_json(v) for v in value)
    return value


def check_finite_rows(values: np.ndarray, what: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be a 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contain NaN or Inf")
    return arr


def groups_from_members(key_members: Sequence[tuple[Key, Sequence[int]]],
                        n: int) -> PreimageIndex:
    groups = [PreimageGroup(k, tuple(sorted(m))) for k, m in key_members]
    c2g = np.full(n, -1, dtype=np.int64)
    for gi, g in enumerate(groups):
        c2g[list(g.members)] = gi
    if (c2g < 0).any():
        raise ValueError("groups do not cover the pool")
    return PreimageIndex(groups, c2g)
