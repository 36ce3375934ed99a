"""Bipartite assignment and frame-to-frame association.

hungarian() wraps an exact linear-assignment solve with a deterministic
tie-break: among all minimum-cost mappings it returns the lexicographically
smallest one (unassigned rows sort after every real column). The tie-break
is resolved by fixing rows greedily and checking that an optimal completion
still exists, so it never trades optimality for order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .world import QueryFrame, Sequence

DEFAULT_REJECT_COST = 1.5
DEFAULT_EMA = 0.7


class AlignmentError(ValueError):
    """Identity label has no canonical slot."""


@dataclass
class Assignment:
    mapping: list[int]  # mapping[r] = assigned column, -1 if unassigned
    total_cost: float


@dataclass
class TrackAssignment:
    """Per frame, the track id assigned to each observation row (-1 = empty)."""

    track_ids: list[np.ndarray]


def _sub_optimum(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        return 0.0
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def hungarian(cost) -> Assignment:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise ValueError(f"cost must be a non-empty matrix, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise ValueError("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    m, n = cost.shape
    best = _sub_optimum(cost)
    tol = 1e-9 * max(1.0, abs(best))

    mapping = [-1] * m
    free = list(range(n))
    fixed = 0.0
    remaining = min(m, n)
    for r in range(m):
        rows_after = m - r - 1
        chosen = None
        for c in free:
            sub_cols = [x for x in free if x != c]
            sub = cost[r + 1 :, sub_cols] if sub_cols else cost[r + 1 :, :0]
            if fixed + cost[r, c] + _sub_optimum(sub) <= best + tol:
                chosen = c
                break
        if chosen is None:
            # leaving r unassigned must still allow a full-size completion
            if rows_after < remaining:
                raise RuntimeError("hungarian: no consistent completion found")
            mapping[r] = -1
            continue
        mapping[r] = chosen
        free.remove(chosen)
        fixed += cost[r, chosen]
        remaining -= 1
    total = float(sum(cost[r, mapping[r]] for r in range(m) if mapping[r] >= 0))
    return Assignment(mapping=mapping, total_cost=total)


def cosine_similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity between rows; zero rows score 0 by convention."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    denom = np.outer(np.where(na > 0, na, 1.0), np.where(nb > 0, nb, 1.0))
    sim = (A @ B.T) / denom
    sim[na == 0, :] = 0.0
    sim[:, nb == 0] = 0.0
    return sim


def heuristic_track(
    seq: Sequence, ema: float = DEFAULT_EMA, reject_cost: float = DEFAULT_REJECT_COST
) -> TrackAssignment:
    """Frame-to-frame association by EMA appearance memories + hungarian.

    Frame-1 visible rows seed tracks in slot order; later frames match
    track memories to visible queries on cost 1 - cosine, rejecting
    matches above reject_cost and spawning fresh tracks for leftovers.
    """
    if not (0.0 <= ema <= 1.0):
        raise ValueError(f"ema must be in [0, 1], got {ema}")
    memories: list[np.ndarray] = []
    track_ids: list[int] = []
    out: list[np.ndarray] = []
    next_id = 0

    for t, frame in enumerate(seq.frames):
        q = frame.queries
        rows = np.flatnonzero(np.abs(q).sum(axis=1) > 0)
        assigned = np.full(q.shape[0], -1, dtype=np.int64)
        matched_rows: set[int] = set()
        if t == 0:
            # track id = slot index, so frame-1 slots define canonical ids
            for r in rows:
                assigned[r] = int(r)
                track_ids.append(int(r))
                memories.append(q[r].copy())
            next_id = q.shape[0]
            out.append(assigned)
            continue
        if memories and rows.size:
            cost = 1.0 - cosine_similarity_matrix(np.stack(memories), q[rows])
            sol = hungarian(cost)
            for mi, col in enumerate(sol.mapping):
                if col < 0 or cost[mi, col] > reject_cost:
                    continue
                r = int(rows[col])
                assigned[r] = track_ids[mi]
                memories[mi] = ema * memories[mi] + (1.0 - ema) * q[r]
                matched_rows.add(r)
        for r in rows:
            if int(r) not in matched_rows:
                assigned[r] = next_id
                track_ids.append(next_id)
                memories.append(q[r].copy())
                next_id += 1
        out.append(assigned)
    return TrackAssignment(track_ids=out)


def canonical_slots(seq: Sequence) -> dict[int, int]:
    """Canonical slot per identity: the slot each object occupies in frame 1."""
    first = seq.frames[0]
    return {int(k): int(s) for s, k in enumerate(first.identity) if k >= 0}


def align_to_ground_truth(frame: QueryFrame, canonical: dict[int, int]) -> QueryFrame:
    """Reorder rows so slot s holds the object whose canonical slot is s.

    Occluded objects leave a zero row with identity -1. Idempotent, and
    preserves the multiset of non-zero rows.
    """
    N, C = frame.queries.shape
    queries = np.zeros((N, C))
    identity = np.full(N, -1, dtype=np.int32)
    for r in range(N):
        k = int(frame.identity[r])
        if k < 0:
            continue
        if k not in canonical:
            raise AlignmentError(f"identity {k} has no canonical slot (absent from frame 1)")
        s = canonical[k]
        queries[s] = frame.queries[r]
        identity[s] = k
    return QueryFrame(queries=queries, identity=identity)
