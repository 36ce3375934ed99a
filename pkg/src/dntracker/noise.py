"""Noise simulation on a frame's instance-query set.

Three strategies plus a no-op baseline:
  weighted_average: row i becomes alpha * Q[i] + (1 - alpha) * Q[j]
  crop_concat:      row i becomes Q[i][:k] ++ Q[j][k:]
  shuffle:          rows are permuted uniformly (Fisher-Yates)

The partner j may equal i (the degenerate draw is allowed by default and
collapses to the identity); pass exclude_self=True to forbid it. All
draws come from the caller's generator, one row at a time, in documented
order: weighted_average draws (alpha, j) per row, crop_concat draws
(k, j) per row, shuffle draws one integer per Fisher-Yates swap from
i = N-1 down to 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class NoiseStrategy(str, enum.Enum):
    NONE = "none"
    WEIGHTED_AVERAGE = "weighted_average"
    CROP_CONCAT = "crop_concat"
    SHUFFLE = "shuffle"


@dataclass
class NoiseOutcome:
    noised: np.ndarray  # N x C
    permutation: np.ndarray  # sigma for shuffle, identity otherwise
    partners: np.ndarray  # j per row, -1 where not applicable
    alphas: np.ndarray | None = None  # weighted_average only
    cuts: np.ndarray | None = None  # crop_concat only


def _identity_outcome(q: np.ndarray) -> NoiseOutcome:
    n = q.shape[0]
    return NoiseOutcome(
        noised=q.copy(),
        permutation=np.arange(n),
        partners=np.full(n, -1, dtype=np.int64),
    )


def _draw_partner(rng: np.random.Generator, i: int, n: int, exclude_self: bool) -> int:
    if not exclude_self or n == 1:
        return int(rng.integers(0, n))
    j = int(rng.integers(0, n - 1))
    return j + 1 if j >= i else j


def noise_weighted_average(
    q: np.ndarray,
    rng: np.random.Generator,
    alphas: np.ndarray | None = None,
    partners: np.ndarray | None = None,
    exclude_self: bool = False,
) -> NoiseOutcome:
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    a = np.empty(n)
    j = np.empty(n, dtype=np.int64)
    for i in range(n):
        a[i] = rng.random() if alphas is None else float(alphas[i])
        j[i] = _draw_partner(rng, i, n, exclude_self) if partners is None else int(partners[i])
    noised = a[:, None] * q + (1.0 - a)[:, None] * q[j]
    return NoiseOutcome(
        noised=noised, permutation=np.arange(n), partners=j, alphas=a
    )


def noise_crop_concat(
    q: np.ndarray,
    rng: np.random.Generator,
    cuts: np.ndarray | None = None,
    partners: np.ndarray | None = None,
    exclude_self: bool = False,
) -> NoiseOutcome:
    q = np.asarray(q, dtype=np.float64)
    n, c = q.shape
    k = np.empty(n, dtype=np.int64)
    j = np.empty(n, dtype=np.int64)
    noised = np.empty_like(q)
    for i in range(n):
        # k ranges over {0, ..., C} inclusive; endpoints give pure self/partner
        k[i] = int(rng.integers(0, c + 1)) if cuts is None else int(cuts[i])
        j[i] = _draw_partner(rng, i, n, exclude_self) if partners is None else int(partners[i])
        noised[i, : k[i]] = q[i, : k[i]]
        noised[i, k[i] :] = q[j[i], k[i] :]
    return NoiseOutcome(noised=noised, permutation=np.arange(n), partners=j, cuts=k)


def fisher_yates_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def noise_shuffle(q: np.ndarray, rng: np.random.Generator) -> NoiseOutcome:
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    sigma = fisher_yates_permutation(n, rng)
    return NoiseOutcome(
        noised=q[sigma].copy(),
        permutation=sigma,
        partners=np.full(n, -1, dtype=np.int64),
    )


def apply_noise(
    strategy: NoiseStrategy,
    q: np.ndarray,
    rng: np.random.Generator,
    exclude_self: bool = False,
) -> NoiseOutcome:
    strategy = NoiseStrategy(strategy)
    if strategy is NoiseStrategy.NONE:
        return _identity_outcome(np.asarray(q, dtype=np.float64))
    if strategy is NoiseStrategy.WEIGHTED_AVERAGE:
        return noise_weighted_average(q, rng, exclude_self=exclude_self)
    if strategy is NoiseStrategy.CROP_CONCAT:
        return noise_crop_concat(q, rng, exclude_self=exclude_self)
    return noise_shuffle(q, rng)
