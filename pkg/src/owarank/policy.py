"""Ranking policies as convex combinations of permutations.

A permutation is stored as an ``order`` array: ``order[k]`` is the item shown
at rank ``k + 1``.  Its matrix ``P`` has ``P[item, position] = 1``.  A
:class:`RankingPolicy` keeps the list of weighted permutation atoms as the
source of truth and materializes the doubly stochastic matrix on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "position_bias",
    "argsort_perm",
    "perm_matrix",
    "item_exposures_of_perm",
    "GroupAssignment",
    "RankingPolicy",
    "dcg",
    "expected_dcg",
    "item_exposures",
    "group_exposures",
    "fairness_violations",
    "sample_ranking",
    "sample_rankings",
]


def position_bias(n: int) -> np.ndarray:
    """Position bias ``b_j = 1 / log2(1 + j)`` for ranks ``j = 1..n``."""
    if n < 1:
        raise ValueError(f"need at least one position, got n={n}")
    return 1.0 / np.log2(1.0 + np.arange(1, n + 1))


def argsort_perm(scores) -> np.ndarray:
    """Items ordered by decreasing score; ties go to the lower index."""
    scores = np.asarray(scores, dtype=float)
    return np.argsort(-scores, kind="stable")


def _check_order(order, n: int | None = None) -> np.ndarray:
    order = np.asarray(order)
    if order.ndim != 1 or (n is not None and order.size != n):
        raise ValueError("permutation has the wrong length")
    if not np.array_equal(np.sort(order), np.arange(order.size)):
        raise ValueError("order is not a permutation of range(n)")
    return order.astype(np.int64, copy=False)


def perm_matrix(order) -> np.ndarray:
    order = _check_order(order)
    n = order.size
    P = np.zeros((n, n))
    P[order, np.arange(n)] = 1.0
    return P


def item_exposures_of_perm(order, b) -> np.ndarray:
    """``P @ b`` for a single permutation without building ``P``."""
    out = np.empty(len(b))
    out[order] = b
    return out


@dataclass(frozen=True)
class GroupAssignment:
    """Group label per item plus the size-normalized incidence matrix.

    Rows of ``incidence`` exist only for groups that actually have members;
    ``group_ids[r]`` names the original label of row ``r``.
    """

    labels: np.ndarray
    group_ids: np.ndarray = field(init=False)
    sizes: np.ndarray = field(init=False)
    row_of_item: np.ndarray = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("group labels must be a non-empty vector")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("group labels must be integers")
            labels = labels.astype(np.int64)
        if np.any(labels < 0):
            raise ValueError("group labels must be non-negative")
        group_ids, row_of_item, sizes = np.unique(labels, return_inverse=True, return_counts=True)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "group_ids", group_ids)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "row_of_item", row_of_item.ravel())

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def m(self) -> int:
        """Number of non-empty groups."""
        return self.group_ids.size

    @cached_property
    def incidence(self) -> np.ndarray:
        A = np.zeros((self.m, self.n))
        A[self.row_of_item, np.arange(self.n)] = 1.0 / self.sizes[self.row_of_item]
        return A

    def group_means(self, item_values) -> np.ndarray:
        """``A @ v`` in O(n)."""
        return np.bincount(self.row_of_item, weights=item_values, minlength=self.m) / self.sizes

    def spread(self, group_values) -> np.ndarray:
        """``A.T @ g`` in O(n)."""
        return np.asarray(group_values)[self.row_of_item] / self.sizes[self.row_of_item]


@dataclass(frozen=True)
class RankingPolicy:
    """Distribution over rankings: ``weights[k]`` on permutation ``orders[k]``."""

    weights: np.ndarray
    orders: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        orders = np.atleast_2d(np.asarray(self.orders, dtype=np.int64))
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("policy needs at least one atom")
        if orders.shape[0] != weights.size:
            raise ValueError("one permutation per weight required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("atom weights must be a probability vector")
        for order in orders:
            _check_order(order, orders.shape[1])
        weights.flags.writeable = False
        orders.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "orders", orders)

    @classmethod
    def deterministic(cls, order) -> "RankingPolicy":
        return cls(np.ones(1), np.asarray(order)[None, :])

    @classmethod
    def from_atoms(cls, weights, orders, compact: bool = True) -> "RankingPolicy":
        """Build a policy, merging repeated permutations when ``compact``."""
        weights = np.asarray(weights, dtype=float)
        orders = np.atleast_2d(np.asarray(orders, dtype=np.int64))
        if compact and len(weights) > 1:
            uniq, inverse = np.unique(orders, axis=0, return_inverse=True)
            first_seen = np.full(len(uniq), len(weights))
            np.minimum.at(first_seen, inverse.ravel(), np.arange(len(weights)))
            merged = np.bincount(inverse.ravel(), weights=weights, minlength=len(uniq))
            keep = np.argsort(first_seen, kind="stable")
            weights, orders = merged[keep], uniq[keep]
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom weights sum to {total!r}, not 1")
        return cls(weights / total, orders)

    @property
    def n(self) -> int:
        return self.orders.shape[1]

    @cached_property
    def matrix(self) -> np.ndarray:
        """``sum_k rho_k P_k``; entry ``[i, j]`` is P(item i at rank j + 1)."""
        n = self.n
        M = np.zeros((n, n))
        cols = np.arange(n)
        for rho, order in zip(self.weights, self.orders):
            M[order, cols] += rho
        return M


def _check_len(name: str, v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def dcg(order, y, b) -> float:
    """DCG of one ranking: ``sum_i y_i b_{rank(i)}``."""
    order = np.asarray(order)
    y = _check_len("y", y, order.size)
    b = _check_len("b", b, order.size)
    return float(y[order] @ b)


def item_exposures(policy: RankingPolicy, b) -> np.ndarray:
    """Expected exposure of each item, ``Pi @ b``."""
    b = _check_len("b", b, policy.n)
    out = np.zeros(policy.n)
    for rho, order in zip(policy.weights, policy.orders):
        out[order] += rho * b
    return out


def expected_dcg(policy: RankingPolicy, y, b) -> float:
    y = _check_len("y", y, policy.n)
    return float(y @ item_exposures(policy, b))


def group_exposures(policy: RankingPolicy, groups: GroupAssignment, b) -> np.ndarray:
    """Mean exposure per non-empty group, ``A @ Pi @ b``."""
    if groups.n != policy.n:
        raise ValueError(f"groups cover {groups.n} items, policy has {policy.n}")
    return groups.group_means(item_exposures(policy, b))


def fairness_violations(policy: RankingPolicy, groups: GroupAssignment, b) -> np.ndarray:
    """``|E_g - mean(b)|`` per group; the all-item mean exposure is ``mean(b)``."""
    b = np.asarray(b, dtype=float)
    return np.abs(group_exposures(policy, groups, b) - b.mean())


def sample_ranking(policy: RankingPolicy, rng: np.random.Generator) -> np.ndarray:
    """Draw one ranking: atom ``k`` with probability ``rho_k``."""
    k = rng.choice(policy.weights.size, p=policy.weights)
    return policy.orders[k].copy()


def sample_rankings(policy: RankingPolicy, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` independent rankings as rows of a ``(size, n)`` array."""
    return policy.orders[rng.choice(policy.weights.size, size=size, p=policy.weights)]
