"""Ordered weighted averaging and the pieces needed to smooth it.

The fair OWA of a vector ``x`` with decreasing weights ``w`` is
``w @ sort(x)`` (ascending sort), so the largest weight lands on the worst-off
coordinate.  It is concave and piecewise linear; :func:`smoothed_owa_gradient`
gives the gradient of its Moreau smoothing through a permutahedron projection
computed with pool-adjacent-violators.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "default_weights",
    "check_weights",
    "owa",
    "owa_min_oracle",
    "isotonic_nonincreasing",
    "project_permutahedron",
    "smoothed_owa_gradient",
    "smoothed_owa",
    "owa_grouped",
    "smoothed_owa_grouped_gradient",
    "smoothing_schedule",
]

_MAX_ORACLE_DIM = 8


def default_weights(m: int, schedule: str = "linear") -> np.ndarray:
    """Strictly decreasing OWA weights of length ``m`` that sum to one.

    ``"linear"`` gives ``w_j ∝ m + 1 - j``; ``"geometric"`` gives
    ``w_j ∝ 2^-j``.  ``"uniform"`` (plain mean, not a fair OWA) is accepted for
    experiments only.
    """
    if m < 1:
        raise ValueError(f"need at least one criterion, got m={m}")
    j = np.arange(1, m + 1, dtype=float)
    if schedule == "linear":
        raw = m + 1 - j
    elif schedule == "geometric":
        raw = 0.5**j
    elif schedule == "uniform":
        raw = np.ones(m)
    else:
        raise ValueError(f"unknown weight schedule {schedule!r}")
    return raw / raw.sum()


def check_weights(w, strict: bool = True) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("OWA weights must be a non-empty vector")
    if np.any(w < 0):
        raise ValueError("OWA weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"OWA weights must sum to 1, got {w.sum()!r}")
    if strict and w.size > 1 and np.any(np.diff(w) >= 0):
        raise ValueError("fair OWA weights must be strictly decreasing")
    return w


def owa(w, x) -> float:
    """OWA aggregation ``w @ sort(x)`` with ``x`` sorted ascending."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape:
        raise ValueError(f"dimension mismatch: w{w.shape} vs x{x.shape}")
    return float(w @ np.sort(x))


def owa_min_oracle(w, x) -> float:
    """Brute-force OWA as the minimum of ``w_sigma @ x`` over all permutations.

    Only meant for checking :func:`owa` on small inputs.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape:
        raise ValueError(f"dimension mismatch: w{w.shape} vs x{x.shape}")
    if w.size > _MAX_ORACLE_DIM:
        raise ValueError(f"m={w.size} too large for enumeration (max {_MAX_ORACLE_DIM})")
    return min(float(w[list(p)] @ x) for p in itertools.permutations(range(w.size)))


def _pav(values, weights):
    """Nonincreasing PAV on plain floats; returns block means and block lengths."""
    sums: list[float] = []
    counts: list[float] = []
    sizes: list[int] = []
    for value, weight in zip(values, weights):
        sums.append(value * weight)
        counts.append(weight)
        sizes.append(1)
        while len(sums) > 1 and sums[-1] * counts[-2] >= sums[-2] * counts[-1]:
            tail_sum, tail_count, tail_size = sums.pop(), counts.pop(), sizes.pop()
            sums[-1] += tail_sum
            counts[-1] += tail_count
            sizes[-1] += tail_size
    return [a / c for a, c in zip(sums, counts)], sizes


def isotonic_nonincreasing(s, weights=None) -> np.ndarray:
    """Least-squares fit of ``s`` under ``v[0] >= v[1] >= ... >= v[-1]``.

    Pool adjacent violators: scan left to right keeping a stack of blocks
    (weighted sum, weight) and merge the top two while the newer block's mean
    is at least the older one's.  Optional positive ``weights`` give the
    weighted fit.
    """
    s = np.asarray(s, dtype=float)
    if weights is None:
        weights = np.ones_like(s)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != s.shape or np.any(weights <= 0):
            raise ValueError("weights must be positive and match s")
    means, sizes = _pav(s.tolist(), weights.tolist())
    return np.repeat(np.array(means, dtype=float), sizes)


def project_permutahedron(w_tilde, z) -> np.ndarray:
    """Euclidean projection of ``z`` onto the convex hull of permutations of ``w_tilde``.

    Sort ``z`` decreasingly, fit a nonincreasing sequence to
    ``z_sorted - w_sorted`` and undo the sort.  Costs one sort plus a linear
    PAV pass.
    """
    w_tilde = np.asarray(w_tilde, dtype=float)
    z = np.asarray(z, dtype=float)
    if w_tilde.shape != z.shape:
        raise ValueError(f"dimension mismatch: w{w_tilde.shape} vs z{z.shape}")
    order = np.argsort(-z, kind="stable")
    w_desc = np.sort(w_tilde)[::-1]
    v = isotonic_nonincreasing(z[order] - w_desc)
    out = z.copy()
    out[order] -= v
    return out


def smoothed_owa_gradient(w, x, beta: float) -> np.ndarray:
    """Gradient of the Moreau-smoothed OWA at ``x``.

    Written through the reversed negated weights ``w_tilde = -(w_m, ..., w_1)``
    this is ``-proj_{C(w_tilde)}(x / beta)``, which equals
    ``proj_{C(w)}(-x / beta)``.  As ``beta -> 0`` it tends to the weights
    permuted onto ``x`` so that ``mu @ x == owa(w, x)``.  Entries are
    non-negative and sum to one.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    w_tilde = -w[::-1]
    return -project_permutahedron(w_tilde, x / beta)


def smoothed_owa(w, x, beta: float) -> float:
    """Moreau-smoothed OWA value ``max_y owa(y) - |y - x|^2 / (2 beta)``.

    Closed form ``mu @ x + beta/2 |mu|^2`` with ``mu`` the smoothed gradient.
    Always ``>= owa(w, x)`` and within ``beta/2 |w|^2`` of it.
    """
    mu = smoothed_owa_gradient(w, x, beta)
    return float(mu @ np.asarray(x, dtype=float) + 0.5 * beta * (mu @ mu))


def owa_grouped(w_items, x, sizes) -> float:
    """OWA over ``x`` with entry ``g`` repeated ``sizes[g]`` times.

    ``w_items`` has one weight per repeated entry (``sum(sizes)`` of them).
    Moving one unit of size-weighted mass between entries then changes the
    repeated vector's total by zero, so equalizing ``x`` stays optimal when
    the sizes differ.
    """
    x = np.asarray(x, dtype=float)
    sizes = np.asarray(sizes)
    if x.shape != sizes.shape:
        raise ValueError(f"dimension mismatch: x{x.shape} vs sizes{sizes.shape}")
    return owa(w_items, np.repeat(x, sizes))


def smoothed_owa_grouped_gradient(w_items, x, sizes, beta: float) -> np.ndarray:
    """Gradient in ``x`` of the smoothed OWA of the repeated vector.

    Same projection as :func:`smoothed_owa_gradient` in the repeated space,
    summed back per entry.  Repeated copies of one value are contiguous after
    sorting and always pool together, so PAV runs on ``len(x)`` weighted
    blocks instead of ``sum(sizes)`` items.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    w_items = np.asarray(w_items, dtype=float)
    x = np.asarray(x, dtype=float)
    sizes = np.asarray(sizes)
    if x.shape != sizes.shape or w_items.size != sizes.sum():
        raise ValueError("sizes must match x and sum to the number of item weights")
    prefix = np.concatenate(([0.0], np.cumsum(np.sort(w_items)[::-1])))
    return _grouped_gradient(prefix, x, sizes, beta)


def _grouped_gradient(w_prefix, x, sizes, beta):
    # w_prefix: cumulative sums of the item weights sorted decreasingly, with a leading 0
    z = -x / beta
    order = np.argsort(x, kind="stable")
    sz = sizes[order]
    ends = np.cumsum(sz)
    w_block = w_prefix[ends] - w_prefix[ends - sz]
    zs = z[order]
    means, runs = _pav((zs - w_block / sz).tolist(), sz.tolist())
    out = np.empty_like(x)
    out[order] = sz * (zs - np.repeat(means, runs))
    return out


def smoothing_schedule(beta0: float, k: int) -> float:
    """``beta0 / sqrt(k)`` for iteration ``k >= 1``."""
    if not beta0 > 0:
        raise ValueError(f"beta0 must be positive, got {beta0!r}")
    if k < 1:
        raise ValueError(f"iteration index starts at 1, got {k}")
    return beta0 / math.sqrt(k)
