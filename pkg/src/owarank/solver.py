"""Frank-Wolfe with Moreau smoothing for the OWA fair-ranking problem.

Maximizes over doubly stochastic ``Pi``::

    (1 - lam) * y_hat @ Pi @ b + lam * owa(w, A @ Pi @ b)

Every linear subproblem over the Birkhoff polytope is solved by sorting, so
each iterate is an explicit mixture of permutations and the returned policy
can be sampled without any matrix decomposition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .owa import (
    check_weights,
    default_weights,
    owa,
    _grouped_gradient,
    owa_grouped,
    smoothed_owa_grouped_gradient,
    smoothed_owa_gradient,
)
from .policy import (
    GroupAssignment,
    RankingPolicy,
    argsort_perm,
    expected_dcg,
    group_exposures,
    item_exposures,
    item_exposures_of_perm,
)

__all__ = [
    "FwConfig",
    "FwSolution",
    "atom_weights_from_steps",
    "linearized_subproblem",
    "objective",
    "solve",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FwConfig:
    """Solver settings.

    With ``size_weighted`` (the default) the OWA runs over group exposures
    repeated once per group member, so it needs one weight per item; without
    it every non-empty group is a single criterion.  ``owa_weights`` pins the
    weight vector explicitly, otherwise weights come from ``weight_schedule``
    at whatever length the query needs.
    """

    lam: float = 0.5
    T: int = 100
    beta0: float = 1.0
    weight_schedule: str = "linear"
    owa_weights: tuple[float, ...] | None = None
    size_weighted: bool = True
    compact: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if self.owa_weights is not None:
            object.__setattr__(self, "owa_weights", tuple(float(v) for v in self.owa_weights))
            check_weights(self.owa_weights)
        else:
            default_weights(1, self.weight_schedule)

    def weights_for(self, groups: GroupAssignment) -> np.ndarray:
        k = groups.n if self.size_weighted else groups.m
        if self.owa_weights is not None:
            if len(self.owa_weights) != k:
                what = "items" if self.size_weighted else "groups"
                raise ValueError(f"configured {len(self.owa_weights)} OWA weights but query has {k} {what}")
            return np.array(self.owa_weights)
        return default_weights(k, self.weight_schedule)

    def fairness(self, w, groups: GroupAssignment, E) -> float:
        """OWA term of the objective at group exposures ``E``."""
        return owa_grouped(w, E, groups.sizes) if self.size_weighted else owa(w, E)

    def fairness_gradient(self, w, groups: GroupAssignment, E, beta: float) -> np.ndarray:
        """Gradient of the smoothed OWA term with respect to ``E``."""
        if self.size_weighted:
            return smoothed_owa_grouped_gradient(w, E, groups.sizes, beta)
        return smoothed_owa_gradient(w, E, beta)


@dataclass
class FwSolution:
    policy: RankingPolicy
    objective_trace: np.ndarray
    group_exposures: np.ndarray
    owa_value: float
    fw_gaps: np.ndarray = field(repr=False)


def atom_weights_from_steps(T: int) -> np.ndarray:
    """Final mixture weights of the initial vertex and the ``T`` FW atoms.

    With step ``2/(k+2)`` the weights telescope to ``2(k+1)/((T+1)(T+2))``.
    """
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    k = np.arange(T + 1, dtype=float)
    return 2.0 * (k + 1.0) / ((T + 1.0) * (T + 2.0))


def linearized_subproblem(y_eff) -> np.ndarray:
    """Vertex of the Birkhoff polytope maximizing ``<P, y_eff b^T>`` for any decreasing ``b``."""
    return argsort_perm(y_eff)


def objective(policy: RankingPolicy, y, groups: GroupAssignment, b, cfg: FwConfig) -> float:
    """Unsmoothed trade-off objective evaluated at ``policy`` under scores ``y``."""
    w = cfg.weights_for(groups)
    util = expected_dcg(policy, y, b)
    fair = cfg.fairness(w, groups, group_exposures(policy, groups, b))
    return (1.0 - cfg.lam) * util + cfg.lam * fair


def solve(y_hat, groups: GroupAssignment, b, cfg: FwConfig, record_trace: bool = True) -> FwSolution:
    """Run ``cfg.T`` smoothed Frank-Wolfe iterations from the argsort vertex of ``y_hat``.

    ``record_trace=False`` skips the smoothed objective after each step (one
    extra projection per iteration) and leaves ``objective_trace`` as NaN.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    b = np.asarray(b, dtype=float)
    n = y_hat.size
    if b.shape != (n,) or groups.n != n:
        raise ValueError(f"dimension mismatch: y_hat {y_hat.shape}, b {b.shape}, groups {groups.n}")
    lam = cfg.lam
    w = cfg.weights_for(groups)
    gradient = _gradient_fn(cfg, w, groups)

    order = linearized_subproblem(y_hat)
    orders = [order]
    exposure = item_exposures_of_perm(order, b)
    E = groups.group_means(exposure)
    trace = np.full(cfg.T, np.nan)
    gaps = np.empty(cfg.T)

    for k in range(1, cfg.T + 1):
        beta = cfg.beta0 / np.sqrt(k)
        if lam > 0.0:
            mu = gradient(E, beta)
            scores = (1.0 - lam) * y_hat + lam * groups.spread(mu)
        else:
            scores = y_hat
        order = linearized_subproblem(scores)
        vertex = item_exposures_of_perm(order, b)
        gaps[k - 1] = scores @ (vertex - exposure)
        step = 2.0 / (k + 2.0)
        exposure = (1.0 - step) * exposure + step * vertex
        E = (1.0 - step) * E + step * groups.group_means(vertex)
        orders.append(order)
        if record_trace:
            trace[k - 1] = (1.0 - lam) * (y_hat @ exposure)
            if lam > 0.0:
                mu = gradient(E, beta)
                trace[k - 1] += lam * _smoothed_value(cfg, mu, groups, E, beta)

    policy = RankingPolicy.from_atoms(atom_weights_from_steps(cfg.T), np.array(orders), compact=cfg.compact)
    E_final = groups.group_means(item_exposures(policy, b))
    if cfg.T:
        log.debug("fw: T=%d final gap %.3g, %d atoms", cfg.T, gaps[-1], policy.weights.size)
    return FwSolution(policy, trace, E_final, cfg.fairness(w, groups, E_final), gaps)


def _gradient_fn(cfg: FwConfig, w, groups: GroupAssignment):
    if not cfg.size_weighted:
        return lambda E, beta: smoothed_owa_gradient(w, E, beta)
    prefix = np.concatenate(([0.0], np.cumsum(np.sort(w)[::-1])))
    sizes = groups.sizes
    return lambda E, beta: _grouped_gradient(prefix, E, sizes, beta)


def _smoothed_value(cfg: FwConfig, mu, groups: GroupAssignment, E, beta: float) -> float:
    # mu @ x + beta/2 |mu|^2, taken in the repeated space when size weighted
    if cfg.size_weighted:
        return float(mu @ E + 0.5 * beta * (mu**2 / groups.sizes).sum())
    return float(mu @ E + 0.5 * beta * (mu @ mu))
