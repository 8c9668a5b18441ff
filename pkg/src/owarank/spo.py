"""Regret and SPO+ training signal for the OWA ranking layer.

The OWA problem is equivalent to a linear program over ``(Pi, r, z)`` with
objective vector ``gamma = [(1 - lam) vec(y b^T); 0; lam]`` and one
constraint ``z <= w_sigma @ r`` per permutation.  That program is never
built: its SPO+ subgradient only needs two optimal points, the solution at
the perturbed scores ``2 y_hat - y`` and the ground-truth solution, and both
come from the Frank-Wolfe solver.  Ground-truth solutions are computed once
per query ahead of training and kept in a :class:`TargetCache`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .policy import GroupAssignment, RankingPolicy, group_exposures, item_exposures, position_bias
from .solver import FwConfig, objective, solve

__all__ = [
    "Target",
    "TargetCache",
    "SpoPlus",
    "compute_target",
    "precompute_targets",
    "regret",
    "spo_plus",
    "spo_plus_subgradient",
    "spo_plus_loss",
]

log = logging.getLogger(__name__)

CACHE_FORMAT = "owarank-targets"
CACHE_VERSION = 1


@dataclass(frozen=True)
class Target:
    """Solution of the OWA problem at ground-truth relevance."""

    policy: RankingPolicy
    r_star: np.ndarray
    z_star: float
    f_star: float

    def to_record(self) -> dict:
        return {
            "weights": self.policy.weights.tolist(),
            "orders": self.policy.orders.tolist(),
            "r_star": self.r_star.tolist(),
            "z_star": self.z_star,
            "f_star": self.f_star,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Target":
        policy = RankingPolicy(np.array(rec["weights"]), np.array(rec["orders"]))
        return cls(policy, np.array(rec["r_star"]), float(rec["z_star"]), float(rec["f_star"]))


def _target_key(sample, cfg: FwConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(sample.relevance, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(sample.groups.labels, dtype=np.int64).tobytes())
    h.update(json.dumps(
        [cfg.lam, cfg.T, cfg.beta0, cfg.weight_schedule, cfg.owa_weights, cfg.size_weighted], sort_keys=True
    ).encode())
    return h.hexdigest()


class TargetCache:
    """Ground-truth targets keyed by ``(query id, lambda)``."""

    def __init__(self, cfg: FwConfig):
        self.cfg = cfg
        self._entries: dict[tuple[str, float], Target] = {}
        self._keys: dict[tuple[str, float], str] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def get(self, qid, lam: float) -> Target:
        try:
            return self._entries[(str(qid), float(lam))]
        except KeyError:
            raise KeyError(f"no precomputed target for query {qid!r} at lambda={lam}") from None

    def put(self, qid, lam: float, target: Target, key: str) -> None:
        self._entries[(str(qid), float(lam))] = target
        self._keys[(str(qid), float(lam))] = key

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w") as fh:
            header = {"format": CACHE_FORMAT, "version": CACHE_VERSION, "config": asdict(self.cfg)}
            fh.write(json.dumps(header) + "\n")
            for (qid, lam), target in self._entries.items():
                rec = {"qid": qid, "lam": lam, "key": self._keys[(qid, lam)], **target.to_record()}
                fh.write(json.dumps(rec) + "\n")
        os.replace(tmp, path)

    @staticmethod
    def load_records(path) -> tuple[dict, dict[str, dict]]:
        """Read a cache file; returns the header and records by content key."""
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
                raise ValueError(f"{path}: unsupported target cache format {header.get('format')!r} "
                                 f"version {header.get('version')!r}")
            records = {}
            for line in fh:
                rec = json.loads(line)
                records[rec["key"]] = rec
        return header, records


def compute_target(y, groups: GroupAssignment, b, cfg: FwConfig) -> Target:
    sol = solve(y, groups, b, cfg, record_trace=False)
    f_star = objective(sol.policy, y, groups, b, cfg)
    return Target(sol.policy, sol.group_exposures, sol.owa_value, f_star)


def precompute_targets(samples, cfg: FwConfig, path=None) -> TargetCache:
    """Solve every query at its ground-truth relevance.

    With ``path`` the results are also persisted there; entries already on
    disk under the same content key are reused, and an unreadable file is
    ignored (everything is recomputed).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot precompute targets for an empty dataset")
    stored: dict[str, dict] = {}
    if path is not None and Path(path).exists():
        try:
            _, stored = TargetCache.load_records(path)
        except (OSError, ValueError, KeyError) as exc:
            log.warning("ignoring target cache %s: %s", path, exc)
    cache = TargetCache(cfg)
    hits = 0
    for s in samples:
        key = _target_key(s, cfg)
        if key in stored:
            target = Target.from_record(stored[key])
            hits += 1
        else:
            target = compute_target(s.relevance, s.groups, position_bias(s.n), cfg)
        cache.put(s.qid, cfg.lam, target, key)
    if path is not None:
        try:
            cache.save(path)
        except OSError as exc:
            log.warning("could not write target cache %s: %s", path, exc)
    log.info("targets: %d queries, %d from disk", len(cache), hits)
    return cache


def regret(y_hat, y, groups: GroupAssignment, b, cfg: FwConfig, target: Target) -> float:
    """``f(Pi*(y), y) - f(Pi*(y_hat), y)``; may dip slightly below 0 from solver inexactness."""
    policy = solve(y_hat, groups, b, cfg, record_trace=False).policy
    return target.f_star - objective(policy, y, groups, b, cfg)


@dataclass
class SpoPlus:
    loss: float
    grad: np.ndarray
    policy: RankingPolicy


def spo_plus(y_hat, y, groups: GroupAssignment, b, cfg: FwConfig, target: Target) -> SpoPlus:
    """SPO+ loss and subgradient with respect to ``y_hat`` from a single perturbed solve.

    The subgradient is ``(1 - lam) (Pi+ - Pi*) b`` where ``Pi+`` solves the
    problem at ``2 y_hat - y``.  The r and z blocks of the augmented
    subgradient do not reach ``y_hat``.  Note that the exact derivative of
    the loss carries an extra factor 2; it is left to the learning rate.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    b = np.asarray(b, dtype=float)
    lam = cfg.lam
    y_pert = 2.0 * y_hat - y
    sol = solve(y_pert, groups, b, cfg, record_trace=False)
    exp_plus = item_exposures(sol.policy, b)
    exp_star = item_exposures(target.policy, b)
    grad = (1.0 - lam) * (exp_plus - exp_star)
    loss = (1.0 - lam) * (y_pert @ exp_plus - 2.0 * y_hat @ exp_star + y @ exp_star)
    loss += lam * (sol.owa_value - target.z_star)
    return SpoPlus(float(loss), grad, sol.policy)


def spo_plus_subgradient(y_hat, y, groups, b, cfg: FwConfig, target: Target) -> np.ndarray:
    return spo_plus(y_hat, y, groups, b, cfg, target).grad


def spo_plus_loss(y_hat, y, groups, b, cfg: FwConfig, target: Target) -> float:
    return spo_plus(y_hat, y, groups, b, cfg, target).loss


def check_target(target: Target, groups: GroupAssignment, b, cfg: FwConfig) -> None:
    """Raise if a target's stored exposures or OWA value disagree with its policy."""
    r = group_exposures(target.policy, groups, b)
    if not np.allclose(r, target.r_star, atol=1e-10):
        raise ValueError("target exposures do not match its policy")
    if abs(cfg.fairness(cfg.weights_for(groups), groups, r) - target.z_star) > 1e-10:
        raise ValueError("target OWA value does not match its exposures")
