"""Ranking datasets: LETOR parsing, protected groups, synthetic data, splits."""

from __future__ import annotations

import gzip
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .policy import GroupAssignment

__all__ = [
    "LetorFormatError",
    "RawQuery",
    "QuerySample",
    "Dataset",
    "parse_letor",
    "read_letor",
    "group_thresholds",
    "assign_groups",
    "normalize_lists",
    "synthesize",
    "split",
    "save_dataset",
    "load_dataset",
]

log = logging.getLogger(__name__)

DATASET_FORMAT = "owarank-dataset"
DATASET_VERSION = 1


class LetorFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class RawQuery:
    """One query as read from a LETOR file, before list-size normalization."""

    qid: str
    labels: np.ndarray
    features: np.ndarray
    groups: np.ndarray | None = None


@dataclass(frozen=True)
class QuerySample:
    qid: str
    features: np.ndarray
    groups: GroupAssignment
    relevance: np.ndarray

    def __post_init__(self):
        n = self.relevance.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n or self.groups.n != n:
            raise ValueError(f"query {self.qid}: inconsistent item counts")
        if not np.all(np.isfinite(self.relevance)) or np.any(self.relevance < 0):
            raise ValueError(f"query {self.qid}: relevance must be finite and non-negative")

    @property
    def n(self) -> int:
        return self.relevance.shape[0]


@dataclass
class Dataset:
    samples: list[QuerySample]
    d: int
    n: int
    m: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.samples:
            if s.features.shape[1] != self.d or s.n != self.n:
                raise ValueError(f"query {s.qid} does not match dataset shape n={self.n}, d={self.d}")
            if s.groups.labels.max() >= self.m:
                raise ValueError(f"query {s.qid} has a group id >= m={self.m}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subset(self, idx, tag: str) -> "Dataset":
        return Dataset([self.samples[i] for i in idx], self.d, self.n, self.m,
                       {**self.provenance, "subset": tag})


def parse_letor(stream, d: int | None = None) -> list[RawQuery]:
    """Parse ``<label> qid:<id> <fid>:<val> ... [# comment]`` lines.

    Lines are grouped by qid in order of first appearance.  Feature ids are
    1-based and must increase along a line; missing ids read as 0.  ``d``
    fixes the dense width, otherwise the largest id seen is used.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode())
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    rows: dict[str, list[tuple[float, dict[int, float]]]] = {}
    max_fid = 0
    for lineno, line in enumerate(stream, 1):
        if isinstance(line, bytes):
            line = line.decode()
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2 or not tokens[1].startswith("qid:"):
            raise LetorFormatError(lineno, "expected '<label> qid:<id> ...'")
        try:
            label = float(tokens[0])
        except ValueError:
            raise LetorFormatError(lineno, f"bad label {tokens[0]!r}") from None
        qid = tokens[1][4:]
        if not qid:
            raise LetorFormatError(lineno, "empty qid")
        feats: dict[int, float] = {}
        last = 0
        for tok in tokens[2:]:
            fid_s, sep, val_s = tok.partition(":")
            try:
                fid, val = int(fid_s), float(val_s)
            except ValueError:
                raise LetorFormatError(lineno, f"bad feature token {tok!r}") from None
            if not sep or fid < 1:
                raise LetorFormatError(lineno, f"bad feature token {tok!r}")
            if fid <= last:
                raise LetorFormatError(lineno, f"feature id {fid} repeated or out of order")
            last = fid
            feats[fid] = val
        max_fid = max(max_fid, last)
        rows.setdefault(qid, []).append((label, feats))
    width = max_fid if d is None else d
    if d is not None and max_fid > d:
        raise ValueError(f"feature id {max_fid} exceeds d={d}")
    out = []
    for qid, items in rows.items():
        X = np.zeros((len(items), width))
        for i, (_, feats) in enumerate(items):
            for fid, val in feats.items():
                X[i, fid - 1] = val
        out.append(RawQuery(qid, np.array([lab for lab, _ in items]), X))
    return out


def read_letor(path, d: int | None = None) -> list[RawQuery]:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as fh:
        return parse_letor(fh, d)


def group_thresholds(records, feature_id: int, m: int) -> np.ndarray:
    """Corpus-level ``k/m`` quantiles (``k = 1..m-1``) of one feature column."""
    if m < 2:
        raise ValueError(f"need at least two groups, got m={m}")
    values = np.concatenate([r.features[:, feature_id] for r in records])
    if values.size == 0:
        raise ValueError("no items to compute group thresholds from")
    if values.min() == values.max():
        raise ValueError(f"feature {feature_id} is constant over the corpus; "
                         "choose a different group feature")
    return np.quantile(values, np.arange(1, m) / m)


def assign_groups(records, feature_id: int, m: int, thresholds=None):
    """Bucket each item by the quantile thresholds of ``feature_id``.

    Thresholds default to those of ``records`` themselves; pass the training
    corpus thresholds when labelling validation or test data.  Values equal to
    a threshold fall in the lower bucket.  Returns new records and the
    thresholds used.
    """
    records = list(records)
    if records and not 0 <= feature_id < records[0].features.shape[1]:
        raise ValueError(f"group feature {feature_id} out of range")
    if thresholds is None:
        thresholds = group_thresholds(records, feature_id, m)
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.size != m - 1:
        raise ValueError(f"{thresholds.size} thresholds given for m={m}")
    out = [replace(r, groups=np.searchsorted(thresholds, r.features[:, feature_id], side="left"))
           for r in records]
    return out, thresholds


def normalize_lists(records, n: int, m: int, provenance: dict | None = None) -> Dataset:
    """Keep the ``n`` most relevant items of each query; drop shorter queries.

    Ties in relevance keep document order.  Records must already carry group
    labels.
    """
    if n < 2:
        raise ValueError(f"list size must be at least 2, got {n}")
    samples = []
    truncated = dropped = 0
    d = None
    for r in records:
        if r.groups is None:
            raise ValueError(f"query {r.qid} has no group labels; run assign_groups first")
        if d is None:
            d = r.features.shape[1]
        k = r.labels.size
        if k < n:
            dropped += 1
            continue
        keep = np.sort(np.argsort(-r.labels, kind="stable")[:n]) if k > n else np.arange(n)
        truncated += k > n
        samples.append(QuerySample(r.qid, r.features[keep], GroupAssignment(r.groups[keep]),
                                   r.labels[keep].astype(float)))
    if not samples:
        raise ValueError(f"no query has at least {n} items")
    log.info("list size %d: kept %d queries (%d truncated), dropped %d short",
             n, len(samples), truncated, dropped)
    prov = dict(provenance or {})
    prov.update({"list_size": n, "truncated": truncated, "dropped": dropped})
    return Dataset(samples, d, n, m, prov)


def synthesize(num_queries: int = 200, n: int = 20, d: int = 16, m: int = 2, noise: float = 0.0,
               seed: int = 0, signal: float = 0.2, group_effect: float = 0.1,
               group_feature: int = 0) -> Dataset:
    """Learnable synthetic ranking data.

    Features are standard normal; relevance is
    ``softplus(x @ h + noise * eps)`` for a hidden weight vector ``h`` with
    norm ``signal`` over the non-group columns and weight ``group_effect`` on
    the group column, so the protected attribute correlates with relevance.
    Groups are corpus quantile buckets of the group column.
    """
    if num_queries < 1 or n < 2 or d < 1 or m < 1:
        raise ValueError("synthesize needs num_queries >= 1, n >= 2, d >= 1, m >= 1")
    if not 0 <= group_feature < d:
        raise ValueError(f"group feature {group_feature} out of range for d={d}")
    rng = np.random.default_rng(seed)
    hidden = rng.standard_normal(d)
    hidden[group_feature] = 0.0
    norm = np.linalg.norm(hidden)
    hidden = hidden * (signal / norm) if norm > 0 else hidden
    hidden[group_feature] = group_effect
    X = rng.standard_normal((num_queries, n, d))
    logits = X @ hidden + noise * rng.standard_normal((num_queries, n))
    rel = np.logaddexp(0.0, logits)
    records = [RawQuery(f"s{q}", rel[q], X[q]) for q in range(num_queries)]
    if m > 1:
        records, thresholds = assign_groups(records, group_feature, m)
    else:
        records = [replace(r, groups=np.zeros(n, dtype=np.int64)) for r in records]
        thresholds = np.empty(0)
    prov = {"source": "synthetic", "seed": seed, "noise": noise, "signal": signal,
            "group_effect": group_effect, "group_feature": group_feature,
            "thresholds": thresholds.tolist()}
    return normalize_lists(records, n, m, prov)


def split(dataset: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded shuffle of queries, then cut into train/valid/test."""
    fractions = np.asarray(fractions, dtype=float)
    if fractions.size != 3 or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    N = len(dataset)
    perm = np.random.default_rng(seed).permutation(N)
    cuts = np.round(np.cumsum(fractions)[:2] * N).astype(int)
    parts = np.split(perm, cuts)
    for name, part in zip(("train", "valid", "test"), parts):
        if part.size == 0:
            raise ValueError(f"{name} split is empty ({N} queries, fractions {fractions.tolist()})")
    return tuple(dataset.subset(part, name) for name, part in zip(("train", "valid", "test"), parts))


def save_dataset(dataset: Dataset, path) -> None:
    meta = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "d": dataset.d, "n": dataset.n,
            "m": dataset.m, "provenance": dataset.provenance}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.array(json.dumps(meta)),
            qids=np.array([s.qid for s in dataset.samples]),
            features=np.stack([s.features for s in dataset.samples]),
            groups=np.stack([s.groups.labels for s in dataset.samples]),
            relevance=np.stack([s.relevance for s in dataset.samples]),
        )


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != DATASET_FORMAT or meta.get("version") != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset format {meta.get('format')!r} "
                             f"version {meta.get('version')!r}")
        samples = [QuerySample(str(q), f, GroupAssignment(g), r)
                   for q, f, g, r in zip(z["qids"], z["features"], z["groups"], z["relevance"])]
    return Dataset(samples, meta["d"], meta["n"], meta["m"], meta["provenance"])
