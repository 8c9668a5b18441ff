"""Command-line entry point: ``owarank <command> [options]``.

Every setting is a flat key.  Values come from built-in defaults, then an
optional ``--config`` file of ``key = value`` lines, then command-line flags
(``--list-size 20`` sets ``list_size``).  The resolved configuration is
echoed to stderr and written next to the outputs, and feeding that file back
through ``--config`` reproduces the run.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    assign_groups,
    load_dataset,
    normalize_lists,
    read_letor,
    save_dataset,
    split,
    synthesize,
)
from .model import (
    TrainConfig,
    backward,
    evaluate,
    forward,
    init_mlp,
    load_checkpoint,
    predict_policy,
    save_checkpoint,
    train,
)
from .policy import GroupAssignment, item_exposures, position_bias, sample_ranking
from .solver import FwConfig, solve
from .spo import compute_target, precompute_targets, spo_plus

log = logging.getLogger("owarank")

CONFIG_FORMAT = "owarank-config"
REPORT_FORMAT = "owarank-report"
RANKINGS_FORMAT = "owarank-rankings"
SCHEMA_VERSION = 1

METRIC_COLUMNS = ["schema_version", "lambda", "seed", "queries", "dcg", "mean_violation", "max_violation",
                  "regret", "iters_infer"]
TIMING_COLUMNS = ["schema_version", "lambda", "seed", "train_seconds_per_query", "infer_seconds_per_query",
                  "iters_train", "iters_infer"]
HISTORY_COLUMNS = ["schema_version", "epoch", "train_spo_loss", "valid_regret", "valid_dcg",
                   "valid_mean_violation", "valid_max_violation"]
PER_QUERY_COLUMNS = ["schema_version", "lambda", "seed", "qid", "group", "exposure", "violation"]
BENCH_COLUMNS = ["schema_version", "n", "lambda", "iters_infer", "iters_train", "infer_seconds_per_query",
                 "train_seconds_per_query", "seconds_per_iteration"]


class UsageError(Exception):
    """Bad flags, config or paths; exits with status 2."""


def _floats(s: str) -> list[float]:
    return [float(v) for v in str(s).split(",") if v.strip()]


def _lambdas(s: str):
    # "checkpoint": take lambda from the loaded model (evaluate, rank)
    return None if str(s).strip() == "checkpoint" else _floats(s)


def _ints(s: str) -> list[int]:
    return [int(v) for v in str(s).split(",") if v.strip()]


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s: str):
    return None if str(s).strip().lower() in ("", "none", "auto") else int(s)


def _opt_path(s: str):
    return None if str(s).strip().lower() in ("", "none") else str(s)


@dataclass(frozen=True)
class Key:
    parse: object
    default: str
    commands: str
    help: str


ALL = "train evaluate rank precompute synthesize benchmark sweep"
DATA = "train evaluate rank precompute synthesize sweep"
SPLIT = "train evaluate precompute sweep"
SOLVE = "train evaluate rank precompute benchmark sweep"
FIT = "train sweep"

KEYS: dict[str, Key] = {
    "out": Key(str, "owarank-out", ALL, "output directory"),
    "data": Key(_opt_path, "", DATA.replace("synthesize ", ""),
                "dataset: a .npz from 'synthesize', a LETOR text file (.gz ok), or 'synthetic'"),
    "lambda": Key(_lambdas, "0.5", SOLVE, "fairness weight in [0, 1]; comma list for sweep and benchmark; "
                  "'checkpoint' reuses the model's value (default for evaluate and rank)"),
    "seed": Key(_ints, "0", ALL, "model/sampling seed; comma list for sweep"),
    "list_size": Key(int, "20", DATA, "items per query (longer lists truncated, shorter dropped)"),
    "groups": Key(int, "2", DATA, "number of protected groups"),
    "group_feature": Key(int, "0", DATA, "0-based feature column defining the groups"),
    "iters_train": Key(int, "100", "train benchmark sweep", "Frank-Wolfe iterations inside training"),
    "iters_infer": Key(int, "500", SOLVE, "Frank-Wolfe iterations at inference and for targets"),
    "beta0": Key(float, "1.0", SOLVE, "initial smoothing parameter"),
    "weight_schedule": Key(str, "linear", SOLVE, "OWA weight schedule: linear, geometric or uniform"),
    "size_weighted": Key(_bool, "true", SOLVE, "weight each group's exposure by its size inside the OWA"),
    "workers": Key(int, "1", "evaluate sweep", "worker processes for per-query evaluation"),
    "learning_rate": Key(float, "0.01", FIT, "Adam learning rate"),
    "batch_size": Key(int, "16", FIT, "queries per Adam step"),
    "epochs": Key(int, "10", FIT, "training epochs"),
    "hidden": Key(_opt_int, "auto", FIT, "first hidden width (auto: next power of two >= d, max 256)"),
    "num_queries": Key(int, "200", DATA, "synthetic data: number of queries"),
    "dim": Key(int, "16", DATA + " benchmark", "synthetic data: feature dimension"),
    "noise": Key(float, "0.0", DATA, "synthetic data: relevance noise scale"),
    "data_seed": Key(int, "0", DATA + " benchmark", "synthetic data seed"),
    "split": Key(_floats, "0.8,0.1,0.1", SPLIT, "train,valid,test fractions"),
    "split_seed": Key(int, "0", SPLIT, "seed of the query shuffle before splitting"),
    "checkpoint": Key(_opt_path, "", "evaluate rank", "model checkpoint (default: <out>/checkpoint.json)"),
    "targets": Key(_opt_path, "", SPLIT, "target cache file (default: <out>/targets-lambda<value>.jsonl)"),
    "per_query": Key(_bool, "false", "evaluate sweep", "also write per-query, per-group violations"),
    "samples": Key(int, "1", "rank", "sampled rankings per query"),
    "sizes": Key(_ints, "20,40,60,80,100", "benchmark", "list sizes to time"),
    "queries": Key(int, "5", "benchmark", "random queries per list size"),
}


def resolve_config(command: str, file_path: str | None, flags: dict[str, str]) -> dict:
    """Merge defaults, config file and flags (in increasing precedence) for ``command``."""
    raw = {k: spec.default for k, spec in KEYS.items() if command in spec.commands.split()}
    if command in ("evaluate", "rank"):
        raw["lambda"] = "checkpoint"
    if file_path:
        try:
            text = Path(file_path).read_text()
        except OSError as exc:
            raise UsageError(f"--config: cannot read {file_path}: {exc.strerror}") from None
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise UsageError(f"--config {file_path}:{lineno}: expected 'key = value'")
            if key == "format":
                if value != CONFIG_FORMAT:
                    raise UsageError(f"--config {file_path}: not an {CONFIG_FORMAT} file")
                continue
            if key == "version":
                if value != str(SCHEMA_VERSION):
                    raise UsageError(f"--config {file_path}: unsupported version {value}")
                continue
            if key == "command":
                continue
            if key not in KEYS:
                raise UsageError(f"--config {file_path}:{lineno}: unknown key {key!r}")
            if key in raw:
                raw[key] = value
    for key, value in flags.items():
        if key not in raw:
            raise UsageError(f"--{key.replace('_', '-')} does not apply to '{command}'")
        raw[key] = value
    cfg = {"_raw": raw}
    for key, value in raw.items():
        try:
            cfg[key] = KEYS[key].parse(value)
        except ValueError as exc:
            raise UsageError(f"--{key.replace('_', '-')}: {exc}") from None
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    def bad(key, msg):
        raise UsageError(f"--{key.replace('_', '-')}: {msg}")

    if "lambda" in cfg and cfg["lambda"] is None and command not in ("evaluate", "rank"):
        bad("lambda", "'checkpoint' only applies to evaluate and rank")
    if cfg.get("lambda") is not None:
        if not cfg["lambda"]:
            bad("lambda", "no value given")
        if any(not 0.0 <= v <= 1.0 for v in cfg["lambda"]):
            bad("lambda", "values must lie in [0, 1]")
        if command not in ("sweep", "benchmark") and len(cfg["lambda"]) != 1:
            bad("lambda", f"'{command}' takes a single value")
    if not cfg["seed"]:
        bad("seed", "no value given")
    if command != "sweep" and len(cfg["seed"]) != 1:
        bad("seed", f"'{command}' takes a single value")
    for key in ("list_size", "iters_infer", "iters_train", "workers", "batch_size", "num_queries", "dim",
                "samples", "queries"):
        if key in cfg and cfg[key] < 1:
            bad(key, "must be at least 1")
    if cfg.get("list_size", 2) < 2:
        bad("list_size", "must be at least 2")
    if cfg.get("groups", 1) < 1:
        bad("groups", "must be at least 1")
    if cfg.get("epochs", 0) < 0:
        bad("epochs", "must be non-negative")
    for key in ("beta0", "learning_rate"):
        if key in cfg and not cfg[key] > 0:
            bad(key, "must be positive")
    if "split" in cfg and (len(cfg["split"]) != 3 or abs(sum(cfg["split"]) - 1) > 1e-9
                           or min(cfg["split"]) < 0):
        bad("split", "expected three non-negative fractions summing to 1")
    if cfg.get("weight_schedule", "linear") not in ("linear", "geometric", "uniform"):
        bad("weight_schedule", "expected linear, geometric or uniform")
    if "sizes" in cfg and (not cfg["sizes"] or min(cfg["sizes"]) < 2):
        bad("sizes", "list sizes must be at least 2")
    if "data" in cfg and not cfg["data"]:
        bad("data", "a dataset is required (path, or 'synthetic')")


def format_config(command: str, cfg: dict) -> str:
    lines = [f"format = {CONFIG_FORMAT}", f"version = {SCHEMA_VERSION}", f"command = {command}"]
    lines += [f"{k} = {v}" for k, v in sorted(cfg["_raw"].items())]
    return "\n".join(lines) + "\n"


def train_config(cfg: dict, lam: float, seed: int) -> TrainConfig:
    return TrainConfig(lam=lam, learning_rate=cfg.get("learning_rate", 0.01), batch_size=cfg.get("batch_size", 16),
                       epochs=cfg.get("epochs", 10), T_train=cfg.get("iters_train", 100),
                       T_infer=cfg["iters_infer"], beta0=cfg["beta0"], weight_schedule=cfg["weight_schedule"],
                       size_weighted=cfg["size_weighted"], hidden=cfg.get("hidden"), seed=seed)


def fw_config(cfg: dict, lam: float, T: int | None = None) -> FwConfig:
    return FwConfig(lam=lam, T=cfg["iters_infer"] if T is None else T, beta0=cfg["beta0"],
                    weight_schedule=cfg["weight_schedule"], size_weighted=cfg["size_weighted"])


# ---------------------------------------------------------------- data


def _synthetic(cfg: dict) -> Dataset:
    return synthesize(num_queries=cfg["num_queries"], n=cfg["list_size"], d=cfg["dim"], m=cfg["groups"],
                      noise=cfg["noise"], seed=cfg["data_seed"], group_feature=cfg["group_feature"])


def _check_dataset(ds: Dataset, cfg: dict, path: str) -> Dataset:
    if ds.n != cfg["list_size"] or ds.m != cfg["groups"]:
        raise UsageError(f"--data {path}: dataset has list size {ds.n} and {ds.m} groups, "
                         f"but --list-size {cfg['list_size']} and --groups {cfg['groups']} were requested")
    return ds


def load_full(cfg: dict) -> Dataset:
    """The whole dataset, for commands that do not split (rank)."""
    path = cfg["data"]
    if path == "synthetic":
        return _synthetic(cfg)
    p = Path(path)
    if not p.exists():
        raise UsageError(f"--data: {path} does not exist")
    if p.suffix == ".npz":
        return _check_dataset(load_dataset(p), cfg, path)
    records = read_letor(p)
    records, thresholds = assign_groups(records, cfg["group_feature"], cfg["groups"])
    return normalize_lists(records, cfg["list_size"], cfg["groups"],
                           {"source": str(p), "group_feature": cfg["group_feature"],
                            "thresholds": thresholds.tolist()})


def load_splits(cfg: dict) -> tuple[Dataset, Dataset, Dataset]:
    """Train/valid/test splits; LETOR group thresholds come from the training queries only."""
    path = cfg["data"]
    fractions, seed = cfg["split"], cfg["split_seed"]
    if path == "synthetic" or Path(path).suffix == ".npz":
        return split(load_full(cfg), fractions, seed)
    p = Path(path)
    if not p.exists():
        raise UsageError(f"--data: {path} does not exist")
    records = read_letor(p)
    if not records:
        raise UsageError(f"--data: {path} holds no queries")
    perm = np.random.default_rng(seed).permutation(len(records))
    cuts = np.round(np.cumsum(fractions)[:2] * len(records)).astype(int)
    parts = [[records[i] for i in part] for part in np.split(perm, cuts)]
    _, thresholds = assign_groups(parts[0], cfg["group_feature"], cfg["groups"])
    prov = {"source": str(p), "group_feature": cfg["group_feature"], "thresholds": thresholds.tolist()}
    out = []
    for name, part in zip(("train", "valid", "test"), parts):
        grouped, _ = assign_groups(part, cfg["group_feature"], cfg["groups"], thresholds)
        out.append(normalize_lists(grouped, cfg["list_size"], cfg["groups"], {**prov, "subset": name}))
    return tuple(out)


def _targets_path(cfg: dict, out: Path, lam: float) -> Path:
    if cfg.get("targets"):
        return Path(cfg["targets"])
    return out / f"targets-lambda{lam:g}.jsonl"


# ---------------------------------------------------------------- writers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(SCHEMA_VERSION if c == "schema_version" else row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def write_json(path: Path, kind: str, payload: dict) -> None:
    doc = {"format": REPORT_FORMAT, "kind": kind, "version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_report(path) -> dict:
    """Load a JSON report written by this tool, rejecting unknown formats and versions."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != REPORT_FORMAT or doc.get("version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported report format {doc.get('format')!r} version {doc.get('version')!r}")
    return doc


def _summary(rows: list[dict]) -> str:
    head = f"{'lambda':>7} {'seed':>5} {'dcg':>9} {'mean_viol':>10} {'max_viol':>10} {'regret':>9}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['lambda']:7.3g} {r['seed']:5d} {r['dcg']:9.4f} {r['mean_violation']:10.5f} "
                     f"{r['max_violation']:10.5f} {r['regret']:9.5f}")
    return "\n".join(lines) + "\n"


def _metrics_row(ev: dict, lam: float, seed: int, T: int) -> dict:
    return {"lambda": lam, "seed": seed, "queries": int(ev["dcg"].size), "dcg": float(ev["dcg"].mean()),
            "mean_violation": float(ev["mean_violation"].mean()),
            "max_violation": float(ev["max_violation"].mean()), "regret": float(ev["regret"].mean()),
            "iters_infer": T}


def _per_query_rows(model, samples, fw: FwConfig, lam: float, seed: int) -> list[dict]:
    rows = []
    for s in samples:
        b = position_bias(s.n)
        sol = predict_policy(model, s.features, s.groups, fw, record_trace=False)
        for gid, e in zip(s.groups.group_ids, sol.group_exposures):
            rows.append({"lambda": lam, "seed": seed, "qid": s.qid, "group": int(gid), "exposure": float(e),
                         "violation": float(abs(e - b.mean()))})
    return rows


# ---------------------------------------------------------------- commands


def cmd_synthesize(cfg: dict, out: Path) -> None:
    ds = _synthetic(cfg)
    save_dataset(ds, out / "dataset.npz")
    log.info("wrote %d queries to %s", len(ds), out / "dataset.npz")


def cmd_precompute(cfg: dict, out: Path) -> None:
    lam = cfg["lambda"][0]
    samples = [s for part in load_splits(cfg) for s in part]
    path = _targets_path(cfg, out, lam)
    precompute_targets(samples, fw_config(cfg, lam), path)
    log.info("targets for %d queries in %s", len(samples), path)


def _fit(cfg: dict, out: Path, lam: float, seed: int, parts, tag: str = ""):
    tr, va, te = parts
    tcfg = train_config(cfg, lam, seed)
    cache = precompute_targets(list(tr) + list(va) + list(te), tcfg.fw_infer, _targets_path(cfg, out, lam))
    t0 = time.perf_counter()
    model, history = train(tr, va, tcfg, cache)
    train_time = (time.perf_counter() - t0) / max(1, len(tr) * tcfg.epochs)
    write_csv(out / f"history{tag}.csv", HISTORY_COLUMNS, history)
    return model, cache, train_time


def cmd_train(cfg: dict, out: Path) -> None:
    lam, seed = cfg["lambda"][0], cfg["seed"][0]
    model, _, train_time = _fit(cfg, out, lam, seed, load_splits(cfg))
    save_checkpoint(model, out / "checkpoint.json")
    write_csv(out / "timing.csv", TIMING_COLUMNS,
              [{"lambda": lam, "seed": seed, "train_seconds_per_query": train_time,
                "iters_train": cfg["iters_train"], "iters_infer": cfg["iters_infer"]}])
    log.info("checkpoint written to %s", out / "checkpoint.json")


def _load_model(cfg: dict, out: Path, d: int):
    path = Path(cfg["checkpoint"] or out / "checkpoint.json")
    if not path.exists():
        raise UsageError(f"--checkpoint: {path} does not exist")
    try:
        model = load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"--checkpoint: {exc}") from None
    if model.params.dims[0] != d:
        raise UsageError(f"--checkpoint {path}: model expects {model.params.dims[0]} features, data has {d}")
    return model


def _lambda_for(cfg: dict, model) -> float:
    if cfg["lambda"] is None:
        log.info("using the checkpoint's lambda %g", model.config.lam)
        return model.config.lam
    return cfg["lambda"][0]


def _report(out: Path, rows: list[dict], timing: list[dict], per_query: list[dict] | None, kind: str) -> None:
    write_csv(out / "metrics.csv", METRIC_COLUMNS, rows)
    write_json(out / "metrics.json", kind, {"columns": METRIC_COLUMNS[1:],
                                            "rows": [{c: r[c] for c in METRIC_COLUMNS[1:]} for r in rows]})
    write_csv(out / "timing.csv", TIMING_COLUMNS, timing)
    (out / "summary.txt").write_text(_summary(rows))
    if per_query is not None:
        write_csv(out / "per_query.csv", PER_QUERY_COLUMNS, per_query)
    sys.stdout.write(_summary(rows))


def cmd_evaluate(cfg: dict, out: Path) -> None:
    _, _, te = load_splits(cfg)
    model = _load_model(cfg, out, te.d)
    lam, seed = _lambda_for(cfg, model), model.config.seed
    fw = fw_config(cfg, lam)
    cache = precompute_targets(te, fw, _targets_path(cfg, out, lam))
    ev = evaluate(model, te, fw, cache, workers=cfg["workers"])
    rows = [_metrics_row(ev, lam, seed, fw.T)]
    timing = [{"lambda": lam, "seed": seed, "infer_seconds_per_query": float(ev["seconds"].mean()),
               "iters_infer": fw.T}]
    per_query = _per_query_rows(model, te, fw, lam, seed) if cfg["per_query"] else None
    _report(out, rows, timing, per_query, "metrics")


def cmd_sweep(cfg: dict, out: Path) -> None:
    parts = load_splits(cfg)
    rows, timing, per_query = [], [], [] if cfg["per_query"] else None
    for lam in cfg["lambda"]:
        for seed in cfg["seed"]:
            tag = f"-lambda{lam:g}-seed{seed}"
            model, cache, train_time = _fit(cfg, out, lam, seed, parts, tag)
            fw = model.config.fw_infer
            ev = evaluate(model, parts[2], fw, cache, workers=cfg["workers"])
            rows.append(_metrics_row(ev, lam, seed, fw.T))
            timing.append({"lambda": lam, "seed": seed, "train_seconds_per_query": train_time,
                           "infer_seconds_per_query": float(ev["seconds"].mean()),
                           "iters_train": cfg["iters_train"], "iters_infer": fw.T})
            if per_query is not None:
                per_query += _per_query_rows(model, parts[2], fw, lam, seed)
            log.info("lambda %g seed %d: %s", lam, seed, rows[-1])
    _report(out, rows, timing, per_query, "frontier")


def cmd_rank(cfg: dict, out: Path) -> None:
    ds = load_full(cfg)
    model = _load_model(cfg, out, ds.d)
    lam, k = _lambda_for(cfg, model), cfg["samples"]
    fw = fw_config(cfg, lam)
    rng = np.random.default_rng(cfg["seed"][0])
    lines = [json.dumps({"format": RANKINGS_FORMAT, "version": SCHEMA_VERSION, "lambda": lam, "samples": k})]
    for s in ds:
        sol = predict_policy(model, s.features, s.groups, fw, record_trace=False)
        rankings = [sample_ranking(sol.policy, rng).tolist() for _ in range(k)]
        lines.append(json.dumps({
            "qid": s.qid,
            "rankings": rankings,
            "group_ids": s.groups.group_ids.tolist(),
            "group_exposures": sol.group_exposures.tolist(),
            "item_exposures": item_exposures(sol.policy, position_bias(s.n)).tolist(),
        }))
    (out / "rankings.jsonl").write_text("\n".join(lines) + "\n")
    log.info("ranked %d queries into %s", len(ds), out / "rankings.jsonl")


def cmd_benchmark(cfg: dict, out: Path) -> None:
    rows = []
    rng = np.random.default_rng(cfg["data_seed"])
    T_inf, T_tr = cfg["iters_infer"], cfg["iters_train"]
    for n in cfg["sizes"]:
        b = position_bias(n)
        params = init_mlp(cfg["dim"], seed=cfg["seed"][0])
        for lam in cfg["lambda"]:
            t_inf = t_tr = 0.0
            for _ in range(cfg["queries"]):
                X = rng.standard_normal((n, cfg["dim"]))
                y = np.logaddexp(0.0, rng.standard_normal(n))
                groups = GroupAssignment(rng.integers(0, 2, size=n))
                target = compute_target(y, groups, b, fw_config(cfg, lam))
                t0 = time.perf_counter()
                solve(forward(params, X), groups, b, fw_config(cfg, lam), record_trace=False)
                t1 = time.perf_counter()
                res = spo_plus(forward(params, X), y, groups, b, fw_config(cfg, lam, T_tr), target)
                backward(params, X, res.grad)
                t2 = time.perf_counter()
                t_inf += t1 - t0
                t_tr += t2 - t1
            q = cfg["queries"]
            rows.append({"n": n, "lambda": lam, "iters_infer": T_inf, "iters_train": T_tr,
                         "infer_seconds_per_query": t_inf / q, "train_seconds_per_query": t_tr / q,
                         "seconds_per_iteration": t_inf / q / T_inf})
            log.info("n=%d lambda=%g: %.4fs infer, %.4fs train per query", n, lam, t_inf / q, t_tr / q)
    write_csv(out / "benchmark.csv", BENCH_COLUMNS, rows)


COMMANDS = {
    "train": (cmd_train, "train a scorer through the fair ranking layer"),
    "evaluate": (cmd_evaluate, "score a checkpoint on the test split"),
    "rank": (cmd_rank, "sample rankings from a checkpoint's policies"),
    "precompute": (cmd_precompute, "solve and cache ground-truth targets"),
    "synthesize": (cmd_synthesize, "write a synthetic dataset"),
    "benchmark": (cmd_benchmark, "time the solver and the gradient across list sizes"),
    "sweep": (cmd_sweep, "train and evaluate over a lambda grid and seeds"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owarank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="flat 'key = value' file; flags override it")
        p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
        for key, spec in KEYS.items():
            if name in spec.commands.split():
                p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                               help=f"{spec.help} (default: {spec.default or 'none'})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
    try:
        cfg = resolve_config(args.command, args.config, flags)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        text = format_config(args.command, cfg)
        sys.stderr.write(text)
        (out / f"config-{args.command}.txt").write_text(text)
        COMMANDS[args.command][0](cfg, out)
    except UsageError as exc:
        sys.stderr.write(f"owarank {args.command}: error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - report, exit 1
        log.debug("failure", exc_info=True)
        sys.stderr.write(f"owarank {args.command}: failed: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
