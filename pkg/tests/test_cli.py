import csv
import json

import numpy as np
import pytest

from owarank.cli import METRIC_COLUMNS, main, read_report, resolve_config, UsageError
from owarank.data import synthesize
from owarank.policy import position_bias

FAST = ["--list-size", "8", "--iters-infer", "60"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synthesize", "--out", str(root / "d"), "--num-queries", "30", "--list-size", "8",
                 "--dim", "4"]) == 0
    data = str(root / "d" / "dataset.npz")
    run = root / "run"
    assert main(["train", "--data", data, "--lambda", "0.5", "--epochs", "2", "--iters-train", "15",
                 "--out", str(run), *FAST]) == 0
    return root, data, run


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_precedence(self, tmp_path):
        f = tmp_path / "c.txt"
        f.write_text("# comment\nlambda = 0.25\nepochs = 3\nlist_size = 12\n")
        cfg = resolve_config("train", str(f), {"epochs": "7", "data": "synthetic"})
        assert cfg["lambda"] == [0.25] and cfg["epochs"] == 7 and cfg["list_size"] == 12
        assert cfg["iters_infer"] == 500  # default

    @pytest.mark.parametrize("text", ["bogus = 1\n", "no separator\n", "version = 9\n", "format = other\n",
                                      "lambda = x\n"])
    def test_bad_file(self, tmp_path, text):
        f = tmp_path / "c.txt"
        f.write_text(text)
        with pytest.raises(UsageError):
            resolve_config("train", str(f), {"data": "synthetic"})

    def test_flag_outside_command(self):
        with pytest.raises(UsageError):
            resolve_config("synthesize", None, {"epochs": "2"})

    def test_resolved_file_reproduces_run(self, workspace, tmp_path):
        root, data, run = workspace
        saved = run / "config-train.txt"
        assert saved.read_text().startswith("format = owarank-config\nversion = 1\n")
        again = tmp_path / "again"
        assert main(["train", "--config", str(saved), "--out", str(again)]) == 0
        assert (again / "history.csv").read_bytes() == (run / "history.csv").read_bytes()
        assert (again / "checkpoint.json").read_bytes() == (run / "checkpoint.json").read_bytes()


class TestExitCodes:
    def test_missing_data_names_flag(self, tmp_path, capsys):
        assert main(["train", "--out", str(tmp_path)]) == 2
        assert "--data" in capsys.readouterr().err

    def test_nonexistent_data(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 2
        assert "--data" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [
        ["bogus"],
        ["train", "--data", "synthetic", "--lambda", "1.5"],
        ["train", "--data", "synthetic", "--lambda", "0,1"],
        ["train", "--data", "synthetic", "--epochs", "x"],
        ["train", "--data", "synthetic", "--split", "0.5,0.5"],
        ["evaluate", "--data", "synthetic", "--checkpoint", "missing.json"],
    ])
    def test_usage_errors(self, tmp_path, argv):
        assert main([*argv, "--out", str(tmp_path)] if argv != ["bogus"] else argv) == 2

    def test_runtime_failure(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 qid:1 1:0.5\nnot a line\n")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path)]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_checkpoint_mismatch(self, workspace, tmp_path):
        _, _, run = workspace
        rc = main(["evaluate", "--data", "synthetic", "--dim", "5", "--checkpoint", str(run / "checkpoint.json"),
                   "--out", str(tmp_path), *FAST])
        assert rc == 2


class TestTrainEvaluate:
    def test_train_artifacts(self, workspace):
        _, _, run = workspace
        for name in ("checkpoint.json", "history.csv", "config-train.txt"):
            assert (run / name).exists()
        rows = read_csv(run / "history.csv")
        assert [r["epoch"] for r in rows] == ["0", "1", "2"]
        assert all(r["schema_version"] == "1" for r in rows)

    def test_evaluate_reports(self, workspace, tmp_path, capsys):
        _, data, run = workspace
        out = tmp_path / "ev"
        assert main(["evaluate", "--data", data, "--checkpoint", str(run / "checkpoint.json"), "--out", str(out),
                     "--per-query", "true", *FAST]) == 0
        rows = read_csv(out / "metrics.csv")
        assert list(rows[0]) == METRIC_COLUMNS
        assert float(rows[0]["lambda"]) == 0.5  # taken from the checkpoint
        doc = read_report(out / "metrics.json")
        assert doc["rows"][0]["dcg"] == float(rows[0]["dcg"])
        assert "dcg" in (out / "summary.txt").read_text()
        pq = read_csv(out / "per_query.csv")
        assert len(pq) >= 3 * 2 - 1
        for r in pq:
            assert float(r["violation"]) == pytest.approx(abs(float(r["exposure"]) - position_bias(8).mean()))
        again = tmp_path / "ev2"
        assert main(["evaluate", "--data", data, "--checkpoint", str(run / "checkpoint.json"), "--out", str(again),
                     "--workers", "2", *FAST]) == 0
        assert (again / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()
        assert not (again / "per_query.csv").exists()

    def test_report_version_check(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"format": "owarank-report", "version": 5}))
        with pytest.raises(ValueError):
            read_report(p)

    def test_lambda_zero_matches_argsort_violations(self, workspace, tmp_path):
        _, data, run = workspace
        out = tmp_path / "ev0"
        assert main(["evaluate", "--data", data, "--checkpoint", str(run / "checkpoint.json"), "--out", str(out),
                     "--lambda", "0", "--per-query", "true", *FAST]) == 0
        from owarank.model import load_checkpoint
        from owarank.policy import RankingPolicy, argsort_perm, fairness_violations
        from owarank.data import load_dataset, split

        model = load_checkpoint(run / "checkpoint.json")
        _, _, te = split(load_dataset(data), (0.8, 0.1, 0.1), 0)
        expected = [fairness_violations(RankingPolicy.deterministic(argsort_perm(model.scores(s.features))),
                                        s.groups, position_bias(8)) for s in te]
        got = [float(r["violation"]) for r in read_csv(out / "per_query.csv")]
        np.testing.assert_allclose(got, np.concatenate(expected), atol=1e-12)


class TestRank:
    def test_rankings(self, workspace, tmp_path):
        _, data, run = workspace
        out = tmp_path / "rk"
        argv = ["rank", "--data", data, "--checkpoint", str(run / "checkpoint.json"), "--samples", "4",
                "--seed", "3", *FAST]
        assert main([*argv, "--out", str(out)]) == 0
        lines = (out / "rankings.jsonl").read_text().splitlines()
        assert json.loads(lines[0])["format"] == "owarank-rankings"
        recs = [json.loads(x) for x in lines[1:]]
        assert len(recs) == 30
        for r in recs:
            assert len(r["rankings"]) == 4
            assert all(sorted(x) == list(range(8)) for x in r["rankings"])
        assert main([*argv, "--out", str(tmp_path / "rk2")]) == 0
        assert (tmp_path / "rk2" / "rankings.jsonl").read_bytes() == (out / "rankings.jsonl").read_bytes()

    def test_lambda_zero_single_sample_is_argsort(self, workspace, tmp_path):
        _, data, run = workspace
        out = tmp_path / "rk0"
        assert main(["rank", "--data", data, "--checkpoint", str(run / "checkpoint.json"), "--lambda", "0",
                     "--out", str(out), *FAST]) == 0
        from owarank.model import load_checkpoint
        from owarank.data import load_dataset
        from owarank.policy import argsort_perm

        model = load_checkpoint(run / "checkpoint.json")
        ds = load_dataset(data)
        recs = [json.loads(x) for x in (out / "rankings.jsonl").read_text().splitlines()[1:]]
        for s, r in zip(ds, recs):
            assert r["rankings"] == [argsort_perm(model.scores(s.features)).tolist()]


class TestOtherCommands:
    def test_precompute(self, workspace, tmp_path):
        _, data, _ = workspace
        path = tmp_path / "t.jsonl"
        assert main(["precompute", "--data", data, "--lambda", "0.3", "--targets", str(path),
                     "--out", str(tmp_path), *FAST]) == 0
        lines = path.read_text().splitlines()
        assert json.loads(lines[0])["format"] == "owarank-targets"
        assert len(lines) == 31

    def test_synthesize_letor_roundtrip(self, tmp_path):
        # LETOR input path: groups from training-split quantiles
        ds = synthesize(num_queries=20, n=10, d=3, m=2, seed=0)
        lines = [f"{float(y)!r} qid:{s.qid} " + " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(x))
                 for s in ds for y, x in zip(s.relevance, s.features)]
        letor = tmp_path / "data.txt"
        letor.write_text("\n".join(lines) + "\n")
        out = tmp_path / "run"
        assert main(["train", "--data", str(letor), "--list-size", "8", "--epochs", "1", "--iters-train", "5",
                     "--iters-infer", "20", "--out", str(out)]) == 0
        assert (out / "checkpoint.json").exists()

    def test_benchmark_csv(self, tmp_path):
        out = tmp_path / "bench"
        assert main(["benchmark", "--sizes", "10,20", "--lambda", "0,0.5", "--queries", "1", "--iters-infer", "20",
                     "--iters-train", "5", "--dim", "3", "--out", str(out)]) == 0
        rows = read_csv(out / "benchmark.csv")
        assert len(rows) == 4
        assert list(rows[0]) == ["schema_version", "n", "lambda", "iters_infer", "iters_train",
                                 "infer_seconds_per_query", "train_seconds_per_query", "seconds_per_iteration"]
        assert all(float(r["infer_seconds_per_query"]) > 0 for r in rows)

    def test_sweep_rows(self, workspace, tmp_path):
        _, data, _ = workspace
        out = tmp_path / "sw"
        assert main(["sweep", "--data", data, "--lambda", "0,0.25,0.5,0.75,1", "--seed", "0,1", "--epochs", "0",
                     "--out", str(out), *FAST]) == 0
        rows = read_csv(out / "metrics.csv")
        assert len(rows) == 10
        assert [(float(r["lambda"]), int(r["seed"])) for r in rows][:3] == [(0.0, 0), (0.0, 1), (0.25, 0)]
        assert len(read_csv(out / "timing.csv")) == 10
        assert read_report(out / "metrics.json")["kind"] == "frontier"
