from __future__ import annotations

import json
from dataclasses import replace

import pytest

from stella.app.cli import main
from stella.app.config import RunConfig
from stella.app.datasets import ingest, load_dataset, read_dataset, toy_records, write_toy
from stella.errors import ConfigError, SchemaError, TooManyMalformed
from stella.evalharness.results import read_results


# -- config ---------------------------------------------------------------------------


def test_config_round_trip_is_byte_identical():
    cfg = replace(RunConfig(), seed=9, m=3, sweep=replace(RunConfig().sweep, sizes=[2, 4]))
    text = cfg.to_json()
    assert RunConfig.from_json(text).to_json() == text


def test_partial_config_merges_defaults():
    cfg = RunConfig.from_json('{"seed": 4, "calibration": {"max_iterations": 6}}')
    assert cfg.seed == 4 and cfg.calibration["max_iterations"] == 6
    assert cfg.calibration["aggregation_k"] == 3
    assert cfg.calibration_config().seed == 4


@pytest.mark.parametrize("bad", [
    '{"candidate_size": 6}',
    '{"backend": "carrier-pigeon"}',
    '{"profile": "nope"}',
    '{"scheme": "emoji"}',
    '{"unknown_key": 1}',
    '{"calibration": {"entropy_epsilon": 0}}',
    '{"sweep": {"heatmap_size": 6}}',
    '{"format_version": 2}',
    "[1, 2]",
    "not json",
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_json(bad)


def test_digest_ignores_output_location():
    a = RunConfig()
    assert a.digest() == replace(a, output_dir="elsewhere", parallelism=8).digest()
    assert a.digest() != replace(a, seed=1).digest()


def test_shipped_config_loads():
    from pathlib import Path

    cfg = RunConfig.load(Path(__file__).parents[1] / "configs" / "toy.json")
    assert cfg.backend == "simulated" and cfg.dataset == "toy"


# -- datasets ------------------------------------------------------------------------


def _write_lines(path, lines):
    path.write_text("".join(json.dumps(x) + "\n" for x in lines), encoding="utf-8")
    return path


def test_ingest_labels_and_order(tmp_path):
    path = _write_lines(tmp_path / "d.jsonl", [
        {"format_version": 1},
        {"user_id": "u", "item_id": "a", "title": "A", "rating": 4, "timestamp": 2},
        {"user_id": "u", "item_id": "b", "title": "B", "rating": 3, "timestamp": 1},
        {"user_id": "v", "item_id": "c", "title": "C", "rating": 1, "label": "positive", "timestamp": 0},
        {"user_id": "u", "item_id": "c", "title": "C", "label": False, "timestamp": 3},
    ])
    users = ingest(path)
    assert [x.item.id for x in users["u"].interactions] == ["b", "a", "c"]
    assert [x.label for x in users["u"].interactions] == ["negative", "positive", "negative"]
    assert users["v"].interactions[0].positive


def test_ingest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest(tmp_path / "missing.jsonl")
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(SchemaError):
        ingest(tmp_path / "empty.jsonl")
    _write_lines(tmp_path / "v2.jsonl", [{"format_version": 2}])
    with pytest.raises(SchemaError):
        ingest(tmp_path / "v2.jsonl")


def test_malformed_threshold(tmp_path):
    good = [{"user_id": f"u{k}", "item_id": f"i{k}", "title": "T", "rating": 5, "timestamp": k} for k in range(200)]
    path = tmp_path / "d.jsonl"
    _write_lines(path, good)
    with open(path, "a") as fh:
        fh.write("{broken\n")
        fh.write('{"user_id": "x"}\n')
    _, report = read_dataset(path)
    assert report.malformed == 2 and report.interactions == 200
    with open(path, "a") as fh:
        fh.write("nope\n")
    with pytest.raises(TooManyMalformed):
        ingest(path)


def test_toy_dataset_shape(tmp_path):
    ds, report = load_dataset("toy")
    assert report.users == 50 and report.malformed == 0
    assert all(len(h.positives) >= 7 for h in ds.users.values())
    # the shipped file is exactly what the generator writes
    fresh = write_toy(tmp_path / "toy.jsonl")
    from stella.app.datasets import toy_path

    assert fresh.read_bytes() == toy_path().read_bytes()
    assert toy_records(3, seed=1) == toy_records(3, seed=1)


# -- CLI -----------------------------------------------------------------------------


def _run(*argv):
    return main(list(argv) + ["--log-level", "ERROR"])


def test_cli_evaluate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert _run("evaluate", "--out", str(out), "--max-users", "30") == 0
    rows = read_results(out / "results.csv")
    assert {r.method for r in rows} == {"raw", "bootstrapping", "stella"}
    assert (out / "positions.svg").exists() and (out / "config.json").exists()
    assert "stella" in capsys.readouterr().out


def test_cli_probe_then_evaluate_matches_inline(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("evaluate", "--out", str(a), "--seed", "5", "--max-users", "40") == 0
    assert _run("probe", "--out", str(b), "--seed", "5", "--max-users", "40") == 0
    assert _run("evaluate", "--out", str(b), "--seed", "5", "--max-users", "40",
                "--transition", str(b / "transition.csv")) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_cli_missing_api_key(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("STELLA_API_KEY", raising=False)
    assert _run("probe", "--backend", "remote", "--out", str(tmp_path)) == 2
    assert "STELLA_API_KEY" in capsys.readouterr().err


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"candidate_size": 9}')
    assert _run("evaluate", "--config", str(cfg)) == 2
    assert _run("evaluate", "--config", str(tmp_path / "absent.json")) == 2


def test_cli_runtime_error_exit_code(tmp_path):
    assert _run("ingest", str(tmp_path / "absent.jsonl")) == 1
    assert _run("heatmap", "--size", "7", "--out", str(tmp_path)) == 1


def test_cli_ingest_prints_stats(capsys):
    assert _run("ingest") == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["users"] == 50 and stats["malformed"] == 0


def test_cli_sweeps_and_calibrate(tmp_path):
    out = tmp_path / "o"
    common = ["--out", str(out), "--max-users", "20"]
    assert _run("sweep-size", "--sizes", "2,3,5", *common) == 0
    assert _run("sweep-template", "--schemes", "arabic_numerals,roman_numerals", *common) == 0
    assert _run("sweep-ensemble", "--m-values", "1,3", *common) == 0
    assert _run("heatmap", "--size", "3", *common) == 0
    assert _run("ablate-tm", *common) == 0
    assert _run("calibrate", *common) == 0
    for name in ["size_sweep.svg", "template_sweep.svg", "ensemble_length.svg", "heatmap.svg",
                 "size_sweep.csv", "template_sweep.csv", "ensemble_length.csv", "heatmap.csv",
                 "ablation_tm.csv", "calibration_trace.jsonl"]:
        assert (out / name).exists(), name
    rows = read_results(out / "ensemble_length.csv")
    assert {r.metric for r in rows if r.metric.startswith("hit")} == {"hit_at_1@m=1", "hit_at_1@m=3"}


def test_cli_simulate(tmp_path):
    out = tmp_path / "sim"
    assert _run("simulate", "--out", str(out), "--max-users", "20", "--profile", "degrading") == 0
    experiments = {r.experiment for r in read_results(out / "results.csv")}
    assert experiments == {"main", "ablation_tm", "size_sweep", "template_sweep", "ensemble_length", "heatmap"}
    assert _run("simulate", "--backend", "remote", "--out", str(out)) == 2


def test_cli_rejects_bad_lists():
    with pytest.raises(SystemExit):
        main(["sweep-size", "--sizes", "two"])
