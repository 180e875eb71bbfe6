from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from pssim import cli
from pssim.assign import ConsistencyError
from pssim.config import ConfigError, parse_config, site_label


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def ising_cfg(beta=0.15, replicas=50, seed=7, sites=([0], [1]), **sampler):
    s = {"sites": list(sites), "replicas": replicas, "seed": seed}
    s.update(sampler)
    return {"schema": 1, "model": {"model": "ising", "d": 1, "beta": beta}, "sampler": s}


def pair_cfg(ht=0.1, seed=3):
    return {"schema": 1,
            "model": {"model": "ising-pair", "d": 1, "beta": 0.05, "field_tilde": {"type": "constant", "h": ht}},
            "sampler": {"sites": [[0], [1]], "replicas": 200, "seed": seed}}


def test_config_validation():
    cfg = parse_config(ising_cfg())
    assert cfg.sampler.sites == [(0,), (1,)] and cfg.d == 1
    bad = [
        {"model": {"model": "ising"}},
        {"schema": 1},
        dict(ising_cfg(), sampler={"sites": [], "seed": 1}),
        dict(ising_cfg(), sampler={"sites": [[0, 1]], "seed": 1}),
        dict(ising_cfg(), sampler={"sites": [[0]], "replicas": 0, "seed": 1}),
        dict(ising_cfg(), sampler={"sites": [[0]], "seed": -3}),
        dict(ising_cfg(), sampler={"sites": [[0]], "seed": 1, "backend": "gpu"}),
    ]
    for obj in bad:
        with pytest.raises(ConfigError):
            parse_config(obj)
    assert site_label((1, -2)) == "(1,-2)"


def test_sample_beta_zero(tmp_path, capsys):
    out = tmp_path / "o.jsonl"
    rc = cli.main(["sample", "--config", write(tmp_path, ising_cfg(beta=0.0, replicas=100, sites=([0],))),
                   "--out", str(out)])
    assert rc == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(lines) == 100 and all(x["n_stop"] == 1 for x in lines)
    assert [x["replica"] for x in lines] == list(range(100))
    summary = json.loads(capsys.readouterr().err)["summary"]
    assert summary["replicas"] == 100 and summary["n_stop_histogram"] == {"1": 100}


def test_sample_reproducible(tmp_path):
    cfg = write(tmp_path, ising_cfg(replicas=300))
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert cli.main(["sample", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["sample", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    cli.main(["sample", "--config", cfg, "--seed", "8", "--out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_sample_exit_codes(tmp_path, capsys, monkeypatch):
    cfg = ising_cfg()
    del cfg["sampler"]["seed"]
    assert cli.main(["sample", "--config", write(tmp_path, cfg)]) == 2
    assert cli.main(["sample", "--config", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()
    assert cli.main(["sample", "--config", write(tmp_path, ising_cfg(beta=0.5))]) == 3
    assert "2.28" in capsys.readouterr().err
    assert cli.main(["sample", "--config", write(tmp_path, ising_cfg(beta=0.5, step_cap=10))]) == 0

    def boom(*a, **k):
        raise ConsistencyError("forced")

    monkeypatch.setattr(cli, "sample_replicas", boom)
    assert cli.main(["sample", "--config", write(tmp_path, ising_cfg())]) == 4


def test_sample_capped_reports_bias(tmp_path, capsys):
    assert cli.main(["sample", "--config", write(tmp_path, ising_cfg(replicas=20, step_cap=8))]) == 0
    cap = capsys.readouterr()
    lines = [json.loads(x) for x in cap.out.splitlines()]
    assert all("bias_bound" in x and x["n_stop"] <= 8 for x in lines)
    assert json.loads(cap.err)["summary"]["steps_bias_bound"] > 0


def test_sample_timed(tmp_path, capsys):
    rc = cli.main(["sample", "--config", write(tmp_path, ising_cfg(replicas=20, t=0.5, initial="iid"))])
    assert rc == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert all("t_stop" in x and x["t_stop"] <= 0.5 for x in lines)


def test_diagnose_ladder(tmp_path, capsys):
    assert cli.main(["diagnose", "--config", write(tmp_path, ising_cfg())]) == 0
    out = capsys.readouterr().out
    assert "gamma            0.873937837355" in out
    csv_rows = out.split("\n\n", 1)[1].strip().splitlines()
    assert csv_rows[0] == "orbit,k,alpha,lambda,partial_sum,|V(k)|,gamma_contribution"
    last = csv_rows[-1].split(",")
    assert last[1] == "1" and float(last[4]) == 1.0


def test_dbar_identical_pair_zero(tmp_path, capsys):
    assert cli.main(["dbar", "--config", write(tmp_path, pair_cfg(ht=0.0))]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[-1].split(",")[:2] == ["sup", "0.0"]
    assert cli.main(["dbar", "--config", write(tmp_path, pair_cfg()), "--n", "100", "--sites", "[[0],[4]]"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert [r.split(",")[0] for r in rows] == ["site", "(0)", "(4)", "sup"]
    assert cli.main(["dbar", "--config", write(tmp_path, ising_cfg())]) == 2


def test_validate_suites(tmp_path, capsys):
    cfg = write(tmp_path, ising_cfg(replicas=2000))
    for suite in ("ladder", "law", "bounds"):
        assert cli.main(["validate", "--config", cfg, "--suite", suite]) == 0
        out = capsys.readouterr().out
        assert out and all(line.startswith("PASS") for line in out.splitlines())
    gc = {"schema": 1, "model": {"model": "gibbs-cont", "beta": 0.1}, "sampler": {"sites": [[0]], "seed": 1}}
    assert cli.main(["validate", "--config", write(tmp_path, gc, "g.json"), "--suite", "ladder"]) == 1


@pytest.mark.skipif(shutil.which("pssim") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write(tmp_path, ising_cfg(replicas=5))
    a = subprocess.run(["pssim", "sample", "--config", cfg], capture_output=True, text=True, check=True)
    b = subprocess.run([sys.executable, "-m", "pssim.cli", "sample", "--config", cfg], capture_output=True,
                       text=True, check=True)
    assert a.stdout == b.stdout and len(a.stdout.splitlines()) == 5
