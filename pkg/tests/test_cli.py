import csv
import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablemax import cli

IID = {"kind": "mixed_ma", "alpha": 1.2, "atoms": [{"weight": 1.0, "kernel": [1.0], "offset": 0}]}


def write_config(tmp_path, name="cfg.json", **overrides):
    d = {"representation": IID, "n_grid": [10, 100], "seed": 7, "replicates": 200, "output": str(tmp_path / "run")}
    d.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_bytes(outdir, skip=("manifest.json",)):
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir()) if p.name not in skip}


reps = st.sampled_from([
    IID,
    {"kind": "renewal", "alpha": 1.5, "gamma": 0.75, "head_probs": [0.2], "tail": "power"},
    {"kind": "product_shift", "alpha": 1.1, "law": "gaussian"},
    {"kind": "dyadic", "alpha": 0.9, "theta": 0.3},
])


@settings(max_examples=40, deadline=None)
@given(
    rep=reps,
    grid=st.lists(st.integers(1, 10**6), min_size=1, max_size=6, unique=True).map(sorted),
    seed=st.integers(0, 2**64 - 1),
    norm=st.one_of(st.sampled_from(["n_alpha", "bn"]), st.floats(0.1, 100.0)),
    replicates=st.integers(1, 5000),
    one_sided=st.booleans(),
)
def test_config_round_trip(rep, grid, seed, norm, replicates, one_sided):
    cfg = cli.ExperimentConfig.from_dict({"representation": rep, "n_grid": grid, "seed": seed,
                                          "normalization": norm, "replicates": replicates,
                                          "one_sided": one_sided})
    again = cli.ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.sha256() == cfg.sha256()


@pytest.mark.parametrize(
    "patch",
    [{"seed": None}, {"seed": -1}, {"seed": 2**64}, {"n_grid": []}, {"n_grid": [10, 5]}, {"n_grid": [0]},
     {"normalization": "sqrt"}, {"normalization": -1.0}, {"replicates": 0}, {"sampler": "fast"},
     {"representation": {"kind": "mixed_ma", "alpha": 2.5, "atoms": []}}, {"colour": "red"},
     {"truncation": {"rho": 2.0}}, {"epsilon": 1.0}, {"rn_samples": 10}, {"kac": {"system": "cycle"}}],
)
def test_bad_config_rejected(patch):
    d = {"representation": IID, "n_grid": [10], "seed": 1}
    d.update(patch)
    with pytest.raises(cli.ConfigError):
        cli.ExperimentConfig.from_dict(d)


def test_exit_code_config(tmp_path, capsys):
    assert run("--config", write_config(tmp_path, seed=None), "maxima") == 2
    assert "seed" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("--config", bad, "bn") == 2
    assert run("bn") == 2
    assert run("--workers", 0, "bn") == 2
    assert run("check", "--only", "99") == 2


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, seed=None)
    assert run("--config", cfg, "--seed", 5, "bn") == 0
    assert json.loads((tmp_path / "run" / "config.json").read_text())["seed"] == 5


def test_exit_code_engine(tmp_path):
    rep = {"kind": "mixed_ma", "alpha": 1.8, "atoms": [{"weight": 1.0, "kernel": [1.0], "offset": 0}]}
    cfg = write_config(tmp_path, representation=rep, n_grid=[5], replicates=50, sampler="lepage",
                       truncation={"j_min": 10, "j_cap": 20, "rho": 1e-4})
    assert run("--config", cfg, "maxima") == 3
    # the offending sample is flushed before exiting
    rows = list(csv.DictReader(open(tmp_path / "run" / "maxima.csv")))
    assert len(rows) == 50


def test_exit_code_acceptance_failure(tmp_path, capsys):
    out = tmp_path / "acc"
    code = run("--out", out, "check", "--only", "9")
    assert code == 4
    doc = json.loads((out / "acceptance.json").read_text())
    assert doc["pass"] is False and doc["criteria"] == {"9": False}
    assert "[FAIL] criterion 9" in capsys.readouterr().out


def test_check_passing_subset(tmp_path):
    out = tmp_path / "acc"
    assert run("--out", out, "check", "--only", "4,11") == 0
    man = json.loads((out / "manifest.json").read_text())
    assert "check" in man["timings"]


def test_report_on_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run("report", tmp_path / "empty") == 2
    assert "bn.csv" in capsys.readouterr().err


def test_outputs_reproducible_and_worker_independent(tmp_path):
    cfg = write_config(tmp_path)
    dirs = []
    for k, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"run{k}"
        for cmd in ("bn", "maxima", "simulate"):
            assert run("--config", cfg, "--out", out, "--workers", workers, cmd) == 0
        dirs.append(out)
    a, b, c = (read_bytes(d, skip=("manifest.json", "config.json")) for d in dirs)
    assert a == b == c
    assert {"bn.csv", "bn_fit.json", "maxima.csv", "verdict.json", "paths.jsonl"} <= set(a)


def test_manifest_checksums(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run("--config", cfg, "bn") == 0
    assert run("--config", cfg, "maxima") == 0
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["timings"]) == {"bn", "maxima"}
    assert set(man["config_sha256"]) == {"bn", "maxima"}
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "maxima.csv" in man["files"] and "bn.csv" in man["files"]


def test_report_reproducible(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    for cmd in ("bn", "maxima"):
        assert run("--config", cfg, cmd) == 0
    assert run("report", out) == 0
    first = read_bytes(out)
    assert run("report", out) == 0
    assert read_bytes(out) == first
    assert "report.md" in first
    pngs = [n for n in first if n.endswith(".png")]
    csvs = [n for n in first if n.startswith("plotdata_")]
    assert pngs and len(pngs) == len(csvs)
    for name in csvs:
        assert name.replace("plotdata_", "plot_").replace(".csv", ".png") in pngs


def test_gaussian_bn_slope(tmp_path):
    rep = {"kind": "product_shift", "alpha": 1.2, "law": "gaussian"}
    grid = [10**k for k in range(2, 7)]
    assert run("--config", write_config(tmp_path, representation=rep, n_grid=grid), "bn") == 0
    fit = json.loads((tmp_path / "run" / "bn_fit.json").read_text())
    # b_n^alpha ~ c log n for the sub-Gaussian family, so the fitted power is small
    assert 0 < fit["slope_exact"] < 0.1


def test_constant_dyadic_rows(tmp_path):
    rep = {"kind": "dyadic", "alpha": 1.0, "theta": 0.0}
    assert run("--config", write_config(tmp_path, representation=rep, n_grid=[2, 8, 64]), "bn") == 0
    rows = list(csv.DictReader(open(tmp_path / "run" / "bn.csv")))
    assert [float(r["bn"]) for r in rows] == [1.0, 1.0, 1.0]


def test_kac_outputs(tmp_path):
    cfg = write_config(tmp_path, n_grid=[50], kac={"system": "cycle", "K": 9, "A": [0, 4]})
    assert run("--config", cfg, "kac") == 0
    out = tmp_path / "run"
    rows = list(csv.DictReader(open(out / "kac.csv")))
    assert list(rows[0]) == ["k", "m_Ak", "m_Rk"] and len(rows) == 50
    assert json.loads((out / "kac_check.json").read_text())["pass"] is True
    rep = {"kind": "renewal", "alpha": 1.0, "gamma": 0.5, "head_probs": [], "tail": "power"}
    assert run("--config", write_config(tmp_path, representation=rep, n_grid=[100]), "kac") == 0
    assert run("--config", write_config(tmp_path, n_grid=[100]), "kac") == 2


def test_rn_output(tmp_path):
    rep = {"kind": "renewal", "alpha": 1.0, "gamma": 0.75, "head_probs": [], "tail": "power"}
    assert run("--config", write_config(tmp_path, representation=rep, n_grid=[100, 1000], rn_samples=2000),
               "rn") == 0
    rows = list(csv.DictReader(open(tmp_path / "run" / "rn.csv")))
    assert [int(r["n"]) for r in rows] == [100, 1000]
    assert all(0 <= float(r["estimate"]) <= 1 for r in rows)


def test_rademacher_verdict_is_null(tmp_path):
    rep = {"kind": "product_shift", "alpha": 1.2, "law": "rademacher"}
    cfg = write_config(tmp_path, representation=rep, n_grid=[10], normalization="bn",
                       truncation={"rho": 0.01})
    assert run("--config", cfg, "maxima") == 0
    v = json.loads((tmp_path / "run" / "verdict.json").read_text())
    assert v["pass"] is None and v["reference"] is None
